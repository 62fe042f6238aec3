//! Parameter storage, small layers built on the [`Tape`], and the Adam optimizer.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};

static NEXT_STORE_TAG: AtomicU64 = AtomicU64::new(1);

fn fresh_tag() -> u64 {
    NEXT_STORE_TAG.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// A named, ordered set of parameter tensors.
///
/// Every store carries a process-unique tag so a [`Tape`] can tell which
/// store a parameter leaf came from. Clones and deserialized copies get a
/// fresh tag.
#[derive(Debug, Serialize, Deserialize)]
pub struct ParamStore {
    #[serde(skip, default = "fresh_tag")]
    tag: u64,
    params: Vec<Param>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            tag: fresh_tag(),
            params: self.params.clone(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            tag: fresh_tag(),
            params: Vec::new(),
        }
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) -> ParamId {
        assert_eq!(data.len(), rows * cols, "parameter data/shape mismatch");
        self.params.push(Param {
            name: name.into(),
            rows,
            cols,
            data,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, rows, cols, vec![0.0; rows * cols])
    }

    /// Glorot-scaled normal initialisation.
    pub fn normal<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        gain: f64,
        rng: &mut R,
    ) -> ParamId {
        let std = gain * (2.0 / (rows + cols) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        self.add(name, rows, cols, data)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.data.iter())
            .map(|x| x * x)
            .sum()
    }

    /// Flat view of every scalar, in store order.
    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_scalars());
        let mut k = 0;
        for p in &mut self.params {
            let n = p.data.len();
            p.data.copy_from_slice(&values[k..k + n]);
            k += n;
        }
    }

    /// Polyak averaging: `self ← (1 − tau)·self + tau·source`.
    pub fn soft_update_from(&mut self, source: &ParamStore, tau: f64) {
        for (dst, src) in self.params.iter_mut().zip(&source.params) {
            for (d, s) in dst.data.iter_mut().zip(&src.data) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        }
    }

    pub fn copy_values_from(&mut self, source: &ParamStore) {
        for (dst, src) in self.params.iter_mut().zip(&source.params) {
            dst.data.copy_from_slice(&src.data);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.data.iter().all(|x| x.is_finite()))
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct StoreGrads {
    grads: Vec<Vec<f64>>,
}

impl StoreGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn add_assign(&mut self, other: &StoreGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.grads
            .iter_mut()
            .flat_map(|g| g.iter_mut())
            .for_each(|x| *x *= c);
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|g| g.iter().copied()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flat_map(|g| g.iter()).all(|x| x.is_finite())
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &StoreGrads) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, p) in store.params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads.grads[k]);
            for j in 0..p.data.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p.data[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Affine layer `y = x·Wᵀ + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.normal(format!("{name}.weight"), out_dim, in_dim, 1.0, rng);
        let bias = bias.then(|| store.zeros(format!("{name}.bias"), 1, out_dim));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore, trainable: bool) -> BoundLinear {
        let load = |tape: &mut Tape, id| {
            if trainable {
                tape.param(store, id)
            } else {
                tape.frozen(store, id)
            }
        };
        BoundLinear {
            weight: load(tape, self.weight),
            bias: self.bias.map(|b| load(tape, b)),
        }
    }
}

/// A [`Linear`] whose parameters have been placed on a tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let y = tape.linear(x, self.weight);
        match self.bias {
            Some(b) => tape.add_row_bias(y, b),
            None => y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
    Silu,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Silu => tape.silu(x),
        }
    }
}

/// Feed-forward network with a shared hidden activation and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Self { layers, activation }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore, trainable: bool) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape, store, trainable)).collect(),
            activation: self.activation,
        }
    }

    /// Plain forward pass on one input row, without gradients.
    pub fn eval(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let w = &store.get(layer.weight).data;
            let mut out: Vec<f64> = (0..layer.out_dim)
                .map(|j| crate::autodiff::dot(&w[j * layer.in_dim..(j + 1) * layer.in_dim], &h))
                .collect();
            if let Some(b) = layer.bias {
                for (o, bj) in out.iter_mut().zip(&store.get(b).data) {
                    *o += bj;
                }
            }
            if i + 1 < self.layers.len() {
                for o in &mut out {
                    *o = match self.activation {
                        Activation::Tanh => o.tanh(),
                        Activation::Relu => o.max(0.0),
                        Activation::Silu => *o * crate::autodiff::sigmoid(*o),
                    };
                }
            }
            h = out;
        }
        h
    }

    /// Zeroes the final layer so the network starts as the zero map.
    pub fn zero_output(&self, store: &mut ParamStore) {
        let last = self.layers.last().expect("non-empty mlp");
        store.get_mut(last.weight).data.iter_mut().for_each(|x| *x = 0.0);
        if let Some(b) = last.bias {
            store.get_mut(b).data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<BoundLinear>,
    activation: Activation,
}

impl BoundMlp {
    /// Every weight and bias node of the network.
    pub fn params(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(l.weight).chain(l.bias))
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h);
            if i + 1 < n {
                h = self.activation.apply(tape, h);
            }
        }
        h
    }
}

/// Gated recurrent unit cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Input projections for the update, reset and candidate gates (with bias).
    pub wz: Linear,
    pub wr: Linear,
    pub wn: Linear,
    /// Recurrent projections; the candidate one carries its own bias.
    pub uz: Linear,
    pub ur: Linear,
    pub un: Linear,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let (i, h) = (input_dim, hidden_dim);
        Self {
            input_dim,
            hidden_dim,
            wz: Linear::new(store, &format!("{name}.wz"), i, h, true, rng),
            wr: Linear::new(store, &format!("{name}.wr"), i, h, true, rng),
            wn: Linear::new(store, &format!("{name}.wn"), i, h, true, rng),
            uz: Linear::new(store, &format!("{name}.uz"), h, h, false, rng),
            ur: Linear::new(store, &format!("{name}.ur"), h, h, false, rng),
            un: Linear::new(store, &format!("{name}.un"), h, h, true, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore, trainable: bool) -> BoundGru {
        BoundGru {
            wz: self.wz.bind(tape, store, trainable),
            wr: self.wr.bind(tape, store, trainable),
            wn: self.wn.bind(tape, store, trainable),
            uz: self.uz.bind(tape, store, trainable),
            ur: self.ur.bind(tape, store, trainable),
            un: self.un.bind(tape, store, trainable),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundGru {
    wz: BoundLinear,
    wr: BoundLinear,
    wn: BoundLinear,
    uz: BoundLinear,
    ur: BoundLinear,
    un: BoundLinear,
}

impl BoundGru {
    /// `h' = (1 − z)⊙n + z⊙h` with `n = tanh(W_n x + r⊙(U_n h + b))`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let zx = self.wz.forward(tape, x);
        let zh = self.uz.forward(tape, h);
        let z = tape.add(zx, zh);
        let z = tape.sigmoid(z);

        let rx = self.wr.forward(tape, x);
        let rh = self.ur.forward(tape, h);
        let r = tape.add(rx, rh);
        let r = tape.sigmoid(r);

        let nx = self.wn.forward(tape, x);
        let nh = self.un.forward(tape, h);
        let nh = tape.mul(r, nh);
        let n = tape.add(nx, nh);
        let n = tape.tanh(n);

        let keep = tape.mul(z, h);
        let one_minus_z = tape.one_minus(z);
        let fresh = tape.mul(one_minus_z, n);
        tape.add(fresh, keep)
    }
}
