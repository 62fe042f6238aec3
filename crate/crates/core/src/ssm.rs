//! Selective state-space decoder.
//!
//! Each of the `D` channels carries `N` diagonal states. At every step the
//! previous predicted state is embedded into channel space and squashed with
//! `tanh` (`u`, bounded so the autoregressive loop cannot blow up), the step
//! size `Δ` and the projections `B`, `C` are computed from `u` (selective
//! mode) or taken as fixed parameters, the continuous diagonal `A` is
//! discretized with a zero-order hold, and
//!
//! ```text
//! h_t = Ā ⊙ h_{t-1} + B̄ u_t
//! y_t = C h_t + D_skip ⊙ u_t
//! ŝ_t = ŝ_{t-1} + κ W_out (y_t ⊙ σ(W_gate u_t))
//! ```
//!
//! The initial state is a learned projection of the encoder latent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{expm1_over_x, sigmoid, softplus, Tape, Var};
use crate::domain::{STATE_DIM, STATE_SCALE};
use crate::error::{Error, Result};
use crate::nn::{BoundLinear, Linear, ParamId, ParamStore};

/// Zero-order-hold discretization of a diagonal system:
/// `Ā = exp(ΔA)`, `B̄ = (ΔA)⁻¹(exp(ΔA) − I)·ΔB`, which tends to `ΔB` as `A → 0`.
pub fn discretize(a: &[f64], b: &[f64], delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("step size must be positive, got {delta}")));
    }
    if a.len() != b.len() {
        return Err(Error::invalid("A and B diagonals differ in length"));
    }
    let abar = a.iter().map(|&ai| (delta * ai).exp()).collect();
    let bbar = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| delta * expm1_over_x(delta * ai) * bi)
        .collect();
    Ok((abar, bbar))
}

/// Time-invariant discrete system with diagonal `Ā` (N), dense `B̄` (N×D) and `C` (D×N).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSsm {
    pub abar: Vec<f64>,
    pub bbar: Vec<f64>,
    pub c: Vec<f64>,
    pub state_dim: usize,
    pub io_dim: usize,
}

impl DiscreteSsm {
    /// One recurrence step: returns `(h_t, y_t)`.
    pub fn step(&self, h: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, d) = (self.state_dim, self.io_dim);
        let h_next: Vec<f64> = (0..n)
            .map(|i| {
                self.abar[i] * h[i] + (0..d).map(|j| self.bbar[i * d + j] * u[j]).sum::<f64>()
            })
            .collect();
        let y = (0..d)
            .map(|j| (0..n).map(|i| self.c[j * n + i] * h_next[i]).sum())
            .collect();
        (h_next, y)
    }
}

/// Inclusive scan of the first-order recurrence `h_t = a_t ⊙ h_{t-1} + b_t`
/// with `h_{-1} = h0`, evaluated by recursive doubling over the associative
/// operator `(a1, b1) ∘ (a2, b2) = (a1 a2, a2 b1 + b2)`.
pub fn associative_scan(a: &[Vec<f64>], b: &[Vec<f64>], h0: &[f64]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut acc_a: Vec<Vec<f64>> = a.to_vec();
    let mut acc_b: Vec<Vec<f64>> = b.to_vec();
    let mut offset = 1;
    while offset < n {
        let prev_a = acc_a.clone();
        let prev_b = acc_b.clone();
        for t in offset..n {
            let (la, lb) = (&prev_a[t - offset], &prev_b[t - offset]);
            let (ra, rb) = (&prev_a[t], &prev_b[t]);
            acc_a[t] = la.iter().zip(ra).map(|(x, y)| x * y).collect();
            acc_b[t] = lb
                .iter()
                .zip(ra)
                .zip(rb)
                .map(|((l, r), b)| r * l + b)
                .collect();
        }
        offset *= 2;
    }
    acc_a
        .iter()
        .zip(&acc_b)
        .map(|(ca, cb)| ca.iter().zip(cb).zip(h0).map(|((x, y), h)| x * h + y).collect())
        .collect()
}

pub fn sequential_scan(a: &[Vec<f64>], b: &[Vec<f64>], h0: &[f64]) -> Vec<Vec<f64>> {
    let mut h = h0.to_vec();
    a.iter()
        .zip(b)
        .map(|(at, bt)| {
            for k in 0..h.len() {
                h[k] = at[k] * h[k] + bt[k];
            }
            h.clone()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Channel dimension `D`.
    pub channels: usize,
    /// Diagonal states per channel `N`.
    pub state_size: usize,
    /// Encoder latent dimension feeding the initial state.
    pub latent_dim: usize,
    /// Input-dependent `Δ`, `B`, `C`.
    pub selective: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            state_size: 16,
            latent_dim: 64,
            selective: true,
        }
    }
}

/// Fixed factor on the head output: per-step state changes are about a tenth
/// of the normalized state, so the head works at unit scale.
pub const STEP_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    Selective {
        delta: Linear,
        b: Linear,
        c: Linear,
    },
    Fixed {
        delta_bias: ParamId,
        b: ParamId,
        c: ParamId,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub embed: Linear,
    pub selection: Selection,
    pub a_log: ParamId,
    pub d_skip: ParamId,
    pub gate: Linear,
    pub out_head: Linear,
    pub init_state: Linear,
}

fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

impl Decoder {
    pub fn new<R: Rng>(store: &mut ParamStore, config: DecoderConfig, rng: &mut R) -> Self {
        let (d, n) = (config.channels, config.state_size);
        let embed = Linear::new(store, "decoder.embed", STATE_DIM, d, true, rng);
        let delta_init: Vec<f64> = (0..d)
            .map(|_| {
                let dt = (rng.random_range(0.001f64.ln()..0.1f64.ln())).exp();
                inverse_softplus(dt)
            })
            .collect();
        let selection = if config.selective {
            let delta = Linear::new(store, "decoder.delta", d, d, true, rng);
            store.get_mut(delta.weight).data.iter_mut().for_each(|w| *w *= 0.1);
            store.get_mut(delta.bias.expect("bias")).data = delta_init;
            Selection::Selective {
                delta,
                b: Linear::new(store, "decoder.b", d, n, false, rng),
                c: Linear::new(store, "decoder.c", d, n, false, rng),
            }
        } else {
            let delta_bias = store.add("decoder.delta_bias", 1, d, delta_init);
            Selection::Fixed {
                delta_bias,
                b: store.normal("decoder.b", 1, n, 1.0, rng),
                c: store.normal("decoder.c", 1, n, 1.0, rng),
            }
        };
        let a_log = store.add(
            "decoder.a_log",
            1,
            d * n,
            (0..d * n).map(|k| ((k % n) as f64 + 1.0).ln()).collect(),
        );
        let d_skip = store.add("decoder.d_skip", 1, d, vec![1.0; d]);
        let gate = Linear::new(store, "decoder.gate", d, d, true, rng);
        let out_head = Linear::new(store, "decoder.out", d, STATE_DIM, true, rng);
        // Zero head: the untrained decoder holds the last state instead of
        // feeding a random update back into itself.
        store.get_mut(out_head.weight).data.iter_mut().for_each(|w| *w = 0.0);
        let init_state = Linear::new(store, "decoder.init", config.latent_dim, d * n, true, rng);
        Self {
            config,
            embed,
            selection,
            a_log,
            d_skip,
            gate,
            out_head,
            init_state,
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore, trainable: bool) -> BoundDecoder {
        let p = |tape: &mut Tape, id| {
            if trainable {
                tape.param(store, id)
            } else {
                tape.frozen(store, id)
            }
        };
        let selection = match &self.selection {
            Selection::Selective { delta, b, c } => BoundSelection::Selective {
                delta: delta.bind(tape, store, trainable),
                b: b.bind(tape, store, trainable),
                c: c.bind(tape, store, trainable),
            },
            Selection::Fixed { delta_bias, b, c } => BoundSelection::Fixed {
                delta_bias: p(tape, *delta_bias),
                b: p(tape, *b),
                c: p(tape, *c),
            },
        };
        let a_log = p(tape, self.a_log);
        let a_exp = tape.exp(a_log);
        let a = tape.neg(a_exp);
        BoundDecoder {
            channels: self.config.channels,
            state_size: self.config.state_size,
            embed: self.embed.bind(tape, store, trainable),
            selection,
            a,
            d_skip: p(tape, self.d_skip),
            gate: self.gate.bind(tape, store, trainable),
            out_head: self.out_head.bind(tape, store, trainable),
            init_state: self.init_state.bind(tape, store, trainable),
        }
    }

    /// Continuous diagonal `A = −exp(a_log)`, laid out channel-major.
    pub fn continuous_a(&self, store: &ParamStore) -> Vec<f64> {
        store.get(self.a_log).data.iter().map(|x| -x.exp()).collect()
    }

    fn linear_eval(store: &ParamStore, l: &Linear, x: &[f64]) -> Vec<f64> {
        let w = &store.get(l.weight).data;
        let mut out: Vec<f64> = (0..l.out_dim)
            .map(|j| crate::autodiff::dot(&w[j * l.in_dim..(j + 1) * l.in_dim], x))
            .collect();
        if let Some(b) = l.bias {
            for (o, bj) in out.iter_mut().zip(&store.get(b).data) {
                *o += bj;
            }
        }
        out
    }

    /// Embedding of a normalized state into channel space.
    pub fn embed_eval(&self, store: &ParamStore, s: &[f64]) -> Vec<f64> {
        Self::linear_eval(store, &self.embed, s).into_iter().map(f64::tanh).collect()
    }

    /// Per-step recurrence coefficients for embedded input `u`:
    /// `(Ā, B̄ u, C)` with `Ā` and `B̄ u` laid out channel-major (`D·N`).
    pub fn step_coefficients(&self, store: &ParamStore, u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (d, n) = (self.config.channels, self.config.state_size);
        let (delta, b, c) = match &self.selection {
            Selection::Selective { delta, b, c } => (
                Self::linear_eval(store, delta, u).into_iter().map(softplus).collect::<Vec<_>>(),
                Self::linear_eval(store, b, u),
                Self::linear_eval(store, c, u),
            ),
            Selection::Fixed { delta_bias, b, c } => (
                store.get(*delta_bias).data.iter().map(|&x| softplus(x)).collect(),
                store.get(*b).data.clone(),
                store.get(*c).data.clone(),
            ),
        };
        let a = self.continuous_a(store);
        let mut abar = vec![0.0; d * n];
        let mut bu = vec![0.0; d * n];
        for ch in 0..d {
            let (ab, bb) = discretize(&a[ch * n..(ch + 1) * n], &b, delta[ch]).expect("softplus is positive");
            for k in 0..n {
                abar[ch * n + k] = ab[k];
                bu[ch * n + k] = bb[k] * u[ch];
            }
        }
        (abar, bu, c)
    }

    /// Readout `y = C h + D_skip ⊙ u` per channel.
    pub fn readout(&self, store: &ParamStore, h: &[f64], c: &[f64], u: &[f64]) -> Vec<f64> {
        let (d, n) = (self.config.channels, self.config.state_size);
        let skip = &store.get(self.d_skip).data;
        (0..d)
            .map(|ch| (0..n).map(|k| c[k] * h[ch * n + k]).sum::<f64>() + skip[ch] * u[ch])
            .collect()
    }

    /// Runs the recurrence over a given input sequence step by step.
    pub fn scan_sequential(&self, store: &ParamStore, inputs: &[Vec<f64>], h0: &[f64]) -> Vec<Vec<f64>> {
        let mut h = h0.to_vec();
        inputs
            .iter()
            .map(|s| {
                let u = self.embed_eval(store, s);
                let (abar, bu, c) = self.step_coefficients(store, &u);
                for k in 0..h.len() {
                    h[k] = abar[k] * h[k] + bu[k];
                }
                self.readout(store, &h, &c, &u)
            })
            .collect()
    }

    /// Same outputs as [`Decoder::scan_sequential`], with the hidden states
    /// obtained from [`associative_scan`].
    pub fn scan_parallel(&self, store: &ParamStore, inputs: &[Vec<f64>], h0: &[f64]) -> Vec<Vec<f64>> {
        let embedded: Vec<Vec<f64>> = inputs.iter().map(|s| self.embed_eval(store, s)).collect();
        let coeffs: Vec<_> = embedded.iter().map(|u| self.step_coefficients(store, u)).collect();
        let a: Vec<Vec<f64>> = coeffs.iter().map(|c| c.0.clone()).collect();
        let b: Vec<Vec<f64>> = coeffs.iter().map(|c| c.1.clone()).collect();
        let hs = associative_scan(&a, &b, h0);
        hs.iter()
            .zip(&coeffs)
            .zip(&embedded)
            .map(|((h, (_, _, c)), u)| self.readout(store, h, c, u))
            .collect()
    }

    /// Autoregressive rollout without a tape: only the recurrent state and
    /// the last output are kept, so every step costs the same. States are
    /// normalized, as in [`BoundDecoder::rollout`].
    pub fn predict(
        &self,
        store: &ParamStore,
        latent: &[f64],
        last_state: &[f64],
        horizon: usize,
    ) -> Result<Vec<[f64; STATE_DIM]>> {
        if horizon < 1 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let mut h = Self::linear_eval(store, &self.init_state, latent);
        let mut s = [0.0; STATE_DIM];
        s.copy_from_slice(last_state);
        let mut states = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let u = self.embed_eval(store, &s);
            let (abar, bu, c) = self.step_coefficients(store, &u);
            for k in 0..h.len() {
                h[k] = abar[k] * h[k] + bu[k];
            }
            let y = self.readout(store, &h, &c, &u);
            let z = Self::linear_eval(store, &self.gate, &u);
            let gated: Vec<f64> = y.iter().zip(&z).map(|(y, z)| y * sigmoid(*z)).collect();
            let delta_s = Self::linear_eval(store, &self.out_head, &gated);
            for (sk, dk) in s.iter_mut().zip(&delta_s) {
                *sk += STEP_SCALE * dk;
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::Divergence {
                    step: t,
                    message: "non-finite predicted state".into(),
                });
            }
            states.push(s);
        }
        Ok(states)
    }
}

#[derive(Clone, Debug)]
enum BoundSelection {
    Selective {
        delta: BoundLinear,
        b: BoundLinear,
        c: BoundLinear,
    },
    Fixed {
        delta_bias: Var,
        b: Var,
        c: Var,
    },
}

#[derive(Clone, Debug)]
pub struct BoundDecoder {
    channels: usize,
    state_size: usize,
    embed: BoundLinear,
    selection: BoundSelection,
    a: Var,
    d_skip: Var,
    gate: BoundLinear,
    out_head: BoundLinear,
    init_state: BoundLinear,
}

/// Output of an autoregressive rollout; states are normalized by [`STATE_SCALE`].
#[derive(Clone, Debug)]
pub struct Rollout {
    pub states: Vec<Var>,
}

impl Rollout {
    /// Predicted coordinates in meters (scene-local frame).
    pub fn positions(&self, tape: &Tape) -> Vec<[f64; 2]> {
        self.states
            .iter()
            .map(|&s| {
                let v = tape.value(s);
                [v[0] * STATE_SCALE[0], v[1] * STATE_SCALE[1]]
            })
            .collect()
    }

    /// Denormalized predicted state vectors.
    pub fn state_features(&self, tape: &Tape) -> Vec<[f64; STATE_DIM]> {
        self.states
            .iter()
            .map(|&s| crate::domain::denormalize_state(tape.value(s)))
            .collect()
    }
}

impl BoundDecoder {
    /// Initial SSM state seeded from the encoder latent.
    pub fn initial_state(&self, tape: &mut Tape, latent: Var) -> Var {
        self.init_state.forward(tape, latent)
    }

    /// One recurrence step consuming the previous (normalized) state.
    pub fn step(&self, tape: &mut Tape, h: Var, s_prev: Var) -> (Var, Var) {
        let n = self.state_size;
        let d = self.channels;
        let u = self.embed.forward(tape, s_prev);
        let u = tape.tanh(u);
        let (delta, b, c) = match &self.selection {
            BoundSelection::Selective { delta, b, c } => {
                let dl = delta.forward(tape, u);
                (tape.softplus(dl), b.forward(tape, u), c.forward(tape, u))
            }
            BoundSelection::Fixed { delta_bias, b, c } => (tape.softplus(*delta_bias), *b, *c),
        };
        let delta_rep = tape.repeat_each(delta, n);
        let delta_a = tape.mul(delta_rep, self.a);
        let abar = tape.exp(delta_a);
        let phi = tape.expm1_over_x(delta_a);
        let b_tiled = tape.tile(b, d);
        let bbar = tape.mul(delta_rep, phi);
        let bbar = tape.mul(bbar, b_tiled);
        let u_rep = tape.repeat_each(u, n);
        let drive = tape.mul(bbar, u_rep);
        let decay = tape.mul(abar, h);
        let h_next = tape.add(decay, drive);

        let c_tiled = tape.tile(c, d);
        let ch = tape.mul(h_next, c_tiled);
        let y = tape.group_sum(ch, n);
        let skip = tape.mul(self.d_skip, u);
        let y = tape.add(y, skip);
        let z = self.gate.forward(tape, u);
        let z = tape.sigmoid(z);
        let gated = tape.mul(y, z);
        let delta_s = self.out_head.forward(tape, gated);
        let delta_s = tape.scale(delta_s, STEP_SCALE);
        let s_next = tape.add(s_prev, delta_s);
        (h_next, s_next)
    }

    /// Fully autoregressive rollout from the last observed (normalized) state.
    /// With `teacher` set, step `t` consumes the ground-truth state `t − 1`.
    pub fn rollout(
        &self,
        tape: &mut Tape,
        latent: Var,
        last_state: &[f64],
        horizon: usize,
        teacher: Option<&[[f64; STATE_DIM]]>,
    ) -> Result<Rollout> {
        if horizon < 1 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let mut h = self.initial_state(tape, latent);
        let mut s = tape.row(last_state);
        let mut states = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let input = match (teacher, t) {
                (Some(gt), t) if t > 0 => tape.row(&gt[t - 1]),
                _ => s,
            };
            let (h_next, s_next) = self.step(tape, h, input);
            if tape.value(s_next).iter().any(|x| !x.is_finite()) {
                return Err(Error::Divergence {
                    step: t,
                    message: "non-finite predicted state".into(),
                });
            }
            h = h_next;
            s = s_next;
            states.push(s);
        }
        Ok(Rollout { states })
    }
}
