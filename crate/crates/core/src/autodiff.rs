//! Reverse-mode automatic differentiation over dense row-major `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Values are 2-D
//! (`rows × cols`); a vector is a single row. Parameters enter the tape as
//! copies tagged with the id of the [`ParamStore`] they came from, so one
//! tape can mix trainable and frozen parameter sets and route gradients back
//! to the right store.

use crate::nn::{ParamId, ParamStore, StoreGrads};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    AddRowBias(Var, Var),
    Linear(Var, Var),
    MulScalar(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Softplus(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Silu(Var),
    Expm1OverX(Var),
    Square(Var),
    Concat(Vec<Var>),
    SliceCols { src: Var, start: usize },
    Sum(Var),
    SumCols(Var),
    GroupSum { src: Var, group: usize },
    RepeatEach { src: Var, times: usize },
    Tile { src: Var, times: usize },
    Dot(Var, Var),
    LogSumExp(Var),
    Softmax(Var),
    WeightedSum { weights: Var, items: Vec<Var> },
    Min(Var, Var),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

#[derive(Debug, Clone, Copy)]
struct ParamLeaf {
    var: Var,
    store_tag: u64,
    id: ParamId,
}

/// Series threshold below which `(e^z - 1)/z` and its derivative use a Taylor expansion.
const EXPM1_SERIES_EPS: f64 = 1e-5;

/// `(e^z - 1) / z`, continuous at zero where it equals 1.
pub fn expm1_over_x(z: f64) -> f64 {
    if z.abs() < EXPM1_SERIES_EPS {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

fn expm1_over_x_deriv(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z * (1.0 / 30.0 + z / 144.0)))
    } else {
        let e = z.exp();
        (z * e - e + 1.0) / (z * z)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<ParamLeaf>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let node = &self.nodes[v.0];
        assert_eq!(node.value.len(), 1, "scalar() on a non-scalar node");
        node.value[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn constant(&mut self, value: Vec<f64>, rows: usize, cols: usize) -> Var {
        assert_eq!(value.len(), rows * cols, "constant shape mismatch");
        self.push(value, rows, cols, Op::Leaf)
    }

    /// Constant row vector.
    pub fn row(&mut self, value: &[f64]) -> Var {
        self.push(value.to_vec(), 1, value.len(), Op::Leaf)
    }

    /// Trainable parameter; its gradient is routed back to `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        let var = self.push(p.data.clone(), p.rows, p.cols, Op::Leaf);
        self.params.push(ParamLeaf {
            var,
            store_tag: store.tag(),
            id,
        });
        var
    }

    /// Parameter entering as a constant (no gradient).
    pub fn frozen(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.data.clone(), p.rows, p.cols, Op::Leaf)
    }

    fn same_shape(&self, a: Var, b: Var) -> (usize, usize) {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        assert!(
            na.rows == nb.rows && na.cols == nb.cols,
            "shape mismatch: {}x{} vs {}x{}",
            na.rows,
            na.cols,
            nb.rows,
            nb.cols
        );
        (na.rows, na.cols)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (r, c) = self.same_shape(a, b);
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(value, r, c, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let value = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(value, r, c, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, f64::min, Op::Min(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::AddConst(a))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        self.add_const(n, 1.0)
    }

    /// Adds a `1 × m` bias to every row of an `n × m` value.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(b), (1, c), "bias shape mismatch");
        let bias = &self.nodes[b.0].value;
        let value = self.nodes[x.0]
            .value
            .chunks(c)
            .flat_map(|row| row.iter().zip(bias).map(|(x, b)| x + b))
            .collect();
        self.push(value, r, c, Op::AddRowBias(x, b))
    }

    /// `x · wᵀ` for `x: n × k`, `w: m × k`.
    pub fn linear(&mut self, x: Var, w: Var) -> Var {
        let (n, k) = self.shape(x);
        let (m, kw) = self.shape(w);
        assert_eq!(k, kw, "linear: input width {k} vs weight width {kw}");
        let xs = &self.nodes[x.0].value;
        let ws = &self.nodes[w.0].value;
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let xi = &xs[i * k..(i + 1) * k];
            for j in 0..m {
                let wj = &ws[j * k..(j + 1) * k];
                out[i * m + j] = dot(xi, wj);
            }
        }
        self.push(out, n, m, Op::Linear(x, w))
    }

    /// Multiplies every element of `x` by the scalar node `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let (r, c) = self.shape(x);
        let value = self.nodes[x.0].value.iter().map(|v| v * sv).collect();
        self.push(value, r, c, Op::MulScalar(x, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, softplus, Op::Softplus(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(
            a,
            |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.map(a, |x| x * sigmoid(x), Op::Silu(a))
    }

    /// Elementwise `(e^z - 1) / z` with the removable singularity at 0 filled in.
    pub fn expm1_over_x(&mut self, a: Var) -> Var {
        self.map(a, expm1_over_x, Op::Expm1OverX(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    /// Column-wise concatenation of values that share a row count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape(p);
                assert_eq!(r, rows, "concat row mismatch");
                c
            })
            .sum();
        let mut value = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let c = self.nodes[p.0].cols;
                value.extend_from_slice(&self.nodes[p.0].value[i * c..(i + 1) * c]);
            }
        }
        self.push(value, rows, cols, Op::Concat(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Var {
        let (rows, cols) = self.shape(src);
        assert!(start + len <= cols, "slice out of range");
        let v = &self.nodes[src.0].value;
        let value = (0..rows)
            .flat_map(|i| v[i * cols + start..i * cols + start + len].iter().copied())
            .collect();
        self.push(value, rows, len, Op::SliceCols { src, start })
    }

    /// Same values, row-major, viewed as `rows × cols`.
    pub fn reshape(&mut self, src: Var, rows: usize, cols: usize) -> Var {
        let value = self.nodes[src.0].value.clone();
        assert_eq!(value.len(), rows * cols, "reshape size mismatch");
        self.push(value, rows, cols, Op::Reshape(src))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], 1, 1, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums: `n × m → n × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let value = self.nodes[a.0]
            .value
            .chunks(c)
            .map(|row| row.iter().sum())
            .collect();
        self.push(value, r, 1, Op::SumCols(a))
    }

    /// Sums consecutive groups of `group` elements of a row vector.
    pub fn group_sum(&mut self, src: Var, group: usize) -> Var {
        let len = self.nodes[src.0].value.len();
        assert_eq!(len % group, 0, "group_sum: {len} not divisible by {group}");
        let value = self.nodes[src.0]
            .value
            .chunks(group)
            .map(|g| g.iter().sum())
            .collect();
        self.push(value, 1, len / group, Op::GroupSum { src, group })
    }

    /// `[a0, a1] → [a0, a0, .., a1, a1, ..]`, each element repeated `times`.
    pub fn repeat_each(&mut self, src: Var, times: usize) -> Var {
        let value: Vec<f64> = self.nodes[src.0]
            .value
            .iter()
            .flat_map(|&x| std::iter::repeat_n(x, times))
            .collect();
        let n = value.len();
        self.push(value, 1, n, Op::RepeatEach { src, times })
    }

    /// `[a0, a1] → [a0, a1, a0, a1, ..]`, the whole row repeated `times`.
    pub fn tile(&mut self, src: Var, times: usize) -> Var {
        let base = &self.nodes[src.0].value;
        let mut value = Vec::with_capacity(base.len() * times);
        for _ in 0..times {
            value.extend_from_slice(base);
        }
        let n = value.len();
        self.push(value, 1, n, Op::Tile { src, times })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let _ = self.same_shape(a, b);
        let d = dot(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(vec![d], 1, 1, Op::Dot(a, b))
    }

    pub fn sq_norm(&mut self, a: Var) -> Var {
        self.dot(a, a)
    }

    /// Stabilised `log Σ exp(a_i)` over every element.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let v = log_sum_exp(&self.nodes[a.0].value);
        self.push(vec![v], 1, 1, Op::LogSumExp(a))
    }

    /// Softmax over every element.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let lse = log_sum_exp(&self.nodes[a.0].value);
        let value = self.nodes[a.0]
            .value
            .iter()
            .map(|x| (x - lse).exp())
            .collect();
        self.push(value, r, c, Op::Softmax(a))
    }

    /// `Σ_i weights[i] · items[i]` for same-shaped items.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        assert_eq!(self.nodes[weights.0].value.len(), items.len());
        assert!(!items.is_empty());
        let (r, c) = self.shape(items[0]);
        let mut value = vec![0.0; r * c];
        for (k, &it) in items.iter().enumerate() {
            let _ = self.same_shape(items[0], it);
            let w = self.nodes[weights.0].value[k];
            for (o, x) in value.iter_mut().zip(&self.nodes[it.0].value) {
                *o += w * x;
            }
        }
        self.push(
            value,
            r,
            c,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        )
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(
            self.nodes[output.0].value.len(),
            1,
            "backward requires a scalar output"
        );
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); output.0 + 1];
        grads[output.0] = vec![1.0];

        for i in (0..=output.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            self.backprop_node(i, &g, &mut grads);
            grads[i] = g;
        }
        Gradients {
            nodes: grads,
            params: self.params.clone(),
        }
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[i];
        let val = |v: Var| -> &[f64] { &self.nodes[v.0].value };
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let slot = &mut grads[v.0];
            if slot.is_empty() {
                *slot = vec![0.0; self.nodes[v.0].value.len()];
            }
            f(slot);
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| axpy(s, g, 1.0));
                acc(*b, &mut |s| axpy(s, g, 1.0));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| axpy(s, g, 1.0));
                acc(*b, &mut |s| axpy(s, g, -1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * vb[k];
                    }
                });
                acc(*b, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * va[k];
                    }
                });
            }
            Op::Min(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        if va[k] <= vb[k] {
                            s[k] += g[k];
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for k in 0..s.len() {
                        if va[k] > vb[k] {
                            s[k] += g[k];
                        }
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |s| axpy(s, g, *c)),
            Op::AddConst(a) | Op::Reshape(a) => acc(*a, &mut |s| axpy(s, g, 1.0)),
            Op::AddRowBias(x, b) => {
                acc(*x, &mut |s| axpy(s, g, 1.0));
                let c = node.cols;
                acc(*b, &mut |s| {
                    for row in g.chunks(c) {
                        axpy(s, row, 1.0);
                    }
                });
            }
            Op::Linear(x, w) => {
                let (n, k) = (self.nodes[x.0].rows, self.nodes[x.0].cols);
                let m = node.cols;
                let (xs, ws) = (val(*x), val(*w));
                acc(*x, &mut |s| {
                    for r in 0..n {
                        let srow = &mut s[r * k..(r + 1) * k];
                        for j in 0..m {
                            let gj = g[r * m + j];
                            if gj != 0.0 {
                                axpy(srow, &ws[j * k..(j + 1) * k], gj);
                            }
                        }
                    }
                });
                acc(*w, &mut |s| {
                    for r in 0..n {
                        let xrow = &xs[r * k..(r + 1) * k];
                        for j in 0..m {
                            let gj = g[r * m + j];
                            if gj != 0.0 {
                                axpy(&mut s[j * k..(j + 1) * k], xrow, gj);
                            }
                        }
                    }
                });
            }
            Op::MulScalar(x, sv) => {
                let scalar = val(*sv)[0];
                let xs = val(*x);
                acc(*x, &mut |s| axpy(s, g, scalar));
                let d = dot(g, xs);
                acc(*sv, &mut |s| s[0] += d);
            }
            Op::Sigmoid(a) => acc(*a, &mut |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * (1.0 - y[k] * y[k]);
                }
            }),
            Op::Exp(a) => acc(*a, &mut |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * y[k];
                }
            }),
            Op::Softplus(a) => {
                let xs = val(*a);
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * sigmoid(xs[k]);
                    }
                })
            }
            Op::LeakyRelu(a, slope) => {
                let xs = val(*a);
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * if xs[k] > 0.0 { 1.0 } else { *slope };
                    }
                })
            }
            Op::Relu(a) => {
                let xs = val(*a);
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        if xs[k] > 0.0 {
                            s[k] += g[k];
                        }
                    }
                })
            }
            Op::Silu(a) => {
                let xs = val(*a);
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        let sg = sigmoid(xs[k]);
                        s[k] += g[k] * sg * (1.0 + xs[k] * (1.0 - sg));
                    }
                })
            }
            Op::Expm1OverX(a) => {
                let xs = val(*a);
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * expm1_over_x_deriv(xs[k]);
                    }
                })
            }
            Op::Square(a) => {
                let xs = val(*a);
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += 2.0 * g[k] * xs[k];
                    }
                })
            }
            Op::Concat(parts) => {
                let total = node.cols;
                let mut offset = 0;
                for &p in parts {
                    let c = self.nodes[p.0].cols;
                    acc(p, &mut |s| {
                        for r in 0..node.rows {
                            axpy(
                                &mut s[r * c..(r + 1) * c],
                                &g[r * total + offset..r * total + offset + c],
                                1.0,
                            );
                        }
                    });
                    offset += c;
                }
            }
            Op::SliceCols { src, start } => {
                let src_cols = self.nodes[src.0].cols;
                let len = node.cols;
                acc(*src, &mut |s| {
                    for r in 0..node.rows {
                        axpy(
                            &mut s[r * src_cols + start..r * src_cols + start + len],
                            &g[r * len..(r + 1) * len],
                            1.0,
                        );
                    }
                })
            }
            Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0])),
            Op::SumCols(a) => {
                let c = self.nodes[a.0].cols;
                acc(*a, &mut |s| {
                    for (r, row) in s.chunks_mut(c).enumerate() {
                        row.iter_mut().for_each(|x| *x += g[r]);
                    }
                })
            }
            Op::GroupSum { src, group } => acc(*src, &mut |s| {
                for (k, chunk) in s.chunks_mut(*group).enumerate() {
                    chunk.iter_mut().for_each(|x| *x += g[k]);
                }
            }),
            Op::RepeatEach { src, times } => acc(*src, &mut |s| {
                for (k, x) in s.iter_mut().enumerate() {
                    *x += g[k * times..(k + 1) * times].iter().sum::<f64>();
                }
            }),
            Op::Tile { src, times } => acc(*src, &mut |s| {
                let n = s.len();
                for t in 0..*times {
                    axpy(s, &g[t * n..(t + 1) * n], 1.0);
                }
            }),
            Op::Dot(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if a == b {
                    acc(*a, &mut |s| axpy(s, va, 2.0 * g[0]));
                } else {
                    acc(*a, &mut |s| axpy(s, vb, g[0]));
                    acc(*b, &mut |s| axpy(s, va, g[0]));
                }
            }
            Op::LogSumExp(a) => {
                let xs = val(*a);
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[0] * (xs[k] - y[0]).exp();
                    }
                })
            }
            Op::Softmax(a) => {
                let gy = dot(g, y);
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += y[k] * (g[k] - gy);
                    }
                })
            }
            Op::WeightedSum { weights, items } => {
                let ws = val(*weights).to_vec();
                let dw: Vec<f64> = items.iter().map(|&it| dot(g, val(it))).collect();
                for (k, &it) in items.iter().enumerate() {
                    acc(it, &mut |s| axpy(s, g, ws[k]));
                }
                acc(*weights, &mut |s| axpy(s, &dw, 1.0));
            }
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Vec<f64>>,
    params: Vec<ParamLeaf>,
}

impl Gradients {
    /// Gradient with respect to any node; zeros when the node did not influence the output.
    pub fn wrt(&self, v: Var, tape: &Tape) -> Vec<f64> {
        match self.nodes.get(v.0) {
            Some(g) if !g.is_empty() => g.clone(),
            _ => vec![0.0; tape.value(v).len()],
        }
    }

    /// Adds the gradients of every parameter leaf that came from `store`.
    pub fn accumulate(&self, store: &ParamStore, into: &mut StoreGrads) {
        for leaf in &self.params {
            if leaf.store_tag != store.tag() {
                continue;
            }
            if let Some(g) = self.nodes.get(leaf.var.0) {
                if !g.is_empty() {
                    axpy(into.get_mut(leaf.id), g, 1.0);
                }
            }
        }
    }

    pub fn for_store(&self, store: &ParamStore) -> StoreGrads {
        let mut g = StoreGrads::zeros_like(store);
        self.accumulate(store, &mut g);
        g
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
