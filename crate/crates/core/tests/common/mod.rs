#![allow(dead_code)]

pub mod criteria;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use trajirl::autodiff::{Tape, Var};
use trajirl::data::synthetic_instances;
use trajirl::domain::{ScenarioTag, WindowSpec};
use trajirl::nn::ParamStore;
use trajirl::trainer::{prepare, ModelConfig, Prepared};

pub const FD_STEP: f64 = 1e-3;

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Copy, Debug)]
pub struct FdCheck {
    /// Norm-wise relative error over the smooth coordinates.
    pub rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the loss has a kink within one step.
    pub kinks: usize,
}

/// Compares the tape gradient of `loss` with central differences of step
/// [`FD_STEP`] over up to `max_coords` coordinates of `store` picked by `rng`.
/// A coordinate whose step-[`FD_STEP`] difference disagrees with a step-1e-5
/// difference straddles a non-differentiable point (e.g. a leaky-ReLU kink)
/// and is counted in `kinks` instead of the error.
pub fn fd_check<F>(store: &ParamStore, loss: F, max_coords: usize, rng: &mut ChaCha8Rng) -> FdCheck
where
    F: Fn(&mut Tape, &ParamStore, bool) -> Var,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, store, true);
    let analytic = tape.backward(out).for_store(store).flat();
    let theta = store.flat();
    let mut coords: Vec<usize> = (0..theta.len()).collect();
    if coords.len() > max_coords {
        coords = coords.choose_multiple(rng, max_coords).copied().collect();
    }
    let eval = |k: usize, h: f64| {
        let mut moved = store.clone();
        let mut t = theta.clone();
        t[k] += h;
        moved.set_flat(&t);
        let mut tape = Tape::new();
        let v = loss(&mut tape, &moved, false);
        tape.scalar(v)
    };
    let central = |k: usize, h: f64| (eval(k, h) - eval(k, -h)) / (2.0 * h);
    let (mut diff, mut norm_a, mut norm_n, mut kinks) = (0.0, 0.0, 0.0, 0);
    for &k in &coords {
        let numeric = central(k, FD_STEP);
        if (numeric - analytic[k]).abs() > 1e-6 * (1.0 + analytic[k].abs()) {
            let fine = central(k, 1e-5);
            if (fine - numeric).abs() > 0.5 * (numeric - analytic[k]).abs() {
                kinks += 1;
                continue;
            }
        }
        diff += (analytic[k] - numeric).powi(2);
        norm_a += analytic[k].powi(2);
        norm_n += numeric.powi(2);
    }
    FdCheck {
        rel_error: diff.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(1e-12),
        checked: coords.len(),
        kinks,
    }
}

/// Overwrites every parameter with `N(0, scale²)` so that no path through the
/// network is switched off by a zero initialisation.
pub fn randomize(store: &mut ParamStore, scale: f64, rng: &mut ChaCha8Rng) {
    let values: Vec<f64> = (0..store.num_scalars())
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    store.set_flat(&values);
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 6,
        attention_dim: 5,
        ssm_channels: 4,
        ssm_state: 3,
        selective: true,
        reward_hidden: 5,
        graph_radius: 30.0,
    }
}

/// Short synthetic roundabout windows that have at least one graph neighbour.
pub fn tiny_prepared(seed: u64) -> Vec<Prepared> {
    let window = WindowSpec {
        history: 5,
        horizon: 6,
        stride: 7,
    };
    let inst = synthetic_instances(ScenarioTag::Roundabout, 1, 6, seed, window).unwrap();
    prepare(&inst, 30.0)
        .into_iter()
        .filter(|p| !p.graph.out_edges(p.graph.target_node).is_empty())
        .collect()
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Deterministic 3-state, 2-action MDP started in state 0 and run for a
/// fixed number of steps, small enough to enumerate every trajectory.
pub struct ToyMdp {
    pub steps: usize,
    /// True reward `r*[s][a]`.
    pub reward: [[f64; 2]; 3],
}

pub const TOY_FEATURES: usize = 5;

impl ToyMdp {
    pub fn new() -> Self {
        Self {
            steps: 4,
            reward: [[1.0, -0.5], [0.2, 0.8], [-1.0, 0.4]],
        }
    }

    pub fn next(s: usize, a: usize) -> usize {
        (s + a + 1) % 3
    }

    pub fn n_trajectories(&self) -> usize {
        1 << self.steps
    }

    /// Actions of trajectory `k`, read from its binary digits.
    pub fn actions(&self, k: usize) -> Vec<usize> {
        (0..self.steps).map(|t| (k >> t) & 1).collect()
    }

    pub fn pairs(&self, k: usize) -> Vec<(usize, usize)> {
        let mut s = 0;
        self.actions(k)
            .into_iter()
            .map(|a| {
                let pair = (s, a);
                s = Self::next(s, a);
                pair
            })
            .collect()
    }

    /// One-hot state (3) and action (2) per pair, flattened.
    pub fn features(&self, k: usize) -> Vec<f64> {
        self.pairs(k)
            .into_iter()
            .flat_map(|(s, a)| {
                let mut f = [0.0; TOY_FEATURES];
                f[s] = 1.0;
                f[3 + a] = 1.0;
                f
            })
            .collect()
    }

    pub fn true_return(&self, k: usize) -> f64 {
        self.pairs(k).into_iter().map(|(s, a)| self.reward[s][a]).sum()
    }

    /// `log π*` of one trajectory under uniform random actions.
    pub fn log_uniform(&self) -> f64 {
        -(self.steps as f64) * std::f64::consts::LN_2
    }

    /// Trajectory indices drawn from `P*(τ) ∝ exp(R*(τ))`.
    pub fn demonstrations(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let w: Vec<f64> = (0..self.n_trajectories()).map(|k| self.true_return(k).exp()).collect();
        let total: f64 = w.iter().sum();
        (0..n)
            .map(|_| {
                let mut u = rng.random::<f64>() * total;
                for (k, wk) in w.iter().enumerate() {
                    if u < *wk {
                        return k;
                    }
                    u -= wk;
                }
                w.len() - 1
            })
            .collect()
    }

    /// Indices of `m` trajectories drawn with uniform random actions.
    pub fn uniform_samples(&self, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..m).map(|_| rng.random_range(0..self.n_trajectories())).collect()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
