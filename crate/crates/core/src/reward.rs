//! Maximum-entropy IRL reward model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{log_sum_exp, Tape, Var};
use crate::domain::{Action, AgentState, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{Activation, BoundMlp, Mlp, ParamStore};

/// Normalized velocity (2), acceleration (2) and per-step displacement (2).
pub const REWARD_FEATURE_DIM: usize = 6;
const VEL_SCALE: f64 = 10.0;
const ACC_SCALE: f64 = 5.0;
const ACTION_SCALE: f64 = 5.0;

/// Reward input for one state-action pair. Position is left out so the
/// reward is invariant to where in the scene the pair occurs.
pub fn pair_features(state: &AgentState, action: Action) -> [f64; REWARD_FEATURE_DIM] {
    [
        state.vx / VEL_SCALE,
        state.vy / VEL_SCALE,
        state.ax / ACC_SCALE,
        state.ay / ACC_SCALE,
        action.dx / ACTION_SCALE,
        action.dy / ACTION_SCALE,
    ]
}

/// Feature rows `(s_t, x_{t+1} − x_t)` for consecutive states, flattened row-major.
pub fn demonstration_pairs(states: &[AgentState]) -> Vec<f64> {
    states
        .windows(2)
        .flat_map(|w| pair_features(&w[0], Action::between(w[0].position(), w[1].position())))
        .collect()
}

/// Scale applied to normalized-state columns 2..6 to obtain the velocity and
/// acceleration features; lets the trainer build features on the tape.
pub const STATE_TO_FEATURE: [f64; 4] = [
    crate::domain::STATE_SCALE[2] / VEL_SCALE,
    crate::domain::STATE_SCALE[3] / VEL_SCALE,
    crate::domain::STATE_SCALE[4] / ACC_SCALE,
    crate::domain::STATE_SCALE[5] / ACC_SCALE,
];

pub const fn action_scale() -> f64 {
    ACTION_SCALE
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub hidden: usize,
    /// Weight of the squared-norm penalty on θ_RF.
    pub lambda: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardNet {
    pub mlp: Mlp,
}

impl RewardNet {
    pub fn new<R: Rng>(store: &mut ParamStore, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(store, "reward", &[input_dim, hidden, hidden, 1], Activation::Tanh, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    pub fn reward(&self, store: &ParamStore, features: &[f64]) -> f64 {
        self.mlp.eval(store, features)[0]
    }

    /// Rewards of every row of a flattened `n × input_dim` matrix, in one pass.
    pub fn rewards(&self, store: &ParamStore, rows: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        assert_eq!(rows.len() % d, 0, "row length mismatch");
        if rows.is_empty() {
            return Vec::new();
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, store, false);
        let x = tape.constant(rows.to_vec(), rows.len() / d, d);
        let r = bound.forward(&mut tape, x);
        tape.value(r).to_vec()
    }

    /// `Σ_t R(s_t, a_t)` over pre-computed pair features.
    pub fn pairs_return(&self, store: &ParamStore, rows: &[f64]) -> f64 {
        self.rewards(store, rows).iter().sum()
    }

    /// Return of a trajectory over its `len − 1` state-action pairs.
    pub fn trajectory_return(&self, store: &ParamStore, traj: &Trajectory) -> f64 {
        self.pairs_return(store, &demonstration_pairs(&traj.states))
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore, trainable: bool) -> BoundReward {
        BoundReward {
            mlp: self.mlp.bind(tape, store, trainable),
            input_dim: self.input_dim(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundReward {
    mlp: BoundMlp,
    input_dim: usize,
}

impl BoundReward {
    /// `n × input_dim → n × 1`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        self.mlp.forward(tape, x)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `‖θ_RF‖²`.
    pub fn sq_norm(&self, tape: &mut Tape) -> Var {
        let parts: Vec<Var> = self.mlp.params().into_iter().map(|p| tape.sq_norm(p)).collect();
        let mut total = parts[0];
        for &p in &parts[1..] {
            total = tape.add(total, p);
        }
        total
    }
}

/// `log Ẑ = log((1/M) Σ exp(r_i) / π*)` for a constant proposal density π*,
/// given `log π*`.
pub fn estimate_log_partition(sample_returns: &[f64], log_proposal: f64) -> Result<f64> {
    if sample_returns.is_empty() {
        return Err(Error::invalid("partition estimate needs at least one sample"));
    }
    Ok(log_sum_exp(sample_returns) - (sample_returns.len() as f64).ln() - log_proposal)
}

/// What one Monte-Carlo sample of the partition function stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partition {
    /// Samples are single pairs; a trajectory's likelihood subtracts
    /// `log Ẑ` once per pair.
    Pair,
    /// Samples are whole trajectories of equal length.
    Trajectory,
}

/// Samples for the partition estimate, flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionSamples {
    pub rows: Vec<f64>,
    /// Pairs per sample: 1 at pair level, the trajectory length otherwise.
    pub pairs_per_sample: usize,
    /// `log π*` of a single sample.
    pub log_proposal: f64,
    pub level: Partition,
}

impl PartitionSamples {
    pub fn pairs(rows: Vec<f64>, log_proposal: f64) -> Self {
        Self {
            rows,
            pairs_per_sample: 1,
            log_proposal,
            level: Partition::Pair,
        }
    }

    pub fn trajectories(rows: Vec<f64>, pairs_per_sample: usize, log_proposal: f64) -> Self {
        Self {
            rows,
            pairs_per_sample,
            log_proposal,
            level: Partition::Trajectory,
        }
    }

    pub fn len(&self, input_dim: usize) -> usize {
        self.rows.len() / (input_dim * self.pairs_per_sample)
    }
}

/// Pool of demonstration pairs that the partition samples are drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPool {
    pub dim: usize,
    pub rows: Vec<f64>,
}

impl PairPool {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, rows: &[f64]) {
        assert_eq!(rows.len() % self.dim, 0);
        self.rows.extend_from_slice(rows);
    }

    /// `M` pairs drawn uniformly with replacement, with π* = 1 / pool size.
    pub fn sample<R: Rng>(&self, m: usize, rng: &mut R) -> Result<PartitionSamples> {
        if self.is_empty() {
            return Err(Error::invalid("empty demonstration pool"));
        }
        let n = self.len();
        let mut rows = Vec::with_capacity(m * self.dim);
        for _ in 0..m {
            let k = rng.random_range(0..n);
            rows.extend_from_slice(&self.rows[k * self.dim..(k + 1) * self.dim]);
        }
        Ok(PartitionSamples::pairs(rows, -(n as f64).ln()))
    }
}

/// `log Ẑ` on the tape, differentiable in θ_RF.
pub fn log_partition(tape: &mut Tape, reward: &BoundReward, samples: &PartitionSamples) -> Result<Var> {
    let d = reward.input_dim();
    let m = samples.len(d);
    if m == 0 || samples.rows.len() != m * d * samples.pairs_per_sample {
        return Err(Error::invalid("partition samples are empty or ragged"));
    }
    let x = tape.constant(samples.rows.clone(), m * samples.pairs_per_sample, d);
    let r = reward.forward(tape, x);
    let returns = if samples.pairs_per_sample > 1 {
        tape.group_sum(r, samples.pairs_per_sample)
    } else {
        r
    };
    let lse = tape.log_sum_exp(returns);
    Ok(tape.add_const(lse, -(m as f64).ln() - samples.log_proposal))
}

/// Negative mean log-likelihood of the demonstrations plus `λ‖θ_RF‖²`.
/// Each demonstration is a flattened `n_τ × input_dim` block of pair features.
pub fn loss_rf(
    tape: &mut Tape,
    reward: &BoundReward,
    demos: &[Vec<f64>],
    samples: &PartitionSamples,
    lambda: f64,
) -> Result<Var> {
    let d = reward.input_dim();
    if demos.is_empty() || demos.iter().any(|t| t.is_empty() || t.len() % d != 0) {
        return Err(Error::invalid("demonstration batch is empty or ragged"));
    }
    let b = demos.len() as f64;
    let stacked: Vec<f64> = demos.iter().flatten().copied().collect();
    let n_pairs = stacked.len() / d;
    let x = tape.constant(stacked, n_pairs, d);
    let r = reward.forward(tape, x);
    let total = tape.sum(r);
    let mean_return = tape.scale(total, 1.0 / b);

    let log_z = log_partition(tape, reward, samples)?;
    let z_weight = match samples.level {
        Partition::Pair => n_pairs as f64 / b,
        Partition::Trajectory => 1.0,
    };
    let z_term = tape.scale(log_z, z_weight);
    let nll = tape.sub(z_term, mean_return);
    if lambda == 0.0 {
        return Ok(nll);
    }
    let norm = reward.sq_norm(tape);
    let reg = tape.scale(norm, lambda);
    Ok(tape.add(nll, reg))
}
