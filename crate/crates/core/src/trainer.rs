//! Predictor model, joint training with the reward model, ablations and checkpoints.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{build_graph, TrafficGraph, DEFAULT_RADIUS};
use crate::domain::{denormalize_state, normalize_state, PredictionInstance, STATE_DIM};
use crate::encoder::{BoundEncoder, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, AblationRow, EvalCase, MetricConfig, MetricReport};
use crate::nn::{Adam, AdamConfig, ParamStore, StoreGrads};
use crate::reward::{
    demonstration_pairs, estimate_log_partition, loss_rf, BoundReward, PairPool, RewardNet,
    REWARD_FEATURE_DIM, STATE_TO_FEATURE,
};
use crate::ssm::{BoundDecoder, Decoder, DecoderConfig, Rollout};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub ssm_channels: usize,
    pub ssm_state: usize,
    pub selective: bool,
    pub reward_hidden: usize,
    pub graph_radius: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            attention_dim: 64,
            ssm_channels: 64,
            ssm_state: 16,
            selective: true,
            reward_hidden: 64,
            graph_radius: DEFAULT_RADIUS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_predictor: f64,
    pub lr_reward: f64,
    /// Weight of the predicted-trajectory likelihood in L_TPM.
    pub gamma_reward: f64,
    /// Squared-norm penalty on θ_RF.
    pub lambda: f64,
    pub grad_clip: f64,
    /// Pairs drawn from the demonstration pool per partition estimate.
    pub partition_samples: usize,
    pub seed: u64,
    pub use_irl: bool,
    pub use_gnn: bool,
    pub teacher_forcing: bool,
    /// Cosine-anneal both learning rates to `lr_floor` × their initial value.
    pub cosine_decay: bool,
    pub lr_floor: f64,
    /// Adam second-moment decay for both optimizers.
    pub adam_beta2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            lr_predictor: 1e-3,
            lr_reward: 1e-4,
            gamma_reward: 0.01,
            lambda: 1e-3,
            grad_clip: 1.0,
            partition_samples: 1024,
            seed: 0,
            use_irl: true,
            use_gnn: true,
            teacher_forcing: false,
            cosine_decay: true,
            lr_floor: 0.01,
            adam_beta2: 0.99,
        }
    }
}

impl TrainConfig {
    /// Learning-rate multiplier for `epoch` (1-based).
    pub fn lr_factor(&self, epoch: usize) -> f64 {
        if !self.cosine_decay || self.epochs <= 1 {
            return 1.0;
        }
        let progress = (epoch - 1) as f64 / (self.epochs - 1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.lr_floor + (1.0 - self.lr_floor) * cos
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.gamma_reward >= 0.0) {
            return Err(Error::Config("gamma_reward must be non-negative".into()));
        }
        if !(self.lr_predictor > 0.0 && self.lr_reward > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.partition_samples < 1 {
            return Err(Error::Config("partition_samples must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam_beta2 must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Instance with its graph and the derived tensors the model consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub instance: PredictionInstance,
    pub graph: TrafficGraph,
    /// Normalized last observed state.
    pub last_state: [f64; STATE_DIM],
    pub gt_positions: Vec<[f64; 2]>,
    /// Normalized ground-truth future states (teacher forcing).
    pub gt_states: Vec<[f64; STATE_DIM]>,
    /// Reward features of the observed history.
    pub demo_pairs: Vec<f64>,
}

pub fn prepare(instances: &[PredictionInstance], radius: f64) -> Vec<Prepared> {
    instances
        .par_iter()
        .map(|inst| Prepared {
            graph: build_graph(inst, radius),
            last_state: normalize_state(&inst.last_observed().features([0.0, 0.0])),
            gt_positions: inst.future_positions(),
            gt_states: inst
                .target_future
                .states
                .iter()
                .map(|s| normalize_state(&s.features([0.0, 0.0])))
                .collect(),
            demo_pairs: demonstration_pairs(&inst.target_history.states),
            instance: inst.clone(),
        })
        .collect()
}

impl Prepared {
    pub fn eval_case(&self, predicted: Vec<[f64; 2]>) -> EvalCase {
        EvalCase {
            predicted,
            ground_truth: self.gt_positions.clone(),
            neighbors: self
                .instance
                .neighbors
                .iter()
                .map(|n| {
                    n.future
                        .iter()
                        .zip(&n.future_mask)
                        .map(|(s, &m)| m.then(|| s.position()))
                        .collect()
                })
                .collect(),
        }
    }
}

/// Encoder + decoder (θ_TPM) and reward network (θ_RF).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub reward: RewardNet,
    pub tpm: ParamStore,
    pub rf: ParamStore,
}

pub struct BoundPredictor {
    pub encoder: BoundEncoder,
    pub decoder: BoundDecoder,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tpm = ParamStore::new();
        let encoder = Encoder::new(
            &mut tpm,
            EncoderConfig {
                hidden_dim: config.hidden_dim,
                attention_dim: config.attention_dim,
            },
            &mut rng,
        );
        let decoder = Decoder::new(
            &mut tpm,
            DecoderConfig {
                channels: config.ssm_channels,
                state_size: config.ssm_state,
                latent_dim: config.hidden_dim,
                selective: config.selective,
            },
            &mut rng,
        );
        let mut rf = ParamStore::new();
        let reward = RewardNet::new(&mut rf, REWARD_FEATURE_DIM, config.reward_hidden, &mut rng);
        Self {
            config,
            encoder,
            decoder,
            reward,
            tpm,
            rf,
        }
    }

    pub fn bind_predictor(&self, tape: &mut Tape, trainable: bool) -> BoundPredictor {
        BoundPredictor {
            encoder: self.encoder.bind(tape, &self.tpm, trainable),
            decoder: self.decoder.bind(tape, &self.tpm, trainable),
        }
    }

    /// Autoregressive prediction on an existing tape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundPredictor,
        p: &Prepared,
        use_gnn: bool,
        teacher_forcing: bool,
    ) -> Result<Rollout> {
        let latent = bound.encoder.encode(tape, &p.instance, &p.graph, use_gnn)?;
        let teacher = teacher_forcing.then_some(p.gt_states.as_slice());
        bound
            .decoder
            .rollout(tape, latent, &p.last_state, p.gt_positions.len(), teacher)
    }

    /// Predicted future positions in the instance's local frame.
    pub fn predict(&self, p: &Prepared, use_gnn: bool) -> Result<Vec<[f64; 2]>> {
        Ok(self
            .predict_states(p, use_gnn)?
            .into_iter()
            .map(|s| [s[0], s[1]])
            .collect())
    }

    /// Predicted future state vectors (local frame, physical units). Only
    /// the encoder runs on a tape; the decoder rolls out tape-free.
    pub fn predict_states(&self, p: &Prepared, use_gnn: bool) -> Result<Vec<[f64; STATE_DIM]>> {
        let mut tape = Tape::new();
        let encoder = self.encoder.bind(&mut tape, &self.tpm, false);
        let latent = encoder.encode(&mut tape, &p.instance, &p.graph, use_gnn)?;
        let states = self
            .decoder
            .predict(&self.tpm, tape.value(latent), &p.last_state, p.gt_positions.len())?;
        Ok(states.iter().map(|s| denormalize_state(s)).collect())
    }

    pub fn evaluate(&self, data: &[Prepared], use_gnn: bool, metrics: &MetricConfig) -> Result<MetricReport> {
        let cases: Vec<EvalCase> = data
            .par_iter()
            .map(|p| Ok(p.eval_case(self.predict(p, use_gnn)?)))
            .collect::<Result<_>>()?;
        compute_metrics(&cases, metrics)
    }
}

/// Frozen reward model entering L_TPM.
pub struct RewardTerm<'a> {
    pub reward: &'a BoundReward,
    pub log_z: f64,
    pub gamma: f64,
}

/// Reward features `(s_{t-1}, x̂_t − x̂_{t-1})` of a predicted trajectory,
/// stacked as an `H × REWARD_FEATURE_DIM` node.
pub fn predicted_pair_features(tape: &mut Tape, rollout: &Rollout, last_state: &[f64; STATE_DIM]) -> Var {
    let scale_row = tape.row(&STATE_TO_FEATURE);
    let mut prev_state = tape.row(last_state);
    let mut prev_pos = tape.slice_cols(prev_state, 0, 2);
    let mut rows = Vec::with_capacity(rollout.states.len());
    let pos_to_action = crate::domain::STATE_SCALE[0] / crate::reward::action_scale();
    for &s in &rollout.states {
        let pos = tape.slice_cols(s, 0, 2);
        let diff = tape.sub(pos, prev_pos);
        let action = tape.scale(diff, pos_to_action);
        let kin = tape.slice_cols(prev_state, 2, 4);
        let kin = tape.mul(kin, scale_row);
        rows.push(tape.concat(&[kin, action]));
        prev_state = s;
        prev_pos = pos;
    }
    let flat = tape.concat(&rows);
    tape.reshape(flat, rollout.states.len(), REWARD_FEATURE_DIM)
}

/// `(1/H) Σ_t ‖x_t − x̂_t‖² − γ (R(τ̂) − H·log Ẑ)` for one instance.
pub fn loss_tpm(
    tape: &mut Tape,
    rollout: &Rollout,
    ground_truth: &[[f64; 2]],
    last_state: &[f64; STATE_DIM],
    reward: Option<RewardTerm<'_>>,
) -> Result<Var> {
    let h = rollout.states.len();
    if h != ground_truth.len() || h == 0 {
        return Err(Error::invalid(format!(
            "prediction horizon {h} does not match ground truth {}",
            ground_truth.len()
        )));
    }
    let pos_scale = crate::domain::STATE_SCALE[0];
    let pred: Vec<Var> = rollout.states.iter().map(|&s| tape.slice_cols(s, 0, 2)).collect();
    let pred = tape.concat(&pred);
    let pred = tape.scale(pred, pos_scale);
    let gt: Vec<f64> = ground_truth.iter().flatten().copied().collect();
    let gt = tape.row(&gt);
    let err = tape.sub(pred, gt);
    let sq = tape.sq_norm(err);
    let mse = tape.scale(sq, 1.0 / h as f64);
    let Some(term) = reward else {
        return Ok(mse);
    };
    if term.gamma == 0.0 {
        return Ok(mse);
    }
    let feats = predicted_pair_features(tape, rollout, last_state);
    let r = term.reward.forward(tape, feats);
    let ret = tape.sum(r);
    let log_lik = tape.add_const(ret, -(h as f64) * term.log_z);
    let weighted = tape.scale(log_lik, term.gamma);
    Ok(tape.sub(mse, weighted))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(rename = "L_TPM")]
    pub loss_tpm: f64,
    #[serde(rename = "L_RF")]
    pub loss_rf: f64,
    pub val_ade: f64,
    pub val_fde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: Model,
    pub train: TrainConfig,
    /// Effective run configuration, as written by the caller.
    pub config_echo: String,
    pub epoch: usize,
    pub val_metrics: Option<MetricReport>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(u64::from(CHECKPOINT_VERSION)) {
            return Err(Error::Checkpoint(format!(
                "{} has version {version:?}, expected {CHECKPOINT_VERSION}",
                path.display()
            )));
        }
        Ok(serde_json::from_value(value)?)
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Pool of history pairs the partition samples are drawn from.
pub fn demonstration_pool(data: &[Prepared]) -> PairPool {
    let mut pool = PairPool::new(REWARD_FEATURE_DIM);
    for p in data {
        pool.extend(&p.demo_pairs);
    }
    pool
}

fn finite_or_fail(value: f64, epoch: usize, step: usize, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::TrainingFailure {
            epoch,
            step,
            message: format!("{what} is not finite"),
        })
    }
}

/// One predictor step on a batch: returns the mean L_TPM before the update.
#[allow(clippy::too_many_arguments)]
fn predictor_step(
    model: &mut Model,
    adam: &mut Adam,
    batch: &[&Prepared],
    log_z: Option<f64>,
    config: &TrainConfig,
    epoch: usize,
    step: usize,
) -> Result<f64> {
    let model_ref = &*model;
    let results: Vec<(f64, StoreGrads)> = batch
        .par_iter()
        .map(|p| {
            let mut tape = Tape::new();
            let bound = model_ref.bind_predictor(&mut tape, true);
            let rollout = model_ref
                .forward(&mut tape, &bound, p, config.use_gnn, config.teacher_forcing)
                .map_err(|e| match e {
                    Error::Divergence { message, .. } => Error::TrainingFailure { epoch, step, message },
                    other => other,
                })?;
            let reward = model_ref.reward.bind(&mut tape, &model_ref.rf, false);
            let term = log_z.map(|log_z| RewardTerm {
                reward: &reward,
                log_z,
                gamma: config.gamma_reward,
            });
            let loss = loss_tpm(&mut tape, &rollout, &p.gt_positions, &p.last_state, term)?;
            let grads = tape.backward(loss).for_store(&model_ref.tpm);
            Ok((tape.scalar(loss), grads))
        })
        .collect::<Result<_>>()?;
    let mut total = StoreGrads::zeros_like(&model.tpm);
    let mut loss = 0.0;
    for (l, g) in &results {
        loss += l;
        total.add_assign(g);
    }
    let n = batch.len() as f64;
    loss /= n;
    total.scale(1.0 / n);
    finite_or_fail(loss, epoch, step, "L_TPM")?;
    if !total.all_finite() {
        return Err(Error::TrainingFailure {
            epoch,
            step,
            message: "non-finite predictor gradient".into(),
        });
    }
    total.clip_norm(config.grad_clip);
    adam.step(&mut model.tpm, &total);
    Ok(loss)
}

fn reward_step(
    model: &mut Model,
    adam: &mut Adam,
    batch: &[&Prepared],
    samples: &crate::reward::PartitionSamples,
    config: &TrainConfig,
    epoch: usize,
    step: usize,
) -> Result<f64> {
    let demos: Vec<Vec<f64>> = batch.iter().map(|p| p.demo_pairs.clone()).collect();
    let mut tape = Tape::new();
    let bound = model.reward.bind(&mut tape, &model.rf, true);
    let loss = loss_rf(&mut tape, &bound, &demos, samples, config.lambda)?;
    let value = tape.scalar(loss);
    finite_or_fail(value, epoch, step, "L_RF")?;
    let mut grads = tape.backward(loss).for_store(&model.rf);
    grads.clip_norm(config.grad_clip);
    adam.step(&mut model.rf, &grads);
    Ok(value)
}

/// Joint training: per batch, one predictor step on L_TPM (θ_RF frozen)
/// followed, when IRL is on, by one reward step on L_RF.
pub fn train(mut model: Model, train_set: &[Prepared], val_set: &[Prepared], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("empty training split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let adam = |lr| AdamConfig {
        beta2: config.adam_beta2,
        ..AdamConfig::with_lr(lr)
    };
    let mut adam_tpm = Adam::new(adam(config.lr_predictor), &model.tpm);
    let mut adam_rf = Adam::new(adam(config.lr_reward), &model.rf);
    let pool = demonstration_pool(train_set);
    let metric_cfg = MetricConfig::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut step = 0;
    let mut last_val = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        adam_tpm.config.lr = config.lr_predictor * config.lr_factor(epoch);
        adam_rf.config.lr = config.lr_reward * config.lr_factor(epoch);
        let (mut sum_tpm, mut sum_rf, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train_set[i]).collect();
            let samples = if config.use_irl {
                Some(pool.sample(config.partition_samples, &mut rng)?)
            } else {
                None
            };
            let log_z = match &samples {
                Some(s) => {
                    let r = model.reward.rewards(&model.rf, &s.rows);
                    Some(estimate_log_partition(&r, s.log_proposal)?)
                }
                None => None,
            };
            sum_tpm += predictor_step(&mut model, &mut adam_tpm, &batch, log_z, config, epoch, step)?;
            if let Some(s) = &samples {
                sum_rf += reward_step(&mut model, &mut adam_rf, &batch, s, config, epoch, step)?;
            }
            batches += 1;
            step += 1;
        }
        let val = if val_set.is_empty() {
            None
        } else {
            Some(model.evaluate(val_set, config.use_gnn, &metric_cfg).map_err(|e| match e {
                Error::Divergence { message, .. } => Error::TrainingFailure { epoch, step, message },
                other => other,
            })?)
        };
        log.push(EpochLog {
            epoch,
            loss_tpm: sum_tpm / batches as f64,
            loss_rf: if config.use_irl { sum_rf / batches as f64 } else { 0.0 },
            val_ade: val.map_or(f64::NAN, |v| v.ade),
            val_fde: val.map_or(f64::NAN, |v| v.fde),
        });
        last_val = val;
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            version: CHECKPOINT_VERSION,
            model,
            train: *config,
            config_echo: String::new(),
            epoch: config.epochs,
            val_metrics: last_val,
        },
        log,
    })
}

pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    crate::eval::report::write_rows(path, log)
}

/// The four ablation settings `(index, use_irl, use_gnn)`.
pub const ABLATIONS: [(&str, bool, bool); 4] = [("H1", true, true), ("H2", true, false), ("H3", false, true), ("H4", false, false)];

/// Trains and evaluates every ablation setting from the same initial weights.
pub fn ablation_grid(
    model_config: ModelConfig,
    train_set: &[Prepared],
    val_set: &[Prepared],
    config: &TrainConfig,
    metrics: &MetricConfig,
    dataset: &str,
) -> Result<Vec<AblationRow>> {
    if val_set.is_empty() {
        return Err(Error::invalid("ablation needs a validation split"));
    }
    let mut rows = Vec::with_capacity(ABLATIONS.len());
    for (index, use_irl, use_gnn) in ABLATIONS {
        let cfg = TrainConfig {
            use_irl,
            use_gnn,
            ..*config
        };
        let model = Model::new(model_config, config.seed);
        let out = train(model, train_set, val_set, &cfg)?;
        let m = out
            .checkpoint
            .model
            .evaluate(val_set, use_gnn, metrics)?;
        rows.push(AblationRow {
            dataset: dataset.to_string(),
            index: index.to_string(),
            mamba: true,
            irl: use_irl,
            gnn: use_gnn,
            ade: m.ade,
            fde: m.fde,
            mr: m.mr,
            apde: m.apde,
            cr: m.cr,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_instances;
    use crate::domain::{ScenarioTag, WindowSpec};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            hidden_dim: 8,
            attention_dim: 8,
            ssm_channels: 6,
            ssm_state: 4,
            selective: true,
            reward_hidden: 8,
            graph_radius: 30.0,
        }
    }

    fn tiny_data(n: usize) -> Vec<Prepared> {
        let window = WindowSpec {
            history: 6,
            horizon: 5,
            stride: 10,
        };
        let inst = synthetic_instances(ScenarioTag::Roundabout, 1, 6, 3, window).unwrap();
        prepare(&inst[..n.min(inst.len())], 30.0)
    }

    fn rollout_of(tape: &mut Tape, positions: &[[f64; 2]]) -> Rollout {
        let states = positions
            .iter()
            .map(|p| tape.row(&[p[0] / 10.0, p[1] / 10.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
            .collect();
        Rollout { states }
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let mut tape = Tape::new();
        let gt = [[1.0, 2.0], [3.0, 4.0]];
        let r = rollout_of(&mut tape, &gt);
        let l = loss_tpm(&mut tape, &r, &gt, &[0.0; STATE_DIM], None).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn squared_norm_single_step() {
        let mut tape = Tape::new();
        let r = rollout_of(&mut tape, &[[3.0, 4.0]]);
        let l = loss_tpm(&mut tape, &r, &[[0.0, 0.0]], &[0.0; STATE_DIM], None).unwrap();
        assert!((tape.scalar(l) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_net_leaves_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rf = ParamStore::new();
        let net = RewardNet::new(&mut rf, REWARD_FEATURE_DIM, 4, &mut rng);
        rf.set_flat(&vec![0.0; rf.num_scalars()]);
        let log_z = estimate_log_partition(&[0.0; 10], 0.0).unwrap();
        let mut tape = Tape::new();
        let r = rollout_of(&mut tape, &[[3.0, 4.0], [1.0, 1.0]]);
        let bound = net.bind(&mut tape, &rf, false);
        let term = RewardTerm {
            reward: &bound,
            log_z,
            gamma: 1.0,
        };
        let l = loss_tpm(&mut tape, &r, &[[0.0, 0.0], [0.0, 0.0]], &[0.0; STATE_DIM], Some(term)).unwrap();
        assert_eq!(tape.scalar(l), (25.0 + 2.0) / 2.0);
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let mut tape = Tape::new();
        let r = rollout_of(&mut tape, &[[3.0, 4.0]]);
        assert!(loss_tpm(&mut tape, &r, &[[0.0, 0.0], [1.0, 0.0]], &[0.0; STATE_DIM], None).is_err());
    }

    #[test]
    fn no_irl_leaves_reward_untouched() {
        let data = tiny_data(4);
        let model = Model::new(tiny_config(), 1);
        let before = model.rf.clone();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            use_irl: false,
            ..TrainConfig::default()
        };
        let out = train(model, &data, &data, &cfg).unwrap();
        assert_eq!(out.checkpoint.model.rf.flat(), before.flat());
        assert_ne!(out.checkpoint.model.tpm.flat(), Model::new(tiny_config(), 1).tpm.flat());
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_data(4);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            partition_samples: 16,
            ..TrainConfig::default()
        };
        let a = train(Model::new(tiny_config(), 2), &data, &data, &cfg).unwrap();
        let b = train(Model::new(tiny_config(), 2), &data, &data, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.checkpoint, b.checkpoint);
    }

    #[test]
    fn single_step_descends() {
        let data = tiny_data(3);
        let mut model = Model::new(tiny_config(), 4);
        let cfg = TrainConfig {
            gamma_reward: 0.0,
            lr_predictor: 1e-4,
            grad_clip: f64::INFINITY,
            ..TrainConfig::default()
        };
        let batch: Vec<&Prepared> = data.iter().collect();
        let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr_predictor), &model.tpm);
        let before = predictor_step(&mut model, &mut adam, &batch, None, &cfg, 1, 0).unwrap();
        let mut probe = adam.clone();
        let after = predictor_step(&mut model, &mut probe, &batch, None, &cfg, 1, 1).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let data = tiny_data(3);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 3,
            partition_samples: 8,
            ..TrainConfig::default()
        };
        let out = train(Model::new(tiny_config(), 5), &data, &data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        out.checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, out.checkpoint);
        let m = MetricConfig::default();
        assert_eq!(
            loaded.model.evaluate(&data, true, &m).unwrap(),
            out.checkpoint.model.evaluate(&data, true, &m).unwrap()
        );
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        std::fs::write(&path, r#"{"version": 99}"#).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn ablation_flags_follow_index() {
        let data = tiny_data(3);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 3,
            partition_samples: 8,
            ..TrainConfig::default()
        };
        let rows = ablation_grid(tiny_config(), &data, &data, &cfg, &MetricConfig::default(), "synthetic").unwrap();
        let flags: Vec<(&str, bool, bool, bool)> =
            rows.iter().map(|r| (r.index.as_str(), r.mamba, r.irl, r.gnn)).collect();
        assert_eq!(
            flags,
            vec![
                ("H1", true, true, true),
                ("H2", true, true, false),
                ("H3", true, false, true),
                ("H4", true, false, false)
            ]
        );
    }
}
