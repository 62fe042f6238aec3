//! The twelve acceptance checks. Each returns whether it passed and a
//! one-line summary of what it measured.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use trajirl::autodiff::Tape;
use trajirl::data::{stratified_split, synthetic_instances, SplitSpec};
use trajirl::domain::{scenario_window_defaults, PredictionInstance, ScenarioTag, WindowSpec};
use trajirl::encoder::{Encoder, EncoderConfig};
use trajirl::eval::{compute_metrics, csa_terms, CsaInput, CsaWeights, EvalCase, MetricConfig};
use trajirl::nn::{Adam, AdamConfig, ParamStore};
use trajirl::policy::{
    build_replay, demonstrations, evaluate_with_policy, td3_train, ReplayBuffer, Td3Agent, Td3Config, Td3Optim,
    Transition, ACTION_DIM, POLICY_STATE_DIM,
};
use trajirl::reward::{estimate_log_partition, log_partition, loss_rf, PartitionSamples, RewardNet, REWARD_FEATURE_DIM};
use trajirl::ssm::{associative_scan, discretize, sequential_scan, Decoder, DecoderConfig};
use trajirl::trainer::{
    ablation_grid, demonstration_pool, loss_tpm, prepare, train, Model, ModelConfig, RewardTerm, TrainConfig,
};

use super::{fd_check, randomize, rng, spearman, tiny_model_config, tiny_prepared, FdCheck, ToyMdp, TOY_FEATURES};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn random_vec(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------- scan

pub const SCAN_TOL: f64 = 1e-5;

/// Largest output gap between the sequential recurrence and the associative
/// scan over 100 random decoders and inputs of length 1 to 64.
pub fn scan_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut r = rng(1);
    for case in 0..100u64 {
        let cfg = DecoderConfig {
            channels: r.random_range(1..=6),
            state_size: r.random_range(1..=8),
            latent_dim: 4,
            selective: case % 5 != 0,
        };
        let mut store = ParamStore::new();
        let dec = Decoder::new(&mut store, cfg, &mut r);
        randomize(&mut store, 0.6, &mut r);
        let len = r.random_range(1..=64);
        let inputs: Vec<Vec<f64>> = (0..len).map(|_| random_vec(7, &mut r)).collect();
        let h0 = random_vec(cfg.channels * cfg.state_size, &mut r);
        let seq = dec.scan_sequential(&store, &inputs, &h0);
        let par = dec.scan_parallel(&store, &inputs, &h0);
        for (a, b) in seq.iter().flatten().zip(par.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
        let a: Vec<Vec<f64>> = (0..len).map(|_| random_vec(5, &mut r)).collect();
        let b: Vec<Vec<f64>> = (0..len).map(|_| random_vec(5, &mut r)).collect();
        let h = random_vec(5, &mut r);
        for (x, y) in sequential_scan(&a, &b, &h).iter().flatten().zip(associative_scan(&a, &b, &h).iter().flatten()) {
            worst = worst.max((x - y).abs());
        }
    }
    Outcome::new(worst < SCAN_TOL, format!("max |sequential − scan| = {worst:.2e} over 100 cases"))
}

// ---------------------------------------------------------------- ZOH

pub const ZOH_TOL: f64 = 1e-6;

/// `exp(x)` by its Taylor series.
fn exp_series(x: f64) -> f64 {
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..80 {
        term *= x / k as f64;
        sum += term;
    }
    sum
}

/// `∫₀^Δ exp(aτ) dτ · b` by composite Simpson quadrature.
fn zoh_input_quadrature(a: f64, b: f64, delta: f64) -> f64 {
    let n = 2000;
    let h = delta / n as f64;
    let f = |tau: f64| exp_series(a * tau);
    let mut s = f(0.0) + f(delta);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    s * h / 3.0 * b
}

pub fn zoh() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(1..6);
        let a: Vec<f64> = (0..n).map(|_| -r.random_range(0.0..6.0)).collect();
        let b = random_vec(n, &mut r);
        let delta = r.random_range(0.01..2.0);
        let (abar, bbar) = discretize(&a, &b, delta).unwrap();
        for i in 0..n {
            worst = worst.max((abar[i] - exp_series(a[i] * delta)).abs());
            worst = worst.max((bbar[i] - zoh_input_quadrature(a[i], b[i], delta)).abs());
        }
    }
    let eps = 1e-8;
    let mut limit: f64 = 0.0;
    for delta in [0.01, 0.1, 1.0, 2.0] {
        for a in [-eps, 0.0, eps] {
            let (abar, bbar) = discretize(&[a], &[0.7], delta).unwrap();
            limit = limit.max((abar[0] - 1.0).abs()).max((bbar[0] - 0.7 * delta).abs());
        }
    }
    Outcome::new(
        worst < ZOH_TOL && limit < ZOH_TOL,
        format!("max quadrature gap {worst:.2e}, A→0 gap {limit:.2e} at ε = 1e-8"),
    )
}

// ---------------------------------------------------------------- gradients

pub const GRAD_SEEDS: u64 = 20;
pub const GRAD_TOL: f64 = 1e-4;
const GRAD_COORDS: usize = 60;

pub fn grad_reward_network(seed: u64) -> FdCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let net = RewardNet::new(&mut store, REWARD_FEATURE_DIM, 8, &mut r);
    randomize(&mut store, 0.5, &mut r);
    let x = random_vec(7 * REWARD_FEATURE_DIM, &mut r);
    let w = random_vec(7, &mut r);
    fd_check(
        &store,
        |tape, s, trainable| {
            let b = net.bind(tape, s, trainable);
            let xv = tape.constant(x.clone(), 7, REWARD_FEATURE_DIM);
            let out = b.forward(tape, xv);
            let out = tape.reshape(out, 1, 7);
            let wv = tape.row(&w);
            tape.dot(out, wv)
        },
        GRAD_COORDS,
        &mut r,
    )
}

pub fn grad_gat_encoder(seed: u64) -> FdCheck {
    let data = tiny_prepared(3);
    let mut r = rng(100 + seed);
    let mut store = ParamStore::new();
    let enc = Encoder::new(
        &mut store,
        EncoderConfig {
            hidden_dim: 6,
            attention_dim: 5,
        },
        &mut r,
    );
    randomize(&mut store, 0.4, &mut r);
    let p = &data[seed as usize % data.len()];
    let w = random_vec(6, &mut r);
    fd_check(
        &store,
        |tape, s, trainable| {
            let b = enc.bind(tape, s, trainable);
            let h = b.encode(tape, &p.instance, &p.graph, true).unwrap();
            let wv = tape.row(&w);
            tape.dot(h, wv)
        },
        GRAD_COORDS,
        &mut r,
    )
}

pub fn grad_ssm_rollout(seed: u64) -> FdCheck {
    let mut r = rng(200 + seed);
    let mut store = ParamStore::new();
    let cfg = DecoderConfig {
        channels: 4,
        state_size: 3,
        latent_dim: 6,
        selective: seed % 4 != 0,
    };
    let dec = Decoder::new(&mut store, cfg, &mut r);
    randomize(&mut store, 0.4, &mut r);
    let latent = random_vec(6, &mut r);
    let last = random_vec(7, &mut r);
    let horizon = 8;
    let w = random_vec(7 * horizon, &mut r);
    fd_check(
        &store,
        |tape, s, trainable| {
            let b = dec.bind(tape, s, trainable);
            let l = tape.row(&latent);
            let roll = b.rollout(tape, l, &last, horizon, None).unwrap();
            let all = tape.concat(&roll.states);
            let wv = tape.row(&w);
            tape.dot(all, wv)
        },
        GRAD_COORDS,
        &mut r,
    )
}

pub fn grad_loss_tpm(seed: u64) -> FdCheck {
    let data = tiny_prepared(4);
    let mut r = rng(300 + seed);
    let mut model = Model::new(tiny_model_config(), seed);
    randomize(&mut model.tpm, 0.3, &mut r);
    randomize(&mut model.rf, 0.5, &mut r);
    let p = &data[seed as usize % data.len()];
    let log_z = r.random_range(-1.0..1.0);
    fd_check(
        &model.tpm,
        |tape, s, trainable| {
            let enc = model.encoder.bind(tape, s, trainable);
            let dec = model.decoder.bind(tape, s, trainable);
            let latent = enc.encode(tape, &p.instance, &p.graph, true).unwrap();
            let roll = dec
                .rollout(tape, latent, &p.last_state, p.gt_positions.len(), None)
                .unwrap();
            let reward = model.reward.bind(tape, &model.rf, false);
            let term = RewardTerm {
                reward: &reward,
                log_z,
                gamma: 0.3,
            };
            loss_tpm(tape, &roll, &p.gt_positions, &p.last_state, Some(term)).unwrap()
        },
        GRAD_COORDS,
        &mut r,
    )
}

pub fn grad_loss_rf(seed: u64) -> FdCheck {
    let data = tiny_prepared(5);
    let pool = demonstration_pool(&data);
    let mut r = rng(400 + seed);
    let mut store = ParamStore::new();
    let net = RewardNet::new(&mut store, REWARD_FEATURE_DIM, 6, &mut r);
    randomize(&mut store, 0.5, &mut r);
    let samples = pool.sample(64, &mut r).unwrap();
    let demos: Vec<Vec<f64>> = data.iter().take(4).map(|p| p.demo_pairs.clone()).collect();
    fd_check(
        &store,
        |tape, s, trainable| {
            let b = net.bind(tape, s, trainable);
            loss_rf(tape, &b, &demos, &samples, 1e-3).unwrap()
        },
        GRAD_COORDS,
        &mut r,
    )
}

pub const GRAD_SUITES: [(&str, fn(u64) -> FdCheck); 5] = [
    ("reward", grad_reward_network),
    ("GAT", grad_gat_encoder),
    ("SSM rollout", grad_ssm_rollout),
    ("L_TPM", grad_loss_tpm),
    ("L_RF", grad_loss_rf),
];

/// Every seed within tolerance and at most 5% of coordinates at kinks.
pub fn grad_suite_ok(checks: &[FdCheck]) -> (bool, f64) {
    let worst = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    let kinks: usize = checks.iter().map(|c| c.kinks).sum();
    let checked: usize = checks.iter().map(|c| c.checked).sum();
    (worst < GRAD_TOL && kinks * 20 <= checked, worst)
}

pub fn gradients() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, suite) in GRAD_SUITES {
        let checks: Vec<FdCheck> = (0..GRAD_SEEDS).map(suite).collect();
        let (ok, worst) = grad_suite_ok(&checks);
        pass &= ok;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Outcome::new(pass, format!("worst relative error per suite ({GRAD_SEEDS} seeds): {}", parts.join(", ")))
}

// ---------------------------------------------------------------- toy MDP

/// Monte-Carlo against exact `log Z` for random reward networks, then
/// likelihood/frequency rank correlation after fitting demonstrations.
pub fn toy_mdp() -> Outcome {
    let mdp = ToyMdp::new();
    let n_traj = mdp.n_trajectories();
    let all_features: Vec<Vec<f64>> = (0..n_traj).map(|k| mdp.features(k)).collect();
    let returns = |net: &RewardNet, store: &ParamStore| -> Vec<f64> {
        all_features.iter().map(|f| net.pairs_return(store, f)).collect()
    };
    let log_sum_exp = |v: &[f64]| trajirl::autodiff::log_sum_exp(v);

    let mut worst_z: f64 = 0.0;
    for seed in 0..5 {
        let mut r = rng(40 + seed);
        let mut store = ParamStore::new();
        let net = RewardNet::new(&mut store, TOY_FEATURES, 16, &mut r);
        let exact = log_sum_exp(&returns(&net, &store));
        let idx = mdp.uniform_samples(10_000, &mut r);
        let rows: Vec<f64> = idx.iter().flat_map(|&k| all_features[k].iter().copied()).collect();
        let samples = PartitionSamples::trajectories(rows, mdp.steps, mdp.log_uniform());
        let mut tape = Tape::new();
        let b = net.bind(&mut tape, &store, false);
        let lz = log_partition(&mut tape, &b, &samples).unwrap();
        let mc = tape.scalar(lz);
        let sample_returns: Vec<f64> = idx.iter().map(|&k| net.pairs_return(&store, &all_features[k])).collect();
        let direct = estimate_log_partition(&sample_returns, mdp.log_uniform()).unwrap();
        assert!((mc - direct).abs() < 1e-9);
        worst_z = worst_z.max(((mc - exact) / exact).abs());
    }

    let mut r = rng(7);
    let demo_idx = mdp.demonstrations(2_000, &mut r);
    let demos: Vec<Vec<f64>> = demo_idx.iter().map(|&k| all_features[k].clone()).collect();
    let mut store = ParamStore::new();
    let net = RewardNet::new(&mut store, TOY_FEATURES, 16, &mut r);
    let mut adam = Adam::new(AdamConfig::with_lr(1e-2), &store);
    let mut losses = Vec::new();
    for _ in 0..300 {
        let idx = mdp.uniform_samples(1_024, &mut r);
        let rows: Vec<f64> = idx.iter().flat_map(|&k| all_features[k].iter().copied()).collect();
        let samples = PartitionSamples::trajectories(rows, mdp.steps, mdp.log_uniform());
        let mut tape = Tape::new();
        let b = net.bind(&mut tape, &store, true);
        let loss = loss_rf(&mut tape, &b, &demos, &samples, 1e-3).unwrap();
        losses.push(tape.scalar(loss));
        let g = tape.backward(loss).for_store(&store);
        adam.step(&mut store, &g);
    }
    let learned = returns(&net, &store);
    let lz = log_sum_exp(&learned);
    let likelihood: Vec<f64> = learned.iter().map(|x| (x - lz).exp()).collect();
    let mut freq = vec![0.0; n_traj];
    for &k in &demo_idx {
        freq[k] += 1.0;
    }
    let rho = spearman(&likelihood, &freq);
    let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
    Outcome::new(
        worst_z < 0.05 && rho > 0.8 && tail < head,
        format!("log Ẑ rel err {worst_z:.4} (M = 10000), rank corr {rho:.3}, L_RF {head:.3} → {tail:.3}"),
    )
}

// ---------------------------------------------------------------- metrics

fn brute_force(cases: &[EvalCase], cfg: &MetricConfig) -> [f64; 5] {
    let d = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let mut out = [0.0; 5];
    for c in cases {
        let t = c.predicted.len();
        let mut ade = 0.0;
        for i in 0..t {
            ade += d(c.predicted[i], c.ground_truth[i]);
        }
        let fde = d(c.predicted[t - 1], c.ground_truth[t - 1]);
        let mut apde = 0.0;
        for i in 0..t {
            let mut best = f64::MAX;
            for j in 0..t {
                best = best.min(d(c.predicted[i], c.ground_truth[j]));
            }
            apde += best;
        }
        let mut crash = false;
        for nb in &c.neighbors {
            for i in 0..t {
                if let Some(q) = nb[i] {
                    if d(c.predicted[i], q) <= cfg.crash_distance {
                        crash = true;
                    }
                }
            }
        }
        out[0] += ade / t as f64;
        out[1] += fde;
        out[2] += if fde > cfg.miss_threshold { 1.0 } else { 0.0 };
        out[3] += apde / t as f64;
        out[4] += if crash { 1.0 } else { 0.0 };
    }
    out.map(|x| x / cases.len() as f64)
}

pub fn random_cases(n: usize, r: &mut impl Rng) -> Vec<EvalCase> {
    let pt = |r: &mut dyn rand::RngCore| [r.random_range(-8.0..8.0), r.random_range(-8.0..8.0)];
    (0..n)
        .map(|_| {
            let t = r.random_range(1..30);
            EvalCase {
                predicted: (0..t).map(|_| pt(r)).collect(),
                ground_truth: (0..t).map(|_| pt(r)).collect(),
                neighbors: (0..r.random_range(0..4))
                    .map(|_| (0..t).map(|_| r.random_bool(0.7).then(|| pt(r))).collect())
                    .collect(),
            }
        })
        .collect()
}

pub fn metrics() -> Outcome {
    let mut r = rng(5);
    let cfg = MetricConfig {
        miss_threshold: 6.0,
        crash_distance: 2.0,
    };
    let cases = random_cases(100, &mut r);
    let rep = compute_metrics(&cases, &cfg).unwrap();
    let oracle = brute_force(&cases, &cfg);
    let got = [rep.ade, rep.fde, rep.mr, rep.apde, rep.cr];
    let gap = got.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let hand = compute_metrics(
        &[EvalCase {
            predicted: vec![[0.0, 0.0], [3.0, 4.0]],
            ground_truth: vec![[0.0, 0.0], [0.0, 0.0]],
            neighbors: vec![],
        }],
        &MetricConfig::default(),
    )
    .unwrap();
    let hand_ok = hand.ade == 2.5 && hand.fde == 5.0;
    Outcome::new(
        gap < 1e-9 && hand_ok,
        format!(
            "max gap to brute force {gap:.1e} (MR {:.2}, CR {:.2}); hand case ADE {} FDE {}",
            rep.mr, rep.cr, hand.ade, hand.fde
        ),
    )
}

// ---------------------------------------------------------------- CSA

/// Published APDE values `(method, known, unknown)`.
pub const TABLE_APDE: [(&str, f64, f64); 4] = [
    ("ours", 0.42, 2.42),
    ("GNN-RNN", 0.55, 3.01),
    ("mmTransformer", 0.59, 2.67),
    ("AppL", 0.48, 3.97),
];

pub fn csa_apde_scores() -> Vec<(String, f64)> {
    let input = CsaInput {
        methods: TABLE_APDE.iter().map(|m| m.0.to_string()).collect(),
        metrics: vec!["APDE".into()],
        known: TABLE_APDE.iter().map(|m| vec![m.1]).collect(),
        unknown: TABLE_APDE.iter().map(|m| vec![m.2]).collect(),
    };
    let w = CsaWeights { alpha: 1.0, beta: 0.0 };
    TABLE_APDE
        .iter()
        .map(|m| (m.0.to_string(), csa_terms(&input, m.0, &[0], w).unwrap().csa))
        .collect()
}

pub fn csa_reproduction() -> Outcome {
    let scores = csa_apde_scores();
    let ours = scores[0].1;
    let second = scores[1..].iter().map(|s| s.1).fold(f64::MIN, f64::max);
    let ratio = ours / second;
    Outcome::new(
        (ratio - 2.3).abs() <= 0.1,
        format!("APDE CSA ours {ours:.3}, second best {second:.3}, ratio {ratio:.3}"),
    )
}

// ---------------------------------------------------------------- overfit

pub fn overfit_instances() -> Vec<PredictionInstance> {
    let (h, f) = scenario_window_defaults(ScenarioTag::Roundabout);
    let window = WindowSpec {
        history: h,
        horizon: f,
        stride: 5,
    };
    let mut inst = synthetic_instances(ScenarioTag::Roundabout, 4, 8, 7, window).unwrap();
    inst.truncate(50);
    inst
}

pub fn overfit() -> Outcome {
    let data = prepare(&overfit_instances(), 30.0);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 5,
        lr_predictor: 1e-2,
        ..TrainConfig::default()
    };
    let out = train(Model::new(ModelConfig::default(), 0), &data, &[], &cfg).unwrap();
    let ade = out.checkpoint.model.evaluate(&data, true, &MetricConfig::default()).unwrap().ade;
    Outcome::new(
        data.len() == 50 && ade < 0.1,
        format!("train ADE {ade:.4} m on {} instances after 200 epochs", data.len()),
    )
}

// ---------------------------------------------------------------- ablation

pub fn ablation() -> Outcome {
    let (h, f) = scenario_window_defaults(ScenarioTag::Roundabout);
    let window = WindowSpec {
        history: h,
        horizon: f,
        stride: 5,
    };
    let inst = synthetic_instances(ScenarioTag::Roundabout, 12, 9, 11, window).unwrap();
    let spec = SplitSpec {
        train_fraction: 0.8,
        val_fraction: 0.2,
        test_fraction: 0.0,
        seed: 0,
    };
    let split = stratified_split(&inst, |i| i.scenario, &spec).unwrap();
    let (tr, va) = (prepare(&split.train, 30.0), prepare(&split.val, 30.0));
    let model = ModelConfig {
        hidden_dim: 32,
        attention_dim: 32,
        ssm_channels: 32,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 8,
        lr_predictor: 1e-2,
        ..TrainConfig::default()
    };
    let rows = ablation_grid(model, &tr, &va, &cfg, &MetricConfig::default(), "roundabout").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ablation.csv");
    trajirl::eval::report::write_rows(&csv, &rows).unwrap();
    let header = std::fs::read_to_string(&csv).unwrap();
    let shaped = header.starts_with("Dataset,Index,Mamba,MaxEntIRL,GNN,ADE,FDE,MR,APDE,CR") && rows.len() == 4;
    let h1 = rows[0].ade;
    let best = rows.iter().all(|r| h1 <= r.ade);
    let ades: Vec<String> = rows.iter().map(|r| format!("{} {:.3}", r.index, r.ade)).collect();
    Outcome::new(shaped && best, format!("validation ADE {}", ades.join(", ")))
}

// ---------------------------------------------------------------- OOD

fn ood_instances(tag: ScenarioTag, seed: u64) -> Vec<PredictionInstance> {
    let (h, f) = scenario_window_defaults(tag);
    let window = WindowSpec {
        history: h,
        horizon: f,
        stride: 10,
    };
    synthetic_instances(tag, 3, 6, seed, window).unwrap()
}

pub fn ood() -> Outcome {
    let mut src = ood_instances(ScenarioTag::Intersection, 1);
    src.extend(ood_instances(ScenarioTag::Roundabout, 2));
    let tgt = ood_instances(ScenarioTag::Highway, 3);
    let (src, tgt) = (prepare(&src, 30.0), prepare(&tgt, 30.0));
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 8,
        lr_predictor: 1e-2,
        ..TrainConfig::default()
    };
    let model = train(Model::new(ModelConfig::default(), 0), &src, &[], &cfg).unwrap().checkpoint.model;
    let mc = MetricConfig::default();
    let base = model.evaluate(&tgt, true, &mc).unwrap();
    // Only source demonstrations reach the replay buffer.
    let demos = demonstrations(&src).unwrap();
    let mut agent = Td3Agent::new(POLICY_STATE_DIM, ACTION_DIM, Td3Config::default());
    let mut buffer = build_replay(&demos, &model.reward, &model.rf, &agent).unwrap();
    let source_only = demos.len() == src.len() && buffer.len() == demos.iter().map(|d| d.len() - 1).sum::<usize>();
    td3_train(&mut agent, &mut buffer).unwrap();
    let with_policy = evaluate_with_policy(&model, &agent, &tgt, true, &mc).unwrap();
    let cut = 1.0 - with_policy.ade / base.ade;
    Outcome::new(
        source_only && cut >= 0.2,
        format!(
            "highway ADE {:.2} → {:.2} with the policy ({:.0}% lower)",
            base.ade,
            with_policy.ade,
            100.0 * cut
        ),
    )
}

// ---------------------------------------------------------------- TD3

/// One-step task with reward `−(a − s/2)²`; the optimal actor is `s/2`.
pub fn td3_toy_buffer(n: usize, seed: u64) -> ReplayBuffer {
    let mut r = rng(seed);
    let mut buf = ReplayBuffer::new(1, 1);
    for _ in 0..n {
        let s: f64 = r.random_range(-1.0..1.0);
        let a: f64 = r.random_range(-1.0..1.0);
        buf.push(Transition {
            s: vec![s],
            a: vec![a],
            r: -(a - 0.5 * s).powi(2),
            s_next: vec![s],
            done: true,
        });
    }
    buf
}

pub fn td3_toy_config() -> Td3Config {
    Td3Config {
        hidden: 32,
        a_max: 1.0,
        batch_size: 64,
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        epochs: 40,
        updates_per_epoch: 100,
        ..Td3Config::default()
    }
}

/// Whether the actor moved exactly on every third critic update.
pub fn td3_delay_pattern(updates: u64) -> bool {
    let buffer = td3_toy_buffer(256, 8);
    let mut agent = Td3Agent::new(1, 1, td3_toy_config());
    let mut optim = Td3Optim::new(&agent);
    let mut r = rng(9);
    (1..=updates).all(|k| {
        let before = agent.actor_params.clone();
        let stats = agent.update(&mut optim, &buffer, &mut r).unwrap();
        let moved = agent.actor_params.flat() != before.flat();
        let due = k % 3 == 0;
        moved == due && stats.actor_loss.is_some() == due && agent.actor_updates == k / 3 && agent.critic_updates == k
    })
}

pub fn td3() -> Outcome {
    let delay_ok = td3_delay_pattern(30);
    let mut buffer = td3_toy_buffer(4_096, 10);
    let mut agent = Td3Agent::new(1, 1, td3_toy_config());
    td3_train(&mut agent, &mut buffer).unwrap();
    let gap = (0..=40)
        .map(|k| {
            let s = -1.0 + k as f64 / 20.0;
            (agent.act(&[s])[0] - 0.5 * s).abs()
        })
        .fold(0.0, f64::max);
    Outcome::new(
        delay_ok && gap < 0.05,
        format!(
            "actor stepped every 3rd critic update: {delay_ok}; max |π(s) − s/2| = {gap:.4} ({} actor / {} critic updates)",
            agent.actor_updates, agent.critic_updates
        ),
    )
}

// ---------------------------------------------------------------- latency

pub const HORIZONS: [usize; 5] = [25, 50, 100, 200, 400];

/// Best-of-five seconds per step of the tape-free decoder rollout for each
/// horizon.
pub fn per_step_costs() -> Vec<f64> {
    let mut r = rng(11);
    let mut store = ParamStore::new();
    let dec = Decoder::new(&mut store, DecoderConfig::default(), &mut r);
    randomize(&mut store, 0.1, &mut r);
    let latent = random_vec(dec.config.latent_dim, &mut r);
    let last = random_vec(7, &mut r);
    // Horizons are interleaved within each trial so that drift in machine
    // load hits all of them alike; the minimum over trials is kept.
    let mut best = [f64::INFINITY; HORIZONS.len()];
    for _ in 0..9 {
        for (k, &h) in HORIZONS.iter().enumerate() {
            let reps = (4_000 / h).max(1);
            let t = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(dec.predict(&store, &latent, &last, h).unwrap());
            }
            best[k] = best[k].min(t.elapsed().as_secs_f64() / (reps * h) as f64);
        }
    }
    best.to_vec()
}

pub fn latency() -> Outcome {
    let costs = per_step_costs();
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = costs.iter().copied().fold(0.0, f64::max);
    let us: Vec<String> = HORIZONS
        .iter()
        .zip(&costs)
        .map(|(h, c)| format!("{h}: {:.1} µs", c * 1e6))
        .collect();
    Outcome::new(hi / lo <= 1.2, format!("per-step cost {} (max/min {:.3})", us.join(", "), hi / lo))
}

// ---------------------------------------------------------------- CLI

fn trajirl(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_trajirl")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "trajirl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small end-to-end configuration shared by the CLI checks.
pub const CLI_SETTINGS: [&str; 12] = [
    "train.epochs=2",
    "data.synth_recordings=1",
    "data.synth_agents=4",
    "data.stride=15",
    "model.hidden_dim=8",
    "model.attention_dim=8",
    "model.ssm_channels=8",
    "model.ssm_state=4",
    "model.reward_hidden=8",
    "policy.epochs=2",
    "policy.updates_per_epoch=10",
    "policy.batch_size=16",
];

fn with_settings<'a>(mut args: Vec<&'a str>, extra: &[&'a str]) -> Vec<&'a str> {
    for s in CLI_SETTINGS.iter().chain(extra) {
        args.push("--set");
        args.push(s);
    }
    args
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

/// Runs the full command chain into `root` and returns every CSV per command.
pub fn cli_chain(root: &Path) -> Vec<(String, Vec<(String, Vec<u8>)>)> {
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let data = root.join("data");
    trajirl(&["synth", "roundabout", "3", "--seed", "4", "--agents", "4", "--out", &s(&data)]);
    let train_dir = root.join("train");
    trajirl(&with_settings(vec!["train", "--seed", "3", "--run-dir", &s(&train_dir)], &[]));
    let ck = s(&train_dir.join("checkpoint.json"));
    let eval_dir = root.join("eval");
    trajirl(&["eval", "--checkpoint", &ck, "--split", "target", "--run-dir", &s(&eval_dir)]);
    let pol_dir = root.join("policy");
    trajirl(&["train-policy", "--checkpoint", &ck, "--run-dir", &s(&pol_dir)]);
    let ood_dir = root.join("ood");
    let pol = s(&pol_dir.join("policy.json"));
    trajirl(&["ood-eval", "--checkpoint", &ck, "--policy", &pol, "--run-dir", &s(&ood_dir)]);
    let csa_dir = root.join("csa");
    let known = s(&ood_dir.join("known.csv"));
    let unknown = s(&ood_dir.join("unknown.csv"));
    trajirl(&["csa", "--known", &known, "--unknown", &unknown, "--run-dir", &s(&csa_dir)]);
    let ablate_dir = root.join("ablate");
    trajirl(&with_settings(vec!["ablate", "--seed", "3", "--run-dir", &s(&ablate_dir)], &[]));
    [
        ("synth", data),
        ("train", train_dir),
        ("eval", eval_dir),
        ("train-policy", pol_dir),
        ("ood-eval", ood_dir),
        ("csa", csa_dir),
        ("ablate", ablate_dir),
    ]
    .into_iter()
    .map(|(name, dir)| (name.to_string(), csvs(&dir)))
    .collect()
}

pub fn cli_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = cli_chain(a.path());
    let second = cli_chain(b.path());
    let files: usize = first.iter().map(|(_, f)| f.len()).sum();
    let all_present = first.iter().all(|(_, f)| !f.is_empty());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Outcome::new(
        all_present && differing.is_empty(),
        format!("{files} CSVs from 7 commands compared; differing: {differing:?}"),
    )
}
