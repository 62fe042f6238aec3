//! Experiment orchestration behind the command-line subcommands. Every
//! command writes its artifacts and a `config.toml` echo into one run
//! directory and is deterministic for a fixed configuration.

use std::path::{Path, PathBuf};

use crate::config::{DataSource, RunConfig};
use crate::data::{
    load_directory, recording_instances, rows_to_recording, stratified_split, synth_scenario, write_recording,
};
use crate::domain::{PredictionInstance, ScenarioTag};
use crate::error::{Error, Result};
use crate::eval::{
    csa_terms, read_report, write_csa, write_radar, write_report, CsaInput, CsaRow, CsaWeights, MetricReport,
    ReportRow,
};
use crate::policy::{
    build_replay, demonstrations, evaluate_with_policy, td3_train, PolicyCheckpoint, Td3Agent, ACTION_DIM,
    POLICY_STATE_DIM,
};
use crate::trainer::{ablation_grid, prepare, train, write_training_log, Checkpoint, Model, Prepared};

/// Seed offset separating synthetic target recordings from source ones.
const TARGET_SEED_OFFSET: u64 = 1_000;

/// Creates `explicit` or a fresh `<output_dir>/<command>-<timestamp>` and
/// writes the config echo into it.
pub fn run_dir(config: &RunConfig, command: &str, explicit: Option<&Path>) -> Result<PathBuf> {
    let dir = match explicit {
        Some(d) => d.to_path_buf(),
        None => {
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            let base = config.output_dir.join(format!("{command}-{stamp}"));
            let mut dir = base.clone();
            let mut k = 1;
            while dir.exists() {
                dir = PathBuf::from(format!("{}-{k}", base.display()));
                k += 1;
            }
            dir
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let echo = dir.join("config.toml");
    std::fs::write(&echo, config.to_toml()).map_err(|e| Error::io(&echo, e))?;
    Ok(dir)
}

/// Writes `count` synthetic recordings of `kind` into `out_dir`, one CSV each.
pub fn cmd_synth(kind: ScenarioTag, count: usize, agents: usize, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if count == 0 || agents == 0 {
        return Err(Error::Config("count and agents must be positive".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    synth_scenario(kind, count, agents, seed)
        .into_iter()
        .map(|rec| {
            let path = out_dir.join(format!("{}.csv", rec.id));
            write_recording(&path, &rec.rows)?;
            Ok(path)
        })
        .collect()
}

/// Windowed instances of every listed dataset.
pub fn load_instances(config: &RunConfig, sources: &[DataSource], seed: u64) -> Result<Vec<PredictionInstance>> {
    let d = &config.data;
    let mut out = Vec::new();
    for s in sources {
        let window = d.window(s.scenario);
        match &s.path {
            Some(p) => {
                if !p.is_dir() {
                    return Err(Error::Config(format!("data path {} does not exist", p.display())));
                }
                out.extend(load_directory(p, s.scenario, window, d.downsample)?);
            }
            None => {
                for rec in synth_scenario(s.scenario, d.synth_recordings, d.synth_agents, seed) {
                    let recording = rows_to_recording(&rec.rows)?;
                    out.extend(recording_instances(&recording, s.scenario, window, d.downsample)?);
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("the configured datasets yield no prediction instances"));
    }
    Ok(out)
}

/// Train, validation and test splits of the source datasets, prepared.
pub struct SourceSplits {
    pub train: Vec<Prepared>,
    pub val: Vec<Prepared>,
    pub test: Vec<Prepared>,
}

pub fn source_splits(config: &RunConfig) -> Result<SourceSplits> {
    let inst = load_instances(config, &config.data.sources, config.seed)?;
    let split = stratified_split(&inst, |i| i.scenario, &config.data.split)?;
    let r = config.model.graph_radius;
    Ok(SourceSplits {
        train: prepare(&split.train, r),
        val: prepare(&split.val, r),
        test: prepare(&split.test, r),
    })
}

pub fn target_set(config: &RunConfig) -> Result<Vec<Prepared>> {
    if config.data.targets.is_empty() {
        return Err(Error::Config("data.targets is empty".into()));
    }
    let inst = load_instances(config, &config.data.targets, config.seed + TARGET_SEED_OFFSET)?;
    Ok(prepare(&inst, config.model.graph_radius))
}

/// Name of the scenarios present in `data`, joined with `+`.
fn dataset_name(data: &[Prepared]) -> String {
    let mut tags: Vec<ScenarioTag> = data.iter().map(|p| p.instance.scenario).collect();
    tags.sort();
    tags.dedup();
    tags.iter().map(|t| t.as_str()).collect::<Vec<_>>().join("+")
}

fn per_scenario(data: &[Prepared]) -> Vec<(ScenarioTag, Vec<Prepared>)> {
    ScenarioTag::ALL
        .iter()
        .filter_map(|&t| {
            let part: Vec<Prepared> = data.iter().filter(|p| p.instance.scenario == t).cloned().collect();
            (!part.is_empty()).then_some((t, part))
        })
        .collect()
}

/// Trains the predictor on the source train split; writes the checkpoint,
/// the epoch log and a test-split report.
pub fn cmd_train(config: &RunConfig, dir: &Path) -> Result<Checkpoint> {
    let splits = source_splits(config)?;
    let model = Model::new(config.model, config.train.seed);
    let out = train(model, &splits.train, &splits.val, &config.train)?;
    let mut checkpoint = out.checkpoint;
    checkpoint.config_echo = config.to_toml();
    checkpoint.save(&dir.join("checkpoint.json"))?;
    write_training_log(&dir.join("train_log.csv"), &out.log)?;
    if !splits.test.is_empty() {
        let rows = report_rows(&checkpoint, &splits.test, config)?;
        write_report(&dir.join("report.csv"), &rows)?;
    }
    Ok(checkpoint)
}

fn report_rows(checkpoint: &Checkpoint, data: &[Prepared], config: &RunConfig) -> Result<Vec<ReportRow>> {
    per_scenario(data)
        .iter()
        .map(|(tag, part)| {
            let m = checkpoint.model.evaluate(part, checkpoint.train.use_gnn, &config.metrics)?;
            Ok(ReportRow::new("TPM", tag.as_str(), &m))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalSplit {
    Train,
    Val,
    Test,
    /// Every instance of the target datasets.
    Target,
}

pub fn cmd_eval(config: &RunConfig, checkpoint: &Checkpoint, split: EvalSplit, dir: &Path) -> Result<Vec<ReportRow>> {
    let data = match split {
        EvalSplit::Target => target_set(config)?,
        s => {
            let splits = source_splits(config)?;
            match s {
                EvalSplit::Train => splits.train,
                EvalSplit::Val => splits.val,
                _ => splits.test,
            }
        }
    };
    if data.is_empty() {
        return Err(Error::invalid(format!("the {split:?} split is empty")));
    }
    let rows = report_rows(checkpoint, &data, config)?;
    write_report(&dir.join("report.csv"), &rows)?;
    Ok(rows)
}

/// Trains the TD3 policy on demonstrations from the source train split only.
pub fn cmd_train_policy(config: &RunConfig, checkpoint: &Checkpoint, dir: &Path) -> Result<PolicyCheckpoint> {
    let splits = source_splits(config)?;
    let demos = demonstrations(&splits.train)?;
    let model = &checkpoint.model;
    let mut agent = Td3Agent::new(POLICY_STATE_DIM, ACTION_DIM, config.policy);
    let mut buffer = build_replay(&demos, &model.reward, &model.rf, &agent)?;
    let log = td3_train(&mut agent, &mut buffer)?;
    let out = PolicyCheckpoint::new(agent, config.to_toml());
    out.save(&dir.join("policy.json"))?;
    crate::eval::report::write_rows(&dir.join("policy_log.csv"), &log)?;
    Ok(out)
}

/// Baseline and +Policy rows on the source test split (`known.csv`) and on
/// the target datasets (`unknown.csv`); `report.csv` holds both.
pub fn cmd_ood_eval(
    config: &RunConfig,
    checkpoint: &Checkpoint,
    policy: &PolicyCheckpoint,
    dir: &Path,
) -> Result<Vec<ReportRow>> {
    let known = source_splits(config)?.test;
    let unknown = target_set(config)?;
    let mut all = Vec::new();
    for (file, data) in [("known.csv", &known), ("unknown.csv", &unknown)] {
        if data.is_empty() {
            continue;
        }
        let rows = ood_rows(config, checkpoint, policy, data)?;
        write_report(&dir.join(file), &rows)?;
        all.extend(rows);
    }
    write_report(&dir.join("report.csv"), &all)?;
    Ok(all)
}

fn ood_rows(
    config: &RunConfig,
    checkpoint: &Checkpoint,
    policy: &PolicyCheckpoint,
    data: &[Prepared],
) -> Result<Vec<ReportRow>> {
    let use_gnn = checkpoint.train.use_gnn;
    let name = dataset_name(data);
    let base = checkpoint.model.evaluate(data, use_gnn, &config.metrics)?;
    let with_policy = evaluate_with_policy(&checkpoint.model, &policy.agent, data, use_gnn, &config.metrics)?;
    Ok(vec![
        ReportRow::new("Baseline", name.as_str(), &base),
        ReportRow::new("+Policy", name.as_str(), &with_policy),
    ])
}

fn method_reports(path: &Path) -> Result<Vec<(String, MetricReport)>> {
    let rows = read_report(path)?;
    let mut out: Vec<(String, MetricReport)> = Vec::new();
    for r in rows {
        if out.iter().any(|(m, _)| *m == r.method) {
            return Err(Error::invalid(format!("{} lists method {} twice", path.display(), r.method)));
        }
        out.push((r.method.clone(), r.metrics()));
    }
    Ok(out)
}

/// Per-metric CSA of every method. Metrics whose normalization is degenerate
/// are skipped with a warning; if none remain the first error is returned.
pub fn csa_rows(input: &CsaInput, weights: CsaWeights) -> Result<Vec<CsaRow>> {
    let mut rows = Vec::new();
    let mut first_err = None;
    for k in 0..input.metrics.len() {
        let metric: Result<Vec<CsaRow>> = input.methods.iter().map(|m| csa_terms(input, m, &[k], weights)).collect();
        match metric {
            Ok(r) => rows.extend(r),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", input.metrics[k]);
                first_err.get_or_insert(e);
            }
        }
    }
    match (rows.is_empty(), first_err) {
        (true, Some(e)) => Err(e),
        _ => {
            // method-major, metric order preserved
            rows.sort_by_key(|r| input.methods.iter().position(|m| *m == r.method));
            Ok(rows)
        }
    }
}

pub fn cmd_csa(known: &Path, unknown: &Path, weights: CsaWeights, dir: &Path) -> Result<Vec<CsaRow>> {
    let input = CsaInput::from_reports(&method_reports(known)?, &method_reports(unknown)?)?;
    let rows = csa_rows(&input, weights)?;
    write_csa(&dir.join("csa.csv"), &rows)?;
    write_radar(&dir.join("radar.svg"), &rows)?;
    Ok(rows)
}

/// Trains the four IRL/GNN settings from the same initial weights and
/// writes the validation metrics of each.
pub fn cmd_ablate(config: &RunConfig, dir: &Path) -> Result<()> {
    let splits = source_splits(config)?;
    let name = dataset_name(&splits.train);
    let rows = ablation_grid(
        config.model,
        &splits.train,
        &splits.val,
        &config.train,
        &config.metrics,
        &name,
    )?;
    crate::eval::report::write_rows(&dir.join("ablation.csv"), &rows)
}

/// Exit code for an error: 2 for configuration problems, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 3,
    }
}
