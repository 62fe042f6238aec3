//! Run configuration: one TOML file, every field defaulted, unknown keys
//! rejected, with `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SplitSpec, DEFAULT_DOWNSAMPLE};
use crate::domain::{scenario_window_defaults, ScenarioTag, WindowSpec};
use crate::error::{Error, Result};
use crate::eval::{CsaWeights, MetricConfig};
use crate::policy::Td3Config;
use crate::trainer::{ModelConfig, TrainConfig};

/// One dataset: a directory of recording CSVs, or synthetic recordings when
/// `path` is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub scenario: ScenarioTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl DataSource {
    pub fn synthetic(scenario: ScenarioTag) -> Self {
        Self { scenario, path: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Known scenarios the predictor and policy are trained on.
    pub sources: Vec<DataSource>,
    /// Unknown scenarios used only for evaluation.
    pub targets: Vec<DataSource>,
    /// Observation and prediction steps; 0 picks the scenario default.
    pub history: usize,
    pub horizon: usize,
    pub stride: usize,
    pub downsample: usize,
    pub split: SplitSpec,
    pub synth_recordings: usize,
    pub synth_agents: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            sources: vec![
                DataSource::synthetic(ScenarioTag::Intersection),
                DataSource::synthetic(ScenarioTag::Roundabout),
            ],
            targets: vec![DataSource::synthetic(ScenarioTag::Highway)],
            history: 0,
            horizon: 0,
            stride: 10,
            downsample: DEFAULT_DOWNSAMPLE,
            split: SplitSpec::default(),
            synth_recordings: 3,
            synth_agents: 6,
        }
    }
}

impl DataConfig {
    pub fn window(&self, scenario: ScenarioTag) -> WindowSpec {
        let (h, f) = scenario_window_defaults(scenario);
        WindowSpec {
            history: if self.history == 0 { h } else { self.history },
            horizon: if self.horizon == 0 { f } else { self.horizon },
            stride: self.stride,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the synthetic recordings.
    pub seed: u64,
    /// Parent of the timestamped run directories.
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub policy: Td3Config,
    pub metrics: MetricConfig,
    pub csa: CsaWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig {
                batch_size: 8,
                lr_predictor: 1e-2,
                epochs: 20,
                ..TrainConfig::default()
            },
            policy: Td3Config::default(),
            metrics: MetricConfig::default(),
            csa: CsaWeights::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` (or starts from the defaults) and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::load_from_str(&text, overrides)
    }

    /// Parses `text`, applies the overrides and validates the result.
    pub fn load_from_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Sets every seed in the tree to `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.policy.seed = seed;
        self.data.split.seed = seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(as_config)?;
        self.policy.validate().map_err(as_config)?;
        if self.data.sources.is_empty() {
            return Err(Error::Config("data.sources is empty".into()));
        }
        if self.data.stride == 0 || self.data.downsample == 0 {
            return Err(Error::Config("data.stride and data.downsample must be positive".into()));
        }
        for s in self.data.sources.iter().chain(&self.data.targets) {
            if let Some(p) = &s.path {
                if !p.is_dir() {
                    return Err(Error::Config(format!("data path {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(m) | Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

/// Applies `a.b.c=value`; the value is parsed as TOML and falls back to a
/// bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let (last, parents) = parts.split_last().expect("non-empty split");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key '{key}' passes through a non-table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
