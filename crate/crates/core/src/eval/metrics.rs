use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Final-step error above which a prediction counts as a miss (m).
    pub miss_threshold: f64,
    /// Center-to-center distance counted as a collision (m).
    pub crash_distance: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            miss_threshold: 2.0,
            crash_distance: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ade: f64,
    pub fde: f64,
    pub mr: f64,
    pub apde: f64,
    pub cr: f64,
    pub n_instances: usize,
}

/// One predicted trajectory with its ground truth and the ground-truth
/// positions of other agents over the same steps (`None` where unobserved).
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCase {
    pub predicted: Vec<[f64; 2]>,
    pub ground_truth: Vec<[f64; 2]>,
    pub neighbors: Vec<Vec<Option<[f64; 2]>>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceMetrics {
    pub ade: f64,
    pub fde: f64,
    pub apde: f64,
    pub miss: bool,
    pub crash: bool,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn instance_metrics(case: &EvalCase, config: &MetricConfig) -> Result<InstanceMetrics> {
    let n = case.predicted.len();
    if n == 0 || n != case.ground_truth.len() {
        return Err(Error::invalid(format!(
            "prediction has {n} steps, ground truth {}",
            case.ground_truth.len()
        )));
    }
    if let Some(bad) = case.neighbors.iter().find(|nb| nb.len() != n) {
        return Err(Error::invalid(format!(
            "neighbour track has {} steps, expected {n}",
            bad.len()
        )));
    }
    let errors: Vec<f64> = case
        .predicted
        .iter()
        .zip(&case.ground_truth)
        .map(|(&p, &g)| dist(p, g))
        .collect();
    let fde = errors[n - 1];
    let apde = case
        .predicted
        .iter()
        .map(|&p| {
            case.ground_truth
                .iter()
                .map(|&g| dist(p, g))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / n as f64;
    let crash = case.neighbors.iter().any(|track| {
        track
            .iter()
            .zip(&case.predicted)
            .any(|(q, &p)| q.is_some_and(|q| dist(p, q) <= config.crash_distance))
    });
    Ok(InstanceMetrics {
        ade: errors.iter().sum::<f64>() / n as f64,
        fde,
        apde,
        miss: fde > config.miss_threshold,
        crash,
    })
}

/// Averages per-instance metrics; instances are evaluated in parallel and
/// reduced in input order.
pub fn compute_metrics(cases: &[EvalCase], config: &MetricConfig) -> Result<MetricReport> {
    if cases.is_empty() {
        return Err(Error::invalid("no instances to evaluate"));
    }
    let per: Vec<InstanceMetrics> = cases
        .par_iter()
        .map(|c| instance_metrics(c, config))
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = |f: &dyn Fn(&InstanceMetrics) -> f64| per.iter().map(f).sum::<f64>() / n;
    Ok(MetricReport {
        ade: mean(&|m| m.ade),
        fde: mean(&|m| m.fde),
        mr: mean(&|m| f64::from(u8::from(m.miss))),
        apde: mean(&|m| m.apde),
        cr: mean(&|m| f64::from(u8::from(m.crash))),
        n_instances: per.len(),
    })
}
