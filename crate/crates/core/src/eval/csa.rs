//! Cross-scenario adaptability score.
//!
//! ```text
//! CSA = α·M_known + M_unknown − β·D
//! M_s = mean_i (1 − (M_i^s − min_i^s) / (max_i^s − min_i^s))
//! D   = mean_i (M_i^unknown − M_i^known) / |M_i^known|
//! ```
//!
//! with minima and maxima taken across methods, per metric and scenario.

use serde::{Deserialize, Serialize};

use super::metrics::MetricReport;
use crate::error::{Error, Result};

pub const METRIC_NAMES: [&str; 5] = ["ADE", "FDE", "MR", "APDE", "CR"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsaWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for CsaWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

/// Per-method, per-metric values on the known and unknown scenario.
/// `known[m][k]` is method `m`'s value of metric `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsaInput {
    pub methods: Vec<String>,
    pub metrics: Vec<String>,
    pub known: Vec<Vec<f64>>,
    pub unknown: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsaRow {
    pub method: String,
    pub metric: String,
    #[serde(rename = "M_known")]
    pub m_known: f64,
    #[serde(rename = "M_unknown")]
    pub m_unknown: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "CSA")]
    pub csa: f64,
}

pub fn report_values(r: &MetricReport) -> Vec<f64> {
    vec![r.ade, r.fde, r.mr, r.apde, r.cr]
}

impl CsaInput {
    /// Pairs up known- and unknown-scenario reports by method name.
    pub fn from_reports(known: &[(String, MetricReport)], unknown: &[(String, MetricReport)]) -> Result<Self> {
        fn names(rs: &[(String, MetricReport)]) -> Vec<&String> {
            let mut v: Vec<&String> = rs.iter().map(|(m, _)| m).collect();
            v.sort();
            v
        }
        if names(known) != names(unknown) {
            return Err(Error::invalid("known and unknown reports cover different methods"));
        }
        let methods: Vec<String> = known.iter().map(|(m, _)| m.clone()).collect();
        let unknown_values = methods
            .iter()
            .map(|m| {
                let (_, r) = unknown.iter().find(|(n, _)| n == m).expect("checked above");
                report_values(r)
            })
            .collect();
        Ok(Self {
            methods,
            metrics: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
            known: known.iter().map(|(_, r)| report_values(r)).collect(),
            unknown: unknown_values,
        })
    }

    fn validate(&self) -> Result<()> {
        let (m, k) = (self.methods.len(), self.metrics.len());
        if m == 0 || k == 0 {
            return Err(Error::invalid("CSA needs at least one method and one metric"));
        }
        let shaped = |v: &Vec<Vec<f64>>| v.len() == m && v.iter().all(|row| row.len() == k);
        if !shaped(&self.known) || !shaped(&self.unknown) {
            return Err(Error::invalid("CSA value tables do not match methods × metrics"));
        }
        Ok(())
    }

    fn method_index(&self, method: &str) -> Result<usize> {
        self.methods
            .iter()
            .position(|m| m == method)
            .ok_or_else(|| Error::invalid(format!("unknown method {method}")))
    }
}

fn normalized_goodness(values: &[Vec<f64>], method: usize, metric: usize, group: &str) -> Result<f64> {
    let column = values.iter().map(|row| row[metric]);
    let lo = column.clone().fold(f64::INFINITY, f64::min);
    let hi = column.fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(Error::DegenerateNormalization {
            group: group.to_string(),
            value: hi,
        });
    }
    Ok(1.0 - (values[method][metric] - lo) / (hi - lo))
}

/// CSA terms for one method averaged over the given metric indices.
pub fn csa_terms(input: &CsaInput, method: &str, metrics: &[usize], weights: CsaWeights) -> Result<CsaRow> {
    input.validate()?;
    let i = input.method_index(method)?;
    if metrics.is_empty() {
        return Err(Error::invalid("no metrics selected"));
    }
    let n = metrics.len() as f64;
    let (mut mk, mut mu, mut d) = (0.0, 0.0, 0.0);
    for &k in metrics {
        let name = &input.metrics[k];
        mk += normalized_goodness(&input.known, i, k, &format!("{name} (known)"))?;
        mu += normalized_goodness(&input.unknown, i, k, &format!("{name} (unknown)"))?;
        let known = input.known[i][k];
        if known == 0.0 {
            return Err(Error::invalid(format!("{name} is zero on the known scenario; degradation undefined")));
        }
        d += (input.unknown[i][k] - known) / known.abs();
    }
    let (mk, mu, d) = (mk / n, mu / n, d / n);
    let metric = if metrics.len() == 1 {
        input.metrics[metrics[0]].clone()
    } else {
        "all".to_string()
    };
    Ok(CsaRow {
        method: method.to_string(),
        metric,
        m_known: mk,
        m_unknown: mu,
        d,
        csa: weights.alpha * mk + mu - weights.beta * d,
    })
}

/// CSA of `method` over every metric.
pub fn csa_score(input: &CsaInput, method: &str, weights: CsaWeights) -> Result<f64> {
    let all: Vec<usize> = (0..input.metrics.len()).collect();
    Ok(csa_terms(input, method, &all, weights)?.csa)
}

/// Per-metric CSA (`n = 1`) for every method, method-major.
pub fn csa_table(input: &CsaInput, weights: CsaWeights) -> Result<Vec<CsaRow>> {
    let mut rows = Vec::new();
    for m in &input.methods {
        for k in 0..input.metrics.len() {
            rows.push(csa_terms(input, m, &[k], weights)?);
        }
    }
    Ok(rows)
}
