//! Metrics, cross-scenario adaptability and report files.

pub mod csa;
pub mod metrics;
pub mod report;

pub use csa::{csa_score, csa_table, csa_terms, CsaInput, CsaRow, CsaWeights, METRIC_NAMES};
pub use metrics::{compute_metrics, instance_metrics, EvalCase, InstanceMetrics, MetricConfig, MetricReport};
pub use report::{read_report, write_csa, write_radar, write_report, AblationRow, ReportRow};
