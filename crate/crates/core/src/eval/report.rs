use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::csa::CsaRow;
use super::metrics::MetricReport;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub dataset: String,
    #[serde(rename = "ADE")]
    pub ade: f64,
    #[serde(rename = "FDE")]
    pub fde: f64,
    #[serde(rename = "MR")]
    pub mr: f64,
    #[serde(rename = "APDE")]
    pub apde: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
}

impl ReportRow {
    pub fn new(method: impl Into<String>, dataset: impl Into<String>, r: &MetricReport) -> Self {
        Self {
            method: method.into(),
            dataset: dataset.into(),
            ade: r.ade,
            fde: r.fde,
            mr: r.mr,
            apde: r.apde,
            cr: r.cr,
        }
    }

    pub fn metrics(&self) -> MetricReport {
        MetricReport {
            ade: self.ade,
            fde: self.fde,
            mr: self.mr,
            apde: self.apde,
            cr: self.cr,
            n_instances: 0,
        }
    }
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    #[serde(rename = "Dataset")]
    pub dataset: String,
    #[serde(rename = "Index")]
    pub index: String,
    #[serde(rename = "Mamba")]
    pub mamba: bool,
    #[serde(rename = "MaxEntIRL")]
    pub irl: bool,
    #[serde(rename = "GNN")]
    pub gnn: bool,
    #[serde(rename = "ADE")]
    pub ade: f64,
    #[serde(rename = "FDE")]
    pub fde: f64,
    #[serde(rename = "MR")]
    pub mr: f64,
    #[serde(rename = "APDE")]
    pub apde: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("refusing to write an empty report"));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    read_rows(path)
}

pub fn write_csa(path: &Path, rows: &[CsaRow]) -> Result<()> {
    write_rows(path, rows)
}

/// SVG radar chart of per-metric CSA, one axis per metric and one polygon per method.
pub fn radar_svg(rows: &[CsaRow]) -> String {
    let mut metrics: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !metrics.contains(&r.metric.as_str()) {
            metrics.push(&r.metric);
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let max = rows.iter().map(|r| r.csa).fold(0.0f64, f64::max).max(1e-9);
    let (cx, cy, radius) = (250.0, 250.0, 180.0);
    let k = metrics.len().max(1) as f64;
    let point = |axis: usize, frac: f64| {
        let ang = -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * axis as f64 / k;
        (cx + radius * frac * ang.cos(), cy + radius * frac * ang.sin())
    };
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="500" height="540" viewBox="0 0 500 540">"#
    );
    for (i, m) in metrics.iter().enumerate() {
        let (x, y) = point(i, 1.0);
        let (lx, ly) = point(i, 1.12);
        let _ = writeln!(
            svg,
            r#"  <line class="axis" x1="{cx}" y1="{cy}" x2="{x:.2}" y2="{y:.2}" stroke="gray"/>"#
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="14">{m}</text>"#
        );
    }
    for (j, method) in methods.iter().enumerate() {
        let pts: Vec<String> = metrics
            .iter()
            .enumerate()
            .map(|(i, metric)| {
                let v = rows
                    .iter()
                    .find(|r| r.method == *method && r.metric == *metric)
                    .map_or(0.0, |r| r.csa.max(0.0));
                let (x, y) = point(i, v / max);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let color = COLORS[j % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"  <polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"  <text x="10" y="{}" font-size="13" fill="{color}">{method}</text>"#,
            470 + 16 * j
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_radar(path: &Path, rows: &[CsaRow]) -> Result<()> {
    std::fs::write(path, radar_svg(rows)).map_err(|e| Error::io(path, e))
}
