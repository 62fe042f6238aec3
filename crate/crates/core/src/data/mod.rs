//! Recording ingestion, downsampling, splitting, interaction graphs and the
//! synthetic scenario generator.

pub mod graph;
pub mod recording;
pub mod split;
pub mod synth;

use std::path::Path;

pub use graph::{build_graph, edge_feature, NodeSource, TrafficGraph, DEFAULT_RADIUS, EDGE_DIM};
pub use recording::{
    downsample, load_recording, read_rows, rows_to_recording, write_recording, Recording, RecordingRow,
};
pub use split::{stratified_split, Split, SplitSpec};
pub use synth::{synth_scenario, SynthRecording};

use crate::domain::{window_instances, PredictionInstance, ScenarioTag, WindowSpec};
use crate::error::{Error, Result};

/// Factor taking the 25 Hz recordings to 0.2 s steps.
pub const DEFAULT_DOWNSAMPLE: usize = 5;

/// Downsamples a 25 Hz recording and cuts it into prediction instances.
pub fn recording_instances(
    recording: &Recording,
    scenario: ScenarioTag,
    window: WindowSpec,
    factor: usize,
) -> Result<Vec<PredictionInstance>> {
    let tracks = downsample(&recording.tracks, factor)?;
    window_instances(&tracks, &recording.id, scenario, window)
}

/// Loads every `*.csv` under `dir` (sorted by file name) and windows it.
pub fn load_directory(
    dir: &Path,
    scenario: ScenarioTag,
    window: WindowSpec,
    factor: usize,
) -> Result<Vec<PredictionInstance>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no .csv recordings in {}", dir.display())));
    }
    let mut out = Vec::new();
    for f in files {
        let rec = load_recording(&f)?;
        out.extend(recording_instances(&rec, scenario, window, factor)?);
    }
    Ok(out)
}

/// Generates synthetic recordings in memory and windows them.
pub fn synthetic_instances(
    scenario: ScenarioTag,
    n_recordings: usize,
    agents_per_recording: usize,
    seed: u64,
    window: WindowSpec,
) -> Result<Vec<PredictionInstance>> {
    let mut out = Vec::new();
    for rec in synth_scenario(scenario, n_recordings, agents_per_recording, seed) {
        let recording = rows_to_recording(&rec.rows)?;
        out.extend(recording_instances(&recording, scenario, window, DEFAULT_DOWNSAMPLE)?);
    }
    Ok(out)
}
