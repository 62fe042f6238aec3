//! CSV recording files in a drone-dataset-compatible column layout.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentState, Trajectory};
use crate::error::{Error, Result};

/// Native frame rate of the recordings.
pub const RECORDING_HZ: f64 = 25.0;

pub const COLUMNS: [&str; 13] = [
    "recording_id",
    "frame",
    "track_id",
    "x",
    "y",
    "vx",
    "vy",
    "ax",
    "ay",
    "heading_deg",
    "width",
    "length",
    "agent_class",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingRow {
    pub recording_id: String,
    pub frame: u64,
    pub track_id: u64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub heading_deg: f64,
    pub width: f64,
    pub length: f64,
    pub agent_class: String,
}

/// Trajectories of one recording, at the native 25 Hz rate unless downsampled.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub id: String,
    pub tracks: Vec<Trajectory>,
}

pub fn write_rows<W: Write>(writer: W, rows: &[RecordingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_recording(path: &Path, rows: &[RecordingRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(BufWriter::new(file), rows)
}

/// Parses and validates rows. Row numbers in errors are 1-based data rows
/// (the header is not counted).
pub fn read_rows<R: Read>(reader: R) -> Result<Vec<RecordingRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in COLUMNS {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(Error::Schema {
                row: 0,
                message: format!("missing column '{col}'"),
            });
        }
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.deserialize::<RecordingRow>().enumerate() {
        let row_no = k + 1;
        let row = rec.map_err(|e| Error::Schema {
            row: row_no,
            message: e.to_string(),
        })?;
        let kin = [
            ("x", row.x),
            ("y", row.y),
            ("vx", row.vx),
            ("vy", row.vy),
            ("ax", row.ax),
            ("ay", row.ay),
            ("heading_deg", row.heading_deg),
        ];
        if let Some((name, _)) = kin.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Schema {
                row: row_no,
                message: format!("non-finite value in column '{name}'"),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Groups rows into one trajectory per track, ordered by frame, heading in radians.
pub fn rows_to_recording(rows: &[RecordingRow]) -> Result<Recording> {
    let mut seen = HashSet::new();
    let mut tracks: BTreeMap<u64, Vec<(usize, &RecordingRow)>> = BTreeMap::new();
    for (k, row) in rows.iter().enumerate() {
        if !seen.insert((row.frame, row.track_id)) {
            return Err(Error::Schema {
                row: k + 1,
                message: format!("duplicate (frame {}, track {})", row.frame, row.track_id),
            });
        }
        tracks.entry(row.track_id).or_default().push((k + 1, row));
    }
    let id = rows
        .first()
        .map(|r| r.recording_id.clone())
        .unwrap_or_default();
    let dt = 1.0 / RECORDING_HZ;
    let mut out = Vec::with_capacity(tracks.len());
    for (track_id, mut entries) in tracks {
        entries.sort_by_key(|(_, r)| r.frame);
        for w in entries.windows(2) {
            if w[1].1.frame != w[0].1.frame + 1 {
                return Err(Error::Schema {
                    row: w[1].0,
                    message: format!(
                        "track {track_id}: frame {} does not follow frame {}",
                        w[1].1.frame, w[0].1.frame
                    ),
                });
            }
        }
        let states: Vec<AgentState> = entries
            .iter()
            .map(|(_, r)| AgentState {
                x: r.x,
                y: r.y,
                vx: r.vx,
                vy: r.vy,
                ax: r.ax,
                ay: r.ay,
                yaw: r.heading_deg.to_radians(),
                timestep_index: r.frame,
            })
            .collect();
        if states.len() < 2 {
            // single-frame tracks carry no motion
            continue;
        }
        out.push(Trajectory::new(track_id, states, dt)?);
    }
    Ok(Recording { id, tracks: out })
}

pub fn load_recording(path: &Path) -> Result<Recording> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = read_rows(BufReader::new(file))?;
    let mut rec = rows_to_recording(&rows)?;
    if rec.id.is_empty() {
        rec.id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(rec)
}

/// Keeps states whose frame is a multiple of `factor`, so every track of a
/// recording stays on a shared time grid; timestep indices become
/// `frame / factor` and `dt` is multiplied by `factor`. Tracks left with fewer
/// than two states are dropped.
pub fn downsample(trajs: &[Trajectory], factor: usize) -> Result<Vec<Trajectory>> {
    if factor < 1 {
        return Err(Error::invalid("downsample factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(trajs.to_vec());
    }
    let f = factor as u64;
    let mut out = Vec::with_capacity(trajs.len());
    for t in trajs {
        let states: Vec<AgentState> = t
            .states
            .iter()
            .filter(|s| s.timestep_index % f == 0)
            .map(|s| AgentState {
                timestep_index: s.timestep_index / f,
                ..*s
            })
            .collect();
        if states.len() >= 2 {
            out.push(Trajectory::new(t.agent_id, states, t.dt * factor as f64)?);
        }
    }
    Ok(out)
}
