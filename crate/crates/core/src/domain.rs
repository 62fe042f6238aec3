//! Kinematic states, trajectories, displacement actions and prediction windows.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling interval after downsampling the 25 Hz recordings by 5.
pub const DEFAULT_DT: f64 = 0.2;

/// Length of the per-state feature vector `(x, y, vx, vy, ax, ay, yaw)`.
pub const STATE_DIM: usize = 7;

/// Fixed per-feature scales used to bring state features to order one before
/// they enter any network.
pub const STATE_SCALE: [f64; STATE_DIM] = [10.0, 10.0, 10.0, 10.0, 5.0, 5.0, std::f64::consts::PI];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub yaw: f64,
    pub timestep_index: u64,
}

impl AgentState {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.vx, self.vy, self.ax, self.ay, self.yaw]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Feature vector in a frame whose origin sits at `origin`.
    pub fn features(&self, origin: [f64; 2]) -> [f64; STATE_DIM] {
        [
            self.x - origin[0],
            self.y - origin[1],
            self.vx,
            self.vy,
            self.ax,
            self.ay,
            self.yaw,
        ]
    }

    pub fn from_features(f: &[f64], timestep_index: u64) -> Self {
        Self {
            x: f[0],
            y: f[1],
            vx: f[2],
            vy: f[3],
            ax: f[4],
            ay: f[5],
            yaw: f[6],
            timestep_index,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

/// Divides each feature by its [`STATE_SCALE`].
pub fn normalize_state(f: &[f64]) -> [f64; STATE_DIM] {
    let mut out = [0.0; STATE_DIM];
    for k in 0..STATE_DIM {
        out[k] = f[k] / STATE_SCALE[k];
    }
    out
}

pub fn denormalize_state(f: &[f64]) -> [f64; STATE_DIM] {
    let mut out = [0.0; STATE_DIM];
    for k in 0..STATE_DIM {
        out[k] = f[k] * STATE_SCALE[k];
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent_id: u64,
    pub states: Vec<AgentState>,
    pub dt: f64,
}

impl Trajectory {
    /// Validates length, finiteness and contiguity of timestep indices.
    pub fn new(agent_id: u64, states: Vec<AgentState>, dt: f64) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::invalid(format!(
                "trajectory {agent_id} has {} states, need at least 2",
                states.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("trajectory {agent_id}: dt must be positive")));
        }
        for (k, s) in states.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::invalid(format!(
                    "trajectory {agent_id}: non-finite state at index {k}"
                )));
            }
        }
        for w in states.windows(2) {
            if w[1].timestep_index != w[0].timestep_index + 1 {
                return Err(Error::invalid(format!(
                    "trajectory {agent_id}: timestep {} follows {}",
                    w[1].timestep_index, w[0].timestep_index
                )));
            }
        }
        Ok(Self {
            agent_id,
            states,
            dt,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first_step(&self) -> u64 {
        self.states[0].timestep_index
    }

    pub fn last_step(&self) -> u64 {
        self.states[self.states.len() - 1].timestep_index
    }

    pub fn state_at(&self, timestep: u64) -> Option<&AgentState> {
        if timestep < self.first_step() || timestep > self.last_step() {
            return None;
        }
        self.states.get((timestep - self.first_step()) as usize)
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.states.iter().map(AgentState::position).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
}

impl Action {
    pub const ZERO: Action = Action { dx: 0.0, dy: 0.0 };

    pub fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }

    pub fn between(from: [f64; 2], to: [f64; 2]) -> Self {
        Self {
            dx: to[0] - from[0],
            dy: to[1] - from[1],
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.dx, self.dy]
    }
}

/// Per-step displacements `a_t = x_{t+1} − x_t`.
pub fn derive_actions(traj: &Trajectory) -> Result<Vec<Action>> {
    positions_to_actions(&traj.positions())
}

pub fn positions_to_actions(positions: &[[f64; 2]]) -> Result<Vec<Action>> {
    if positions.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 positions to derive actions, got {}",
            positions.len()
        )));
    }
    Ok(positions
        .windows(2)
        .map(|w| Action::between(w[0], w[1]))
        .collect())
}

/// Inverse of [`derive_actions`]: cumulative summation from a start position.
pub fn reconstruct_positions(start: [f64; 2], actions: &[Action]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(actions.len() + 1);
    let mut p = start;
    out.push(p);
    for a in actions {
        p = [p[0] + a.dx, p[1] + a.dy];
        out.push(p);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioTag {
    Intersection,
    Roundabout,
    Highway,
}

impl ScenarioTag {
    pub const ALL: [ScenarioTag; 3] = [
        ScenarioTag::Intersection,
        ScenarioTag::Roundabout,
        ScenarioTag::Highway,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioTag::Intersection => "intersection",
            ScenarioTag::Roundabout => "roundabout",
            ScenarioTag::Highway => "highway",
        }
    }
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intersection" => Ok(ScenarioTag::Intersection),
            "roundabout" => Ok(ScenarioTag::Roundabout),
            "highway" => Ok(ScenarioTag::Highway),
            other => Err(Error::invalid(format!("unknown scenario tag '{other}'"))),
        }
    }
}

/// Observation and prediction lengths in steps at [`DEFAULT_DT`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub history: usize,
    pub horizon: usize,
    pub stride: usize,
}

/// Seconds-based windows converted to steps: 3 s / 5 s urban, 2 s / 5 s highway.
pub fn scenario_window_defaults(tag: ScenarioTag) -> (usize, usize) {
    let (obs_s, pred_s) = match tag {
        ScenarioTag::Intersection | ScenarioTag::Roundabout => (3.0, 5.0),
        ScenarioTag::Highway => (2.0, 5.0),
    };
    (seconds_to_steps(obs_s), seconds_to_steps(pred_s))
}

fn seconds_to_steps(seconds: f64) -> usize {
    (seconds / DEFAULT_DT).round() as usize
}

/// A neighbour aligned to the instance window; absent steps are zero-padded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborTrack {
    pub agent_id: u64,
    pub history: Vec<AgentState>,
    pub history_mask: Vec<bool>,
    pub future: Vec<AgentState>,
    pub future_mask: Vec<bool>,
}

impl NeighborTrack {
    /// Index of the last valid observation step.
    pub fn last_observed(&self) -> Option<usize> {
        self.history_mask.iter().rposition(|&m| m)
    }
}

/// One training sample, expressed in a frame translated so the target's last
/// observed position is the origin. `origin` undoes the translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionInstance {
    pub recording_id: String,
    pub scenario: ScenarioTag,
    pub target_history: Trajectory,
    pub target_future: Trajectory,
    pub neighbors: Vec<NeighborTrack>,
    pub origin: [f64; 2],
}

impl PredictionInstance {
    pub fn history_len(&self) -> usize {
        self.target_history.len()
    }

    pub fn horizon(&self) -> usize {
        self.target_future.len()
    }

    pub fn last_observed(&self) -> &AgentState {
        self.target_history.states.last().expect("non-empty history")
    }

    pub fn future_positions(&self) -> Vec<[f64; 2]> {
        self.target_future.positions()
    }

    pub fn to_global(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] + self.origin[0], p[1] + self.origin[1]]
    }

    /// Ground-truth neighbour positions per future step (valid ones only).
    pub fn neighbor_future_positions(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.horizon())
            .map(|t| {
                self.neighbors
                    .iter()
                    .filter(|n| n.future_mask[t])
                    .map(|n| n.future[t].position())
                    .collect()
            })
            .collect()
    }
}

fn zero_state(timestep_index: u64) -> AgentState {
    AgentState {
        x: 0.0,
        y: 0.0,
        vx: 0.0,
        vy: 0.0,
        ax: 0.0,
        ay: 0.0,
        yaw: 0.0,
        timestep_index,
    }
}

/// Cuts every trajectory of a recording into (history, future, neighbours)
/// samples with a sliding window. Targets without full coverage are skipped.
pub fn window_instances(
    recording: &[Trajectory],
    recording_id: &str,
    scenario: ScenarioTag,
    spec: WindowSpec,
) -> Result<Vec<PredictionInstance>> {
    if spec.history < 2 {
        return Err(Error::invalid("history length must be at least 2"));
    }
    if spec.horizon < 1 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if spec.stride < 1 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let span = spec.history + spec.horizon;
    let by_id: HashMap<u64, usize> = recording
        .iter()
        .enumerate()
        .map(|(i, t)| (t.agent_id, i))
        .collect();
    let mut out = Vec::new();
    for target in recording {
        if target.len() < span {
            continue;
        }
        let mut start = 0;
        while start + span <= target.len() {
            let hist = &target.states[start..start + spec.history];
            let fut = &target.states[start + spec.history..start + span];
            let t0 = hist[0].timestep_index;
            let t_last = hist[spec.history - 1].timestep_index;
            let origin = hist[spec.history - 1].position();
            let to_local = |s: &AgentState| s.translated(-origin[0], -origin[1]);

            let mut neighbors = Vec::new();
            let mut ids: Vec<u64> = by_id.keys().copied().collect();
            ids.sort_unstable();
            for id in ids {
                if id == target.agent_id {
                    continue;
                }
                let other = &recording[by_id[&id]];
                if other.last_step() < t0 || other.first_step() > t_last {
                    continue;
                }
                let mut history = Vec::with_capacity(spec.history);
                let mut history_mask = Vec::with_capacity(spec.history);
                for k in 0..spec.history {
                    let ts = t0 + k as u64;
                    match other.state_at(ts) {
                        Some(s) => {
                            history.push(to_local(s));
                            history_mask.push(true);
                        }
                        None => {
                            history.push(zero_state(ts));
                            history_mask.push(false);
                        }
                    }
                }
                let mut future = Vec::with_capacity(spec.horizon);
                let mut future_mask = Vec::with_capacity(spec.horizon);
                for k in 0..spec.horizon {
                    let ts = t_last + 1 + k as u64;
                    match other.state_at(ts) {
                        Some(s) => {
                            future.push(to_local(s));
                            future_mask.push(true);
                        }
                        None => {
                            future.push(zero_state(ts));
                            future_mask.push(false);
                        }
                    }
                }
                neighbors.push(NeighborTrack {
                    agent_id: id,
                    history,
                    history_mask,
                    future,
                    future_mask,
                });
            }

            out.push(PredictionInstance {
                recording_id: recording_id.to_string(),
                scenario,
                target_history: Trajectory {
                    agent_id: target.agent_id,
                    states: hist.iter().map(to_local).collect(),
                    dt: target.dt,
                },
                target_future: Trajectory {
                    agent_id: target.agent_id,
                    states: fut.iter().map(to_local).collect(),
                    dt: target.dt,
                },
                neighbors,
                origin,
            });
            start += spec.stride;
        }
    }
    Ok(out)
}
