//! Synthetic 25 Hz recordings for the three scenario kinds.
//!
//! Every agent moves along a piecewise path (straight segments and circular
//! arcs, or lane-following with constant-lateral-velocity lane changes on the
//! highway). On roundabouts and intersections agents brake uniformly on the
//! approach arm, hold their speed through the turn and accelerate again on the
//! exit arm; highway agents cruise at constant speed. Agents sharing a route
//! form a platoon that follows the leader at a fixed time headway. Velocities
//! and accelerations are forward finite differences of the generated positions.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::recording::{RecordingRow, RECORDING_HZ};
use crate::domain::ScenarioTag;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRecording {
    pub id: String,
    pub scenario: ScenarioTag,
    pub rows: Vec<RecordingRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Primitive {
    Straight(f64),
    /// Radius and signed sweep (positive = counter-clockwise).
    Turn(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Piece {
    start: [f64; 2],
    heading: f64,
    length: f64,
    kind: Primitive,
}

/// Arc-length parametrised path built from straight and arc primitives.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pieces: Vec<Piece>,
}

impl Path {
    fn new(start: [f64; 2], heading: f64, prims: &[Primitive]) -> Self {
        let mut pieces = Vec::new();
        let (mut p, mut h) = (start, heading);
        for &kind in prims {
            let length = match kind {
                Primitive::Straight(l) => l,
                Primitive::Turn(r, sweep) => r * sweep.abs(),
            };
            let piece = Piece {
                start: p,
                heading: h,
                length,
                kind,
            };
            p = eval_piece(&piece, length);
            if let Primitive::Turn(_, sweep) = kind {
                h += sweep;
            }
            pieces.push(piece);
        }
        Self { pieces }
    }

    pub fn length(&self) -> f64 {
        self.pieces.iter().map(|p| p.length).sum()
    }

    /// Position at arc length `s`; beyond the end the last heading is extended.
    pub fn position(&self, s: f64) -> [f64; 2] {
        let mut rem = s.max(0.0);
        for (k, piece) in self.pieces.iter().enumerate() {
            if rem <= piece.length || k + 1 == self.pieces.len() {
                if rem > piece.length {
                    let end = eval_piece(piece, piece.length);
                    let h = end_heading(piece);
                    let extra = rem - piece.length;
                    return [end[0] + extra * h.cos(), end[1] + extra * h.sin()];
                }
                return eval_piece(piece, rem);
            }
            rem -= piece.length;
        }
        unreachable!("path has at least one piece")
    }

    /// Arc-length interval covered by circular pieces.
    pub fn arc_intervals(&self) -> Vec<(f64, f64)> {
        let mut s0 = 0.0;
        let mut out = Vec::new();
        for p in &self.pieces {
            if matches!(p.kind, Primitive::Turn(..)) {
                out.push((s0, s0 + p.length));
            }
            s0 += p.length;
        }
        out
    }
}

fn end_heading(piece: &Piece) -> f64 {
    match piece.kind {
        Primitive::Straight(_) => piece.heading,
        Primitive::Turn(_, sweep) => piece.heading + sweep,
    }
}

fn eval_piece(piece: &Piece, s: f64) -> [f64; 2] {
    let (p, h) = (piece.start, piece.heading);
    match piece.kind {
        Primitive::Straight(_) => [p[0] + s * h.cos(), p[1] + s * h.sin()],
        Primitive::Turn(r, sweep) => {
            let side = sweep.signum();
            let center = [p[0] - side * r * h.sin(), p[1] + side * r * h.cos()];
            let a0 = (p[1] - center[1]).atan2(p[0] - center[0]);
            let a = a0 + side * s / r;
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        }
    }
}

/// Speed along the path: one segment per path piece, each travelled with
/// constant acceleration from `v_start` to `v_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedProfile {
    segments: Vec<(f64, f64, f64)>,
}

impl SpeedProfile {
    pub fn constant(length: f64, speed: f64) -> Self {
        Self {
            segments: vec![(length, speed, speed)],
        }
    }

    /// Brake from `approach · v` to `v` over the first piece, hold `v` over the
    /// middle pieces and accelerate back over the last.
    fn brake_and_exit(path: &Path, v: f64, approach: f64) -> Self {
        let n = path.pieces.len();
        let segments = path
            .pieces
            .iter()
            .enumerate()
            .map(|(k, p)| match k {
                0 => (p.length, approach * v, v),
                k if k + 1 == n && n > 1 => (p.length, v, approach * v),
                _ => (p.length, v, v),
            })
            .collect();
        Self { segments }
    }

    fn duration(&self) -> f64 {
        self.segments.iter().map(|&(l, a, b)| 2.0 * l / (a + b)).sum()
    }

    /// Arc length travelled after `t` seconds; past the end the final speed is held.
    pub fn arc_length(&self, t: f64) -> f64 {
        let (mut rem, mut s0) = (t.max(0.0), 0.0);
        for &(len, v0, v1) in &self.segments {
            let dur = 2.0 * len / (v0 + v1);
            if rem <= dur {
                let acc = (v1 - v0) / dur;
                return s0 + v0 * rem + 0.5 * acc * rem * rem;
            }
            rem -= dur;
            s0 += len;
        }
        let last = self.segments.last().map_or(0.0, |seg| seg.2);
        s0 + last * rem
    }
}

/// One agent: a path, a speed profile and the frame at which it appears.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentPlan {
    pub path: Path,
    pub profile: SpeedProfile,
    pub start_frame: u64,
    pub n_frames: usize,
}

impl AgentPlan {
    fn new(path: Path, profile: SpeedProfile, start_frame: u64) -> Self {
        let dt = 1.0 / RECORDING_HZ;
        let n_frames = (profile.duration() / dt).floor() as usize + 1;
        Self {
            path,
            profile,
            start_frame,
            n_frames,
        }
    }

    /// Positions for frames `0..n_frames + 2` (two extra for differencing).
    pub fn positions(&self) -> Vec<[f64; 2]> {
        let dt = 1.0 / RECORDING_HZ;
        (0..self.n_frames + 2)
            .map(|k| self.path.position(self.profile.arc_length(k as f64 * dt)))
            .collect()
    }
}

fn rows_for_agent(recording_id: &str, track_id: u64, plan: &AgentPlan) -> Vec<RecordingRow> {
    let dt = 1.0 / RECORDING_HZ;
    let pos = plan.positions();
    let vel: Vec<[f64; 2]> = pos
        .windows(2)
        .map(|w| [(w[1][0] - w[0][0]) / dt, (w[1][1] - w[0][1]) / dt])
        .collect();
    let acc: Vec<[f64; 2]> = vel
        .windows(2)
        .map(|w| [(w[1][0] - w[0][0]) / dt, (w[1][1] - w[0][1]) / dt])
        .collect();
    (0..plan.n_frames)
        .map(|k| RecordingRow {
            recording_id: recording_id.to_string(),
            frame: plan.start_frame + k as u64,
            track_id,
            x: pos[k][0],
            y: pos[k][1],
            vx: vel[k][0],
            vy: vel[k][1],
            ax: acc[k][0],
            ay: acc[k][1],
            heading_deg: vel[k][1].atan2(vel[k][0]).to_degrees(),
            width: 1.8,
            length: 4.5,
            agent_class: "car".to_string(),
        })
        .collect()
}

fn roundabout_route(rng: &mut ChaCha8Rng) -> Path {
    let radius = rng.random_range(14.0..20.0);
    let entry_angle = rng.random_range(0..4) as f64 * FRAC_PI_2 + rng.random_range(-0.2..0.2);
    let sweep = rng.random_range(1..=3) as f64 * FRAC_PI_2;
    let arm = rng.random_range(35.0..45.0);
    let entry = [radius * entry_angle.cos(), radius * entry_angle.sin()];
    let heading = entry_angle + FRAC_PI_2;
    let start = [entry[0] - arm * heading.cos(), entry[1] - arm * heading.sin()];
    Path::new(
        start,
        heading,
        &[
            Primitive::Straight(arm),
            Primitive::Turn(radius, sweep),
            Primitive::Straight(arm),
        ],
    )
}

fn intersection_route(rng: &mut ChaCha8Rng) -> Path {
    let approach_dir = rng.random_range(0..4) as f64 * FRAC_PI_2;
    let heading = approach_dir + PI;
    let arm = rng.random_range(40.0..50.0);
    let turn = match rng.random_range(0..3) {
        0 => Primitive::Turn(rng.random_range(10.0..14.0), FRAC_PI_2),
        1 => Primitive::Turn(rng.random_range(6.0..9.0), -FRAC_PI_2),
        _ => Primitive::Straight(20.0),
    };
    let lane_offset = 1.75;
    let start = [
        (arm + 10.0) * approach_dir.cos() + lane_offset * heading.sin(),
        (arm + 10.0) * approach_dir.sin() - lane_offset * heading.cos(),
    ];
    Path::new(start, heading, &[Primitive::Straight(arm), turn, Primitive::Straight(arm)])
}

pub const LANE_WIDTH: f64 = 3.5;

/// Arm speed relative to turning speed on roundabouts and intersections.
pub const APPROACH_FACTOR: f64 = 1.4;

/// Highway route: lane following along +x with an optional lane change that
/// moves at constant lateral velocity. Encoded as straight pieces.
fn highway_route(rng: &mut ChaCha8Rng, speed: f64) -> Path {
    let lane = rng.random_range(0..3) as f64;
    let start = [rng.random_range(0.0..40.0), lane * LANE_WIDTH];
    let total = speed * rng.random_range(12.0..16.0);
    if rng.random_bool(0.5) {
        let before = speed * rng.random_range(2.0..5.0);
        let duration = rng.random_range(3.0..5.0);
        let dx = speed * duration;
        let dir = if lane == 0.0 {
            1.0
        } else if lane == 2.0 {
            -1.0
        } else if rng.random_bool(0.5) {
            1.0
        } else {
            -1.0
        };
        let dy = dir * LANE_WIDTH;
        let slant = dy.atan2(dx);
        let slant_len = dx.hypot(dy);
        let after = (total - before - dx).max(speed);
        // Straight pieces with turning handled by explicit heading changes.
        let mut pieces = Vec::new();
        let p0 = start;
        pieces.push(Piece {
            start: p0,
            heading: 0.0,
            length: before,
            kind: Primitive::Straight(before),
        });
        let p1 = [p0[0] + before, p0[1]];
        pieces.push(Piece {
            start: p1,
            heading: slant,
            length: slant_len,
            kind: Primitive::Straight(slant_len),
        });
        let p2 = [p1[0] + dx, p1[1] + dy];
        pieces.push(Piece {
            start: p2,
            heading: 0.0,
            length: after,
            kind: Primitive::Straight(after),
        });
        Path { pieces }
    } else {
        Path::new(start, 0.0, &[Primitive::Straight(total)])
    }
}

/// Generates `n_recordings` recordings of `agents_per_recording` agents each.
/// Deterministic per `(kind, seed)`.
pub fn synth_scenario(
    kind: ScenarioTag,
    n_recordings: usize,
    agents_per_recording: usize,
    seed: u64,
) -> Vec<SynthRecording> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (0..n_recordings)
        .map(|r| {
            let id = format!("{kind}_{seed}_{r:03}");
            let plans = recording_plans(kind, agents_per_recording, &mut rng);
            let rows = plans
                .iter()
                .enumerate()
                .flat_map(|(k, plan)| rows_for_agent(&id, k as u64 + 1, plan))
                .collect();
            SynthRecording {
                id,
                scenario: kind,
                rows,
            }
        })
        .collect()
}

fn recording_plans(kind: ScenarioTag, n_agents: usize, rng: &mut ChaCha8Rng) -> Vec<AgentPlan> {
    let n_routes = n_agents.div_ceil(3).max(1);
    struct Route {
        path: Path,
        speed: f64,
        start: f64,
        headway: f64,
    }
    let routes: Vec<Route> = (0..n_routes)
        .map(|_| {
            let (speed, path) = match kind {
                ScenarioTag::Roundabout => {
                    let v = rng.random_range(6.0..10.0);
                    (v, roundabout_route(rng))
                }
                ScenarioTag::Intersection => {
                    let v = rng.random_range(5.0..9.0);
                    (v, intersection_route(rng))
                }
                ScenarioTag::Highway => {
                    let v = rng.random_range(20.0..28.0);
                    (v, highway_route(rng, v))
                }
            };
            Route {
                path,
                speed,
                start: rng.random_range(0.0..3.0),
                headway: rng.random_range(1.2..2.0),
            }
        })
        .collect();
    (0..n_agents)
        .map(|i| {
            let route = &routes[i % n_routes];
            let rank = (i / n_routes) as f64;
            let start_s = route.start + rank * route.headway;
            let start_frame = (start_s * RECORDING_HZ).round() as u64;
            let profile = match kind {
                ScenarioTag::Highway => SpeedProfile::constant(route.path.length(), route.speed),
                _ => SpeedProfile::brake_and_exit(&route.path, route.speed, APPROACH_FACTOR),
            };
            AgentPlan::new(route.path.clone(), profile, start_frame)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::recording::rows_to_recording;

    #[test]
    fn velocities_are_forward_differences() {
        for kind in ScenarioTag::ALL {
            let rec = &synth_scenario(kind, 1, 4, 7)[0];
            let dt = 1.0 / RECORDING_HZ;
            let loaded = rows_to_recording(&rec.rows).unwrap();
            for t in &loaded.tracks {
                for w in t.states.windows(2) {
                    assert!(((w[1].x - w[0].x) / dt - w[0].vx).abs() < 1e-9);
                    assert!(((w[1].y - w[0].y) / dt - w[0].vy).abs() < 1e-9);
                }
                for w in t.states.windows(2) {
                    assert!(((w[1].vx - w[0].vx) / dt - w[0].ax).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn roundabout_speed_is_constant_on_the_ring() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let path = roundabout_route(&mut rng);
            let speed = 8.0;
            let plan = AgentPlan::new(path.clone(), SpeedProfile::brake_and_exit(&path, speed, APPROACH_FACTOR), 0);
            let dt = 1.0 / RECORDING_HZ;
            let (a, b) = path.arc_intervals()[0];
            let pos = plan.positions();
            let mut checked = 0;
            for k in 0..pos.len() - 1 {
                let s0 = plan.profile.arc_length(k as f64 * dt);
                let s1 = plan.profile.arc_length((k + 1) as f64 * dt);
                if s0 >= a && s1 <= b {
                    let dist = (pos[k + 1][0] - pos[k][0]).hypot(pos[k + 1][1] - pos[k][1]);
                    let radius = match path.pieces[1].kind {
                        Primitive::Turn(r, _) => r,
                        _ => unreachable!(),
                    };
                    let chord = 2.0 * radius * (speed * dt / (2.0 * radius)).sin();
                    assert!((dist - chord).abs() < 1e-9);
                    checked += 1;
                }
            }
            assert!(checked > 10);
        }
    }

    #[test]
    fn profile_matches_uniform_acceleration_oracle() {
        let p = SpeedProfile {
            segments: vec![(30.0, 12.0, 8.0), (20.0, 8.0, 8.0)],
        };
        // v² = v0² + 2·a·s with a = (v1² − v0²) / (2L): speed at arc length s.
        let v_at = |s: f64| (144.0 + 2.0 * (64.0 - 144.0) / 60.0 * s).sqrt();
        let t_first = 2.0 * 30.0 / 20.0;
        for k in 1..30 {
            let t = k as f64 * 0.1;
            let s = p.arc_length(t);
            let speed = (p.arc_length(t + 1e-6) - p.arc_length(t - 1e-6)) / 2e-6;
            assert!((speed - v_at(s)).abs() < 1e-5, "t = {t}");
        }
        assert!((p.arc_length(t_first) - 30.0).abs() < 1e-12);
        assert!((p.arc_length(t_first + 1.0) - 38.0).abs() < 1e-12);
        assert!((p.duration() - (3.0 + 2.5)).abs() < 1e-12);
        assert!((p.arc_length(p.duration() + 2.0) - 66.0).abs() < 1e-12);
    }

    #[test]
    fn highway_stays_in_lane_outside_changes() {
        let recs = synth_scenario(ScenarioTag::Highway, 3, 6, 5);
        for rec in &recs {
            for row in &rec.rows {
                if row.vy.abs() < 1e-9 {
                    let lane = (row.y / LANE_WIDTH).round() * LANE_WIDTH;
                    assert!((row.y - lane).abs() <= 0.2, "y = {}", row.y);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = synth_scenario(ScenarioTag::Intersection, 2, 5, 42);
        let b = synth_scenario(ScenarioTag::Intersection, 2, 5, 42);
        assert_eq!(a, b);
        let c = synth_scenario(ScenarioTag::Intersection, 2, 5, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn path_is_continuous_across_pieces() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let p = intersection_route(&mut rng);
            let mut s = 0.0;
            for piece in &p.pieces[..p.pieces.len() - 1] {
                s += piece.length;
                let before = p.position(s - 1e-9);
                let after = p.position(s + 1e-9);
                assert!((before[0] - after[0]).hypot(before[1] - after[1]) < 1e-6);
            }
        }
    }
}
