//! Deterministic synthetic scenarios covering the basic maneuver taxonomy:
//! straight, turn left/right, lead-vehicle follow, and a cut-in with a known
//! collision geometry.
//!
//! Ego motion is analytic (no noise) so closed-form oracles hold exactly.
//! Speeds are piecewise constant per 0.5 s interval: a frame's `ego_speed`
//! is the speed driven over the *following* interval, so the displacement
//! between consecutive frames is exactly `ego_speed * 0.5` along the path.

use serde::{Deserialize, Serialize};

use crate::scene::{
    AgentState, Frame, HdMap, Point2, Polyline, PolylineKind, Pose2, Scenario, FRAME_STEP_S,
};
use crate::{Error, Result};

/// Maneuver kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Straight,
    TurnLeft,
    TurnRight,
    Follow,
    CutIn,
}

impl Maneuver {
    pub const ALL: [Maneuver; 5] = [
        Maneuver::Straight,
        Maneuver::TurnLeft,
        Maneuver::TurnRight,
        Maneuver::Follow,
        Maneuver::CutIn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Maneuver::Straight => "straight",
            Maneuver::TurnLeft => "turn_left",
            Maneuver::TurnRight => "turn_right",
            Maneuver::Follow => "follow",
            Maneuver::CutIn => "cut_in",
        }
    }
}

/// Generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub kind: Maneuver,
    pub duration_s: f64,
    pub speed_mps: f64,
    /// Arc radius for the turn kinds; ignored otherwise.
    pub turn_radius_m: f64,
    /// Lead-vehicle gap for follow/cut_in; ignored otherwise.
    pub lead_gap_m: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s >= 4.0) {
            return Err(Error::InvalidParameter(
                "duration must be at least 4 s (room for a 3 s horizon)".into(),
            ));
        }
        if !(self.speed_mps.is_finite() && self.speed_mps >= 0.0) {
            return Err(Error::InvalidParameter("speed must be >= 0".into()));
        }
        if matches!(self.kind, Maneuver::TurnLeft | Maneuver::TurnRight)
            && !(self.turn_radius_m.is_finite() && self.turn_radius_m > 0.0)
        {
            return Err(Error::InvalidParameter("turn radius must be > 0".into()));
        }
        if matches!(self.kind, Maneuver::Follow | Maneuver::CutIn)
            && !(self.lead_gap_m.is_finite() && self.lead_gap_m > 0.0)
        {
            return Err(Error::InvalidParameter("lead gap must be > 0".into()));
        }
        Ok(())
    }
}

/// Lane half-width used for generated road boundaries.
pub const LANE_HALF_WIDTH_M: f64 = 3.5;

const LEAD_IN_S: f64 = 2.0;
const AGENT_LENGTH: f64 = 4.5;
const AGENT_WIDTH: f64 = 1.8;

/// Cut-in braking: ego sheds this much speed per 0.5 s interval (3 m/s^2).
const CUT_IN_BRAKE_STEP: f64 = 1.5;
const CUT_IN_BRAKE_FROM_S: f64 = 2.0;
const CUT_IN_FINAL_SPEED: f64 = 4.0;
const CUT_IN_MERGER_SPEED: f64 = 4.0;
/// The merger starts this far ahead of the lead gap, in the adjacent lane.
const CUT_IN_MERGER_EXTRA_M: f64 = 18.0;

fn frame_count(duration_s: f64) -> usize {
    (duration_s / FRAME_STEP_S).round() as usize + 1
}

/// Ego pose/speed at frame k of a straight run with per-interval speeds.
fn integrate_straight(speeds: &[f64]) -> Vec<(Pose2, f64)> {
    let mut out = Vec::with_capacity(speeds.len());
    let mut x = 0.0;
    for (k, &v) in speeds.iter().enumerate() {
        out.push((Pose2::new(x, 0.0, 0.0), v));
        if k + 1 < speeds.len() {
            x += v * FRAME_STEP_S;
        }
    }
    out
}

/// Ego pose at arc-length `s` along a 2 s straight lead-in followed by a
/// constant-radius arc (`left = +1` turns left, `-1` right).
fn turn_pose(s: f64, speed: f64, radius: f64, left: f64) -> Pose2 {
    let lead_in = speed * LEAD_IN_S;
    if s <= lead_in {
        return Pose2::new(s, 0.0, 0.0);
    }
    let theta = (s - lead_in) / radius;
    // Arc center sits at (lead_in, +/-radius).
    let x = lead_in + radius * theta.sin();
    let y = left * radius * (1.0 - theta.cos());
    Pose2::new(x, y, crate::scene::normalize_angle(left * theta))
}

fn centerline(points: Vec<Point2>) -> Polyline {
    Polyline {
        kind: PolylineKind::Centerline,
        points,
    }
}

fn boundary(points: Vec<Point2>) -> Polyline {
    Polyline {
        kind: PolylineKind::RoadBoundary,
        points,
    }
}

/// Offset a polyline laterally (to its left for positive `d`), using
/// per-vertex normals from the segment directions.
fn offset_polyline(points: &[Point2], d: f64) -> Vec<Point2> {
    let n = points.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = if i + 1 < n {
            (points[i], points[i + 1])
        } else {
            (points[i - 1], points[i])
        };
        let len = (b[0] - a[0]).hypot(b[1] - a[1]).max(1e-12);
        let nx = -(b[1] - a[1]) / len;
        let ny = (b[0] - a[0]) / len;
        out.push([points[i][0] + d * nx, points[i][1] + d * ny]);
    }
    out
}

fn straight_lane_map(x_from: f64, x_to: f64, y: f64) -> Vec<Polyline> {
    let line = vec![[x_from, y], [x_to, y]];
    vec![
        centerline(line.clone()),
        boundary(offset_polyline(&line, LANE_HALF_WIDTH_M)),
        boundary(offset_polyline(&line, -LANE_HALF_WIDTH_M)),
    ]
}

fn turn_map(spec: &GenSpec, left: f64) -> Vec<Polyline> {
    let total = spec.speed_mps * spec.duration_s + 60.0;
    // Dense samples keep the polyline within millimeters of the true arc.
    let step = 0.5;
    let n = (total / step).ceil() as usize + 1;
    let line: Vec<Point2> = (0..n)
        .map(|i| {
            let p = turn_pose(i as f64 * step, spec.speed_mps, spec.turn_radius_m, left);
            p.position()
        })
        .collect();
    vec![
        centerline(line.clone()),
        boundary(offset_polyline(&line, LANE_HALF_WIDTH_M)),
        boundary(offset_polyline(&line, -LANE_HALF_WIDTH_M)),
    ]
}

fn agent(id: &str, x: f64, y: f64, yaw: f64, speed: f64) -> AgentState {
    AgentState {
        id: id.to_string(),
        pose: Pose2::new(x, y, yaw),
        length: AGENT_LENGTH,
        width: AGENT_WIDTH,
        speed,
    }
}

/// Generate the scenario described by `spec`. Bit-deterministic.
pub fn generate(spec: &GenSpec) -> Result<Scenario> {
    spec.validate()?;
    let n = frame_count(spec.duration_s);
    let path_len = spec.speed_mps * spec.duration_s;

    let (frames, polylines) = match spec.kind {
        Maneuver::Straight => {
            let states = integrate_straight(&vec![spec.speed_mps; n]);
            let frames = states
                .into_iter()
                .enumerate()
                .map(|(k, (ego, v))| Frame {
                    t: k as f64 * FRAME_STEP_S,
                    ego,
                    ego_speed: v,
                    agents: Vec::new(),
                })
                .collect();
            (frames, straight_lane_map(-60.0, path_len + 60.0, 0.0))
        }
        Maneuver::TurnLeft | Maneuver::TurnRight => {
            let left = if spec.kind == Maneuver::TurnLeft {
                1.0
            } else {
                -1.0
            };
            let frames = (0..n)
                .map(|k| {
                    let t = k as f64 * FRAME_STEP_S;
                    Frame {
                        t,
                        ego: turn_pose(spec.speed_mps * t, spec.speed_mps, spec.turn_radius_m, left),
                        ego_speed: spec.speed_mps,
                        agents: Vec::new(),
                    }
                })
                .collect();
            (frames, turn_map(spec, left))
        }
        Maneuver::Follow => {
            let states = integrate_straight(&vec![spec.speed_mps; n]);
            let frames = states
                .into_iter()
                .enumerate()
                .map(|(k, (ego, v))| Frame {
                    t: k as f64 * FRAME_STEP_S,
                    agents: vec![agent("lead", ego.x + spec.lead_gap_m, 0.0, 0.0, v)],
                    ego,
                    ego_speed: v,
                })
                .collect();
            (frames, straight_lane_map(-60.0, path_len + 60.0, 0.0))
        }
        Maneuver::CutIn => {
            // Ego cruises, then brakes at 3 m/s^2 from t = 2 s down to 4 m/s
            // while an adjacent-lane agent merges in at 1 m/s lateral speed.
            let speeds: Vec<f64> = (0..n)
                .map(|k| {
                    let t = k as f64 * FRAME_STEP_S;
                    if t < CUT_IN_BRAKE_FROM_S {
                        spec.speed_mps
                    } else {
                        let steps = ((t - CUT_IN_BRAKE_FROM_S) / FRAME_STEP_S).round();
                        (spec.speed_mps - steps * CUT_IN_BRAKE_STEP).max(CUT_IN_FINAL_SPEED)
                    }
                })
                .collect();
            let states = integrate_straight(&speeds);
            let merger_x0 = spec.lead_gap_m + CUT_IN_MERGER_EXTRA_M;
            let frames = states
                .into_iter()
                .enumerate()
                .map(|(k, (ego, v))| {
                    let t = k as f64 * FRAME_STEP_S;
                    let merger_y = (LANE_HALF_WIDTH_M
                        - (t - CUT_IN_BRAKE_FROM_S).max(0.0))
                    .max(0.0);
                    Frame {
                        t,
                        agents: vec![
                            agent("lead", ego.x + spec.lead_gap_m, 0.0, 0.0, v),
                            agent(
                                "merger",
                                merger_x0 + CUT_IN_MERGER_SPEED * t,
                                merger_y,
                                0.0,
                                CUT_IN_MERGER_SPEED,
                            ),
                        ],
                        ego,
                        ego_speed: v,
                    }
                })
                .collect();
            let mut polylines = straight_lane_map(-60.0, path_len + 60.0, 0.0);
            polylines.push(centerline(vec![
                [-60.0, LANE_HALF_WIDTH_M],
                [path_len + 60.0, LANE_HALF_WIDTH_M],
            ]));
            (frames, polylines)
        }
    };

    let scenario = Scenario {
        name: spec.kind.name().to_string(),
        frames,
        map: HdMap { polylines },
    };
    let violations = scenario.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(format!(
            "generated scenario invalid: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(scenario)
}

/// Default parameters of the fixture suite, one per maneuver.
pub fn default_spec(kind: Maneuver, seed: u64) -> GenSpec {
    GenSpec {
        kind,
        duration_s: 20.0,
        speed_mps: 10.0,
        turn_radius_m: 20.0,
        lead_gap_m: match kind {
            Maneuver::Follow => 15.0,
            _ => 10.0,
        },
        seed,
    }
}

/// The five-scenario fixture suite: straight, turn_left, turn_right, follow,
/// cut_in, with default parameters. Deterministic per seed.
pub fn standard_suite(seed: u64) -> Vec<Scenario> {
    Maneuver::ALL
        .iter()
        .map(|&kind| generate(&default_spec(kind, seed)).expect("default specs are valid"))
        .collect()
}
