//! Ground-truth world model: poses, agents, HD map geometry, scenarios, and
//! the frame transforms every other module consumes.
//!
//! Conventions: world frame is right-handed with yaw measured CCW from +x.
//! The ego frame has x forward and y left. Scenario frames are spaced exactly
//! [`FRAME_STEP_S`] apart, matching the waypoint token step.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inter-frame spacing in seconds (one waypoint token step).
pub const FRAME_STEP_S: f64 = 0.5;

/// Planning horizon in steps (3 s at 0.5 s per step).
pub const HORIZON_STEPS: usize = 6;

/// A 2-D point in meters. Frame depends on context (world or ego).
pub type Point2 = [f64; 2];

/// Normalize an angle to [-pi, pi).
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r >= std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Planar pose: position in meters, yaw in radians CCW from world +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    /// Construct a pose with the yaw normalized to [-pi, pi).
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn position(&self) -> Point2 {
        [self.x, self.y]
    }

    /// Map a world-frame point into this pose's local (ego) frame:
    /// translate by -(x, y), then rotate by -yaw.
    pub fn world_to_ego(&self, p: Point2) -> Point2 {
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        let (s, c) = self.yaw.sin_cos();
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Inverse of [`world_to_ego`](Self::world_to_ego).
    pub fn ego_to_world(&self, p: Point2) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        [
            self.x + c * p[0] - s * p[1],
            self.y + s * p[0] + c * p[1],
        ]
    }

    /// Apply a rigid transform `g` to this pose (rotate + translate the
    /// position, add the yaw).
    pub fn transformed_by(&self, g: &Pose2) -> Pose2 {
        let p = g.ego_to_world(self.position());
        Pose2::new(p[0], p[1], self.yaw + g.yaw)
    }
}

/// One traffic participant: an oriented box moving along its heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentState {
    pub id: String,
    pub pose: Pose2,
    pub length: f64,
    pub width: f64,
    pub speed: f64,
}

/// One timestamped snapshot of the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub t: f64,
    pub ego: Pose2,
    pub ego_speed: f64,
    pub agents: Vec<AgentState>,
}

/// Semantic class of an HD-map polyline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolylineKind {
    Centerline,
    LaneDivider,
    RoadBoundary,
    Crosswalk,
}

/// An ordered world-frame polyline with a semantic kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polyline {
    pub kind: PolylineKind,
    pub points: Vec<Point2>,
}

/// Vector map: lane centerlines, dividers, boundaries, crosswalks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdMap {
    pub polylines: Vec<Polyline>,
}

impl HdMap {
    pub fn empty() -> Self {
        Self {
            polylines: Vec::new(),
        }
    }

    pub fn centerlines(&self) -> impl Iterator<Item = &Polyline> {
        self.polylines
            .iter()
            .filter(|p| p.kind == PolylineKind::Centerline)
    }
}

/// A named sequence of frames over a shared HD map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub frames: Vec<Frame>,
    pub map: HdMap,
}

/// Ego-frame trajectory: waypoints at 0.5 s steps, x forward, y left,
/// expressed in the frame of the reference pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Point2>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Point2>) -> Self {
        Self { waypoints }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.waypoints
            .iter()
            .all(|w| w[0].is_finite() && w[1].is_finite())
    }
}

/// One invariant violation found by [`Scenario::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Frame index the violation refers to, if frame-local.
    pub frame: Option<usize>,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.frame {
            Some(i) => write!(f, "frame {}: {}", i, self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

fn finite_pose(p: &Pose2) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.yaw.is_finite()
}

impl Scenario {
    /// Check every scenario/frame invariant. Returns an empty list iff the
    /// scenario is well-formed; violations are data, not errors.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |frame: Option<usize>, rule: String| {
            out.push(Violation { frame, rule });
        };
        for (i, f) in self.frames.iter().enumerate() {
            if !f.t.is_finite() {
                push(Some(i), "non-finite timestamp".into());
            }
            if !finite_pose(&f.ego) {
                push(Some(i), "non-finite ego pose".into());
            }
            if f.ego.yaw.is_finite()
                && !(-std::f64::consts::PI..std::f64::consts::PI).contains(&f.ego.yaw)
            {
                push(Some(i), "ego yaw not normalized to [-pi, pi)".into());
            }
            if !f.ego_speed.is_finite() || f.ego_speed < 0.0 {
                push(Some(i), "ego speed must be finite and >= 0".into());
            }
            if i > 0 {
                let dt = f.t - self.frames[i - 1].t;
                if !((dt - FRAME_STEP_S).abs() <= 1e-9) {
                    push(
                        Some(i),
                        format!("frame spacing {dt} != {FRAME_STEP_S} s"),
                    );
                }
            }
            let mut ids = std::collections::HashSet::new();
            for a in &f.agents {
                if !ids.insert(a.id.as_str()) {
                    push(Some(i), format!("duplicate agent id '{}'", a.id));
                }
                if !finite_pose(&a.pose) {
                    push(Some(i), format!("agent '{}' has non-finite pose", a.id));
                }
                if !(a.length.is_finite() && a.length > 0.0)
                    || !(a.width.is_finite() && a.width > 0.0)
                {
                    push(
                        Some(i),
                        format!("agent '{}' dimensions must be > 0", a.id),
                    );
                }
                if !a.speed.is_finite() || a.speed < 0.0 {
                    push(
                        Some(i),
                        format!("agent '{}' speed must be finite and >= 0", a.id),
                    );
                }
            }
        }
        for (j, pl) in self.map.polylines.iter().enumerate() {
            if pl.points.len() < 2 {
                push(None, format!("polyline {j} has fewer than 2 points"));
            }
            if pl
                .points
                .iter()
                .any(|p| !p[0].is_finite() || !p[1].is_finite())
            {
                push(None, format!("polyline {j} has non-finite points"));
            }
        }
        out
    }

    /// Parse from scenario JSON, rejecting unknown keys and non-finite or
    /// invariant-breaking data.
    pub fn from_json(s: &str) -> Result<Scenario> {
        let scenario: Scenario = serde_json::from_str(s)?;
        let violations = scenario.validate();
        if let Some(v) = violations.first() {
            return Err(Error::InvalidScenario(v.to_string()));
        }
        Ok(scenario)
    }

    /// Serialize to scenario JSON (stable field order, shortest round-trip
    /// floats).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    /// Apply a global rigid transform to every pose and map point.
    pub fn transformed_by(&self, g: &Pose2) -> Scenario {
        Scenario {
            name: self.name.clone(),
            frames: self
                .frames
                .iter()
                .map(|f| Frame {
                    t: f.t,
                    ego: f.ego.transformed_by(g),
                    ego_speed: f.ego_speed,
                    agents: f
                        .agents
                        .iter()
                        .map(|a| AgentState {
                            id: a.id.clone(),
                            pose: a.pose.transformed_by(g),
                            length: a.length,
                            width: a.width,
                            speed: a.speed,
                        })
                        .collect(),
                })
                .collect(),
            map: HdMap {
                polylines: self
                    .map
                    .polylines
                    .iter()
                    .map(|pl| Polyline {
                        kind: pl.kind,
                        points: pl.points.iter().map(|p| g.ego_to_world(*p)).collect(),
                    })
                    .collect(),
            },
        }
    }
}

/// Future ego positions of frame `i`, expressed in the ego frame of frame `i`.
///
/// Waypoint `k` is `world_to_ego(frames[i].ego, frames[i + k + 1].ego)` for
/// `k = 0..steps`.
pub fn ground_truth_trajectory(s: &Scenario, i: usize, steps: usize) -> Result<Trajectory> {
    if i + steps >= s.frames.len() {
        return Err(Error::HorizonOutOfRange {
            frame: i,
            steps,
            frames: s.frames.len(),
        });
    }
    let ref_ego = s.frames[i].ego;
    let waypoints = (0..steps)
        .map(|k| ref_ego.world_to_ego(s.frames[i + k + 1].ego.position()))
        .collect();
    Ok(Trajectory::new(waypoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn frame(t: f64, ego: Pose2, speed: f64) -> Frame {
        Frame {
            t,
            ego,
            ego_speed: speed,
            agents: Vec::new(),
        }
    }

    #[test]
    fn world_to_ego_identity_pose() {
        let ego = Pose2::new(0.0, 0.0, 0.0);
        assert_eq!(ego.world_to_ego([3.0, 4.0]), [3.0, 4.0]);
    }

    #[test]
    fn world_to_ego_pure_translation() {
        let ego = Pose2::new(1.0, 0.0, 0.0);
        assert_eq!(ego.world_to_ego([2.0, 0.0]), [1.0, 0.0]);
    }

    #[test]
    fn world_to_ego_quarter_turn() {
        // R(-pi/2) * (0, 1) = (1, 0)
        let ego = Pose2::new(0.0, 0.0, PI / 2.0);
        let p = ego.world_to_ego([0.0, 1.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn ego_world_roundtrip() {
        let ego = Pose2::new(3.2, -7.5, 1.1);
        let p = [12.0, -4.5];
        let back = ego.ego_to_world(ego.world_to_ego(p));
        assert!((back[0] - p[0]).abs() < 1e-12);
        assert!((back[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn gt_stationary_is_zero() {
        let ego = Pose2::new(5.0, 5.0, 0.3);
        let frames = (0..7).map(|k| frame(0.5 * k as f64, ego, 0.0)).collect();
        let s = Scenario {
            name: "stationary".into(),
            frames,
            map: HdMap::empty(),
        };
        let t = ground_truth_trajectory(&s, 0, 6).unwrap();
        for w in &t.waypoints {
            assert_eq!(*w, [0.0, 0.0]);
        }
    }

    #[test]
    fn gt_straight_constant_velocity() {
        let frames = (0..8)
            .map(|k| frame(0.5 * k as f64, Pose2::new(5.0 * k as f64, 0.0, 0.0), 10.0))
            .collect();
        let s = Scenario {
            name: "straight".into(),
            frames,
            map: HdMap::empty(),
        };
        let t = ground_truth_trajectory(&s, 0, 6).unwrap();
        let expected = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
        for (w, e) in t.waypoints.iter().zip(expected) {
            assert!((w[0] - e).abs() < 1e-12 && w[1].abs() < 1e-12);
        }
    }

    #[test]
    fn gt_circle_closed_form() {
        // CCW circle, radius 20, speed 10; frame k sits at arc angle
        // theta = 0.25 k with heading tangent to the circle.
        let r = 20.0;
        let v = 10.0;
        let frames: Vec<Frame> = (0..10)
            .map(|k| {
                let theta = FRAME_STEP_S * k as f64 * v / r;
                frame(
                    0.5 * k as f64,
                    Pose2::new(r * theta.sin(), r * (1.0 - theta.cos()), theta),
                    v,
                )
            })
            .collect();
        let s = Scenario {
            name: "circle".into(),
            frames,
            map: HdMap::empty(),
        };
        let t = ground_truth_trajectory(&s, 0, 6).unwrap();
        for (k, w) in t.waypoints.iter().enumerate() {
            let theta_k = FRAME_STEP_S * (k + 1) as f64 * v / r;
            let expected = [r * theta_k.sin(), r * (1.0 - theta_k.cos())];
            assert!((w[0] - expected[0]).abs() < 1e-9, "k={k}");
            assert!((w[1] - expected[1]).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn gt_horizon_out_of_range() {
        let frames = (0..4)
            .map(|k| frame(0.5 * k as f64, Pose2::new(0.0, 0.0, 0.0), 0.0))
            .collect();
        let s = Scenario {
            name: "short".into(),
            frames,
            map: HdMap::empty(),
        };
        assert!(matches!(
            ground_truth_trajectory(&s, 0, 6),
            Err(Error::HorizonOutOfRange { .. })
        ));
    }

    #[test]
    fn gt_rigid_invariance() {
        let frames: Vec<Frame> = (0..8)
            .map(|k| {
                frame(
                    0.5 * k as f64,
                    Pose2::new(3.0 * k as f64, 0.5 * (k as f64).sin(), 0.1 * k as f64),
                    6.0,
                )
            })
            .collect();
        let s = Scenario {
            name: "wiggle".into(),
            frames,
            map: HdMap::empty(),
        };
        let g = Pose2::new(100.0, -40.0, 2.0);
        let s2 = s.transformed_by(&g);
        let t1 = ground_truth_trajectory(&s, 1, 6).unwrap();
        let t2 = ground_truth_trajectory(&s2, 1, 6).unwrap();
        for (a, b) in t1.waypoints.iter().zip(&t2.waypoints) {
            assert!((a[0] - b[0]).abs() <= 1e-9);
            assert!((a[1] - b[1]).abs() <= 1e-9);
        }
    }

    #[test]
    fn validate_well_formed() {
        let frames = (0..2)
            .map(|k| frame(0.5 * k as f64, Pose2::new(0.0, 0.0, 0.0), 1.0))
            .collect();
        let s = Scenario {
            name: "ok".into(),
            frames,
            map: HdMap::empty(),
        };
        assert!(s.validate().is_empty());
    }

    #[test]
    fn validate_spacing_violation() {
        let s = Scenario {
            name: "bad".into(),
            frames: vec![
                frame(0.0, Pose2::new(0.0, 0.0, 0.0), 1.0),
                frame(0.4, Pose2::new(0.0, 0.0, 0.0), 1.0),
            ],
            map: HdMap::empty(),
        };
        let v = s.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].frame, Some(1));
        assert!(v[0].rule.contains("spacing"));
    }

    #[test]
    fn validate_duplicate_agent_id() {
        let a = AgentState {
            id: "a0".into(),
            pose: Pose2::new(1.0, 2.0, 0.0),
            length: 4.0,
            width: 2.0,
            speed: 0.0,
        };
        let mut f = frame(0.0, Pose2::new(0.0, 0.0, 0.0), 1.0);
        f.agents = vec![a.clone(), a];
        let s = Scenario {
            name: "dup".into(),
            frames: vec![f],
            map: HdMap::empty(),
        };
        let v = s.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("duplicate agent id"));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let s = r#"{"name":"x","frames":[],"map":{"polylines":[]},"extra":1}"#;
        assert!(Scenario::from_json(s).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let s = Scenario {
            name: "rt".into(),
            frames: vec![frame(0.0, Pose2::new(1.5, -2.25, 0.5), 3.0)],
            map: HdMap {
                polylines: vec![Polyline {
                    kind: PolylineKind::Centerline,
                    points: vec![[0.0, 0.0], [10.0, 0.0]],
                }],
            },
        };
        let parsed = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(parsed, s);
    }

    #[test]
    fn normalize_angle_range() {
        for k in -20..20 {
            let a = 0.7 * k as f64;
            let n = normalize_angle(a);
            assert!((-PI..PI).contains(&n), "a={a} n={n}");
            // Same direction modulo 2 pi.
            assert!(((a - n) / (2.0 * PI)).rem_euclid(1.0) < 1e-9 || ((a - n) / (2.0 * PI)).rem_euclid(1.0) > 1.0 - 1e-9);
        }
    }
}
