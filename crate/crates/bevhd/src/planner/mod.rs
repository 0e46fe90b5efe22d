//! The planner abstraction: prompt construction, deterministic baselines, a
//! ground-truth oracle, a remote JSON-over-HTTP planner client, and a mock
//! server for tests.
//!
//! Wire protocol (HTTP/1.1, `POST /v1/plan`, `application/json`):
//!
//! ```json
//! { "version": 1, "image_ppm_base64": "...", "prompt": "...",
//!   "horizon_steps": 6, "vocab": { "bins_per_axis": 400, "range_m": 50.0 } }
//! ```
//!
//! The response carries exactly one of `tokens` or `waypoints`:
//!
//! ```json
//! { "version": 1, "tokens": [80200, ...] }
//! { "version": 1, "waypoints": [[0.125, 0.125], ...] }
//! ```
//!
//! Errors are HTTP 4xx/5xx with `{ "error": "..." }`. Requests may carry an
//! optional `meta` object (scenario name, frame index, ego speed) consumed by
//! mock policies that need scene state the image alone does not carry.

mod mock;
mod remote;

pub use mock::{serve_mock, MockPolicy, MockServerHandle};
pub use remote::RemotePlanner;

use serde::{Deserialize, Serialize};

use crate::codec::{TokenVocab, WaypointTokens};
use crate::grid::GridSpec;
use crate::scene::{ground_truth_trajectory, Frame, HdMap, Point2, Scenario, Trajectory, FRAME_STEP_S};
use crate::viz::RgbImage;
use crate::{Error, Result};

/// Version tag of the fixed prompt template.
pub const PROMPT_VERSION: u32 = 1;

/// Wire protocol version.
pub const WIRE_VERSION: u32 = 1;

/// Build the fixed planning prompt: states that the image is a BEV-HD Map,
/// gives the grid geometry, and asks for `horizon_steps` waypoint tokens at
/// 0.5 s intervals. Byte-stable per [`PROMPT_VERSION`].
pub fn build_prompt(horizon_steps: usize, grid: &GridSpec) -> String {
    format!(
        "bev-hd-prompt/v{PROMPT_VERSION}: The attached image is a BEV-HD Map: a bird's-eye-view \
         feature visualization of the scene around the ego vehicle with the HD map rendered on \
         top. The grid is {h}x{w} cells covering +/-{e} m on both axes; the ego vehicle sits at \
         the center facing image-right, with its left side toward image-top. Plan the ego \
         vehicle's trajectory for the upcoming moment: output exactly {n} waypoint tokens, one \
         per {dt} s step.",
        h = grid.height_cells,
        w = grid.width_cells,
        e = grid.extent_m,
        n = horizon_steps,
        dt = FRAME_STEP_S,
    )
}

/// Optional per-request scene metadata for mock policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMeta {
    pub scenario: String,
    pub frame: usize,
    pub ego_speed: f64,
}

/// `POST /v1/plan` request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub version: u32,
    pub image_ppm_base64: String,
    pub prompt: String,
    pub horizon_steps: usize,
    pub vocab: TokenVocab,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<WireMeta>,
}

/// `POST /v1/plan` response body: exactly one of `tokens` / `waypoints`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireResponse {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<Point2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<String>,
}

/// Error body for HTTP 4xx/5xx responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

/// Everything a planner may look at for one sample.
pub struct PlanContext<'a> {
    pub scenario: &'a Scenario,
    pub frame_index: usize,
    pub image: &'a RgbImage,
    pub grid: &'a GridSpec,
    pub vocab: &'a TokenVocab,
    pub horizon_steps: usize,
}

impl PlanContext<'_> {
    pub fn frame(&self) -> &Frame {
        &self.scenario.frames[self.frame_index]
    }
}

/// A planner's answer: either discrete tokens or metric waypoints.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutput {
    Tokens(WaypointTokens),
    Waypoints(Trajectory),
}

/// A trajectory planner. Implementations must be safe to call concurrently.
pub trait Planner: Send + Sync {
    fn name(&self) -> &str;
    fn plan(&self, ctx: &PlanContext<'_>) -> Result<PlanOutput>;
}

/// Constant-velocity rollout: waypoint k at `ego_speed * 0.5 * (k + 1)`
/// straight ahead.
pub fn plan_constant_velocity(frame: &Frame, horizon_steps: usize) -> Trajectory {
    Trajectory::new(
        (0..horizon_steps)
            .map(|k| [frame.ego_speed * FRAME_STEP_S * (k + 1) as f64, 0.0])
            .collect(),
    )
}

/// Lane-follow baseline: project the ego onto the nearest centerline and
/// advance along it by arc length at the current speed. Ties between equally
/// near segments break toward the earliest polyline, then earliest segment;
/// past the polyline end the last segment's direction is extrapolated.
pub fn plan_lane_follow(frame: &Frame, map: &HdMap, horizon_steps: usize) -> Result<Trajectory> {
    let ego_pos = frame.ego.position();
    let mut best: Option<(f64, usize, usize, f64)> = None; // (dist2, poly, seg, t)
    let centerlines: Vec<&crate::scene::Polyline> = map.centerlines().collect();
    if centerlines.is_empty() {
        return Err(Error::NoCenterline);
    }
    for (pi, pl) in centerlines.iter().enumerate() {
        for (si, seg) in pl.points.windows(2).enumerate() {
            let (a, b) = (seg[0], seg[1]);
            let abx = b[0] - a[0];
            let aby = b[1] - a[1];
            let len2 = abx * abx + aby * aby;
            let t = if len2 > 0.0 {
                (((ego_pos[0] - a[0]) * abx + (ego_pos[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dx = ego_pos[0] - (a[0] + t * abx);
            let dy = ego_pos[1] - (a[1] + t * aby);
            let d2 = dx * dx + dy * dy;
            if best.map_or(true, |(bd2, _, _, _)| d2 < bd2) {
                best = Some((d2, pi, si, t));
            }
        }
    }
    let (_, pi, si, t) = best.expect("at least one centerline segment");
    let pl = centerlines[pi];

    // Walk the polyline from the projection point by arc length.
    let advance = |arc: f64| -> Point2 {
        let mut remaining = arc;
        let mut seg = si;
        let mut frac = t;
        loop {
            let a = pl.points[seg];
            let b = pl.points[seg + 1];
            let seg_len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let left = seg_len * (1.0 - frac);
            if remaining <= left || seg + 2 >= pl.points.len() {
                // Inside this segment, or extrapolating past the end along
                // the last segment direction.
                let along = frac * seg_len + remaining;
                if seg_len > 0.0 {
                    let ux = (b[0] - a[0]) / seg_len;
                    let uy = (b[1] - a[1]) / seg_len;
                    return [a[0] + ux * along, a[1] + uy * along];
                }
                return a;
            }
            remaining -= left;
            seg += 1;
            frac = 0.0;
        }
    };

    let waypoints = (0..horizon_steps)
        .map(|k| {
            let arc = frame.ego_speed * FRAME_STEP_S * (k + 1) as f64;
            frame.ego.world_to_ego(advance(arc))
        })
        .collect();
    Ok(Trajectory::new(waypoints))
}

/// Ground-truth oracle: replays the scenario's logged future verbatim.
pub struct OraclePlanner;

impl Planner for OraclePlanner {
    fn name(&self) -> &str {
        "oracle"
    }

    fn plan(&self, ctx: &PlanContext<'_>) -> Result<PlanOutput> {
        Ok(PlanOutput::Waypoints(ground_truth_trajectory(
            ctx.scenario,
            ctx.frame_index,
            ctx.horizon_steps,
        )?))
    }
}

/// Constant-velocity baseline planner.
pub struct ConstantVelocityPlanner;

impl Planner for ConstantVelocityPlanner {
    fn name(&self) -> &str {
        "constant_velocity"
    }

    fn plan(&self, ctx: &PlanContext<'_>) -> Result<PlanOutput> {
        Ok(PlanOutput::Waypoints(plan_constant_velocity(
            ctx.frame(),
            ctx.horizon_steps,
        )))
    }
}

/// Lane-follow baseline planner.
pub struct LaneFollowPlanner;

impl Planner for LaneFollowPlanner {
    fn name(&self) -> &str {
        "lane_follow"
    }

    fn plan(&self, ctx: &PlanContext<'_>) -> Result<PlanOutput> {
        Ok(PlanOutput::Waypoints(plan_lane_follow(
            ctx.frame(),
            &ctx.scenario.map,
            ctx.horizon_steps,
        )?))
    }
}
