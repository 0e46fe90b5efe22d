//! Ego-centered HD-map cropping, polyline rasterization, BEV-HD Map
//! composition, agent-box rendering, and trajectory overlays.
//!
//! Rendering overwrites the underlying pixels (no blending); draw order is
//! map < agent boxes < ground-truth trajectory < predicted trajectory.

use serde::Deserialize;

use crate::grid::GridSpec;
use crate::scene::{AgentState, HdMap, Point2, PolylineKind, Pose2, Trajectory};
use crate::viz::RgbImage;

/// Keeps clipped endpoints strictly inside the half-open grid interval.
const EDGE_EPS: f64 = 1e-9;

/// Colors and line thickness for the BEV-HD overlay layers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderStyle {
    pub centerline: [u8; 3],
    pub lane_divider: [u8; 3],
    pub road_boundary: [u8; 3],
    pub crosswalk: [u8; 3],
    pub agent_box: [u8; 3],
    /// Predicted trajectory: green.
    pub predicted: [u8; 3],
    /// Ground-truth trajectory: orange.
    pub ground_truth: [u8; 3],
    /// Line thickness in cells.
    pub thickness: u32,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            centerline: [60, 120, 255],
            lane_divider: [255, 255, 255],
            road_boundary: [230, 60, 60],
            crosswalk: [250, 220, 60],
            agent_box: [255, 0, 255],
            predicted: [0, 200, 0],
            ground_truth: [255, 140, 0],
            thickness: 1,
        }
    }
}

impl RenderStyle {
    pub fn color_for(&self, kind: PolylineKind) -> [u8; 3] {
        match kind {
            PolylineKind::Centerline => self.centerline,
            PolylineKind::LaneDivider => self.lane_divider,
            PolylineKind::RoadBoundary => self.road_boundary,
            PolylineKind::Crosswalk => self.crosswalk,
        }
    }
}

/// Liang-Barsky clip of segment (p0, p1) to the axis-aligned box
/// [min, max]^2. Returns the clipped endpoints, or `None` when fully
/// outside.
pub fn clip_segment(p0: Point2, p1: Point2, min: f64, max: f64) -> Option<(Point2, Point2)> {
    let dx = p1[0] - p0[0];
    let dy = p1[1] - p0[1];
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-dx, p0[0] - min),
        (dx, max - p0[0]),
        (-dy, p0[1] - min),
        (dy, max - p0[1]),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return None;
                }
                if r > t0 {
                    t0 = r;
                }
            } else {
                if r < t0 {
                    return None;
                }
                if r < t1 {
                    t1 = r;
                }
            }
        }
    }
    Some((
        [p0[0] + t0 * dx, p0[1] + t0 * dy],
        [p0[0] + t1 * dx, p0[1] + t1 * dy],
    ))
}

/// An ego-frame polyline with its semantic kind.
pub type EgoPolyline = (PolylineKind, Vec<Point2>);

/// Clip a chain of ego-frame points to the grid square, splitting at boundary
/// crossings.
fn clip_chain(points: &[Point2], spec: &GridSpec) -> Vec<Vec<Point2>> {
    let min = -spec.extent_m;
    let max = spec.extent_m - EDGE_EPS;
    let mut runs: Vec<Vec<Point2>> = Vec::new();
    let mut current: Vec<Point2> = Vec::new();
    for seg in points.windows(2) {
        match clip_segment(seg[0], seg[1], min, max) {
            Some((a, b)) => {
                if a == b {
                    continue; // degenerate sliver at the boundary
                }
                match current.last() {
                    Some(last) if *last == a => current.push(b),
                    Some(_) => {
                        runs.push(std::mem::take(&mut current));
                        current.push(a);
                        current.push(b);
                    }
                    None => {
                        current.push(a);
                        current.push(b);
                    }
                }
            }
            None => {
                if !current.is_empty() {
                    runs.push(std::mem::take(&mut current));
                }
            }
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs
}

/// Transform the HD map into the ego frame and clip it to the grid square.
/// Polylines are split at boundary crossings; those fully outside are
/// dropped.
pub fn crop_map(map: &HdMap, ego: &Pose2, spec: &GridSpec) -> Vec<EgoPolyline> {
    let mut out = Vec::new();
    for pl in &map.polylines {
        let ego_points: Vec<Point2> = pl.points.iter().map(|p| ego.world_to_ego(*p)).collect();
        for run in clip_chain(&ego_points, spec) {
            out.push((pl.kind, run));
        }
    }
    out
}

fn bresenham(mut a: (isize, isize), b: (isize, isize), mut plot: impl FnMut(isize, isize)) {
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(a.0, a.1);
        if a == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            a.0 += sx;
        }
        if e2 <= dx {
            err += dx;
            a.1 += sy;
        }
    }
}

fn stamp(img: &mut RgbImage, row: isize, col: isize, color: [u8; 3], thickness: u32) {
    let half = (thickness as isize - 1) / 2;
    for dr in -half..=(thickness as isize - 1 - half) {
        for dc in -half..=(thickness as isize - 1 - half) {
            let (r, c) = (row + dr, col + dc);
            if r >= 0 && c >= 0 && (r as usize) < img.height && (c as usize) < img.width {
                img.set(r as usize, c as usize, color);
            }
        }
    }
}

/// Snap a coordinate to a 1e-9 m lattice. Rigid transforms are only exact to
/// fp rounding; without this, a line sitting exactly on a cell edge (lane
/// centerlines at ego y = 0 do) could rasterize into different cells before
/// and after a transform.
fn quantize_coord(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn draw_segment(
    img: &mut RgbImage,
    spec: &GridSpec,
    p0: Point2,
    p1: Point2,
    color: [u8; 3],
    thickness: u32,
) {
    let p0 = [quantize_coord(p0[0]), quantize_coord(p0[1])];
    let p1 = [quantize_coord(p1[0]), quantize_coord(p1[1])];
    let Some((a, b)) = clip_segment(p0, p1, -spec.extent_m, spec.extent_m - EDGE_EPS) else {
        return;
    };
    let (Some(ca), Some(cb)) = (spec.point_to_cell(a), spec.point_to_cell(b)) else {
        return;
    };
    bresenham(
        (ca.0 as isize, ca.1 as isize),
        (cb.0 as isize, cb.1 as isize),
        |r, c| stamp(img, r, c, color, thickness),
    );
}

/// Draw ego-frame polylines over a copy of the image. Pixels are overwritten
/// in input order.
pub fn render_polylines(
    img: &RgbImage,
    polylines: &[EgoPolyline],
    spec: &GridSpec,
    style: &RenderStyle,
) -> RgbImage {
    let mut out = img.clone();
    for (kind, points) in polylines {
        let color = style.color_for(*kind);
        for seg in points.windows(2) {
            draw_segment(&mut out, spec, seg[0], seg[1], color, style.thickness);
        }
    }
    out
}

/// Superimpose the ego-cropped HD map onto a BEV visualization: the BEV-HD
/// Map.
pub fn compose_bev_hd(
    bev: &RgbImage,
    map: &HdMap,
    ego: &Pose2,
    spec: &GridSpec,
    style: &RenderStyle,
) -> RgbImage {
    render_polylines(bev, &crop_map(map, ego, spec), spec, style)
}

/// Draw each agent's oriented rectangle outline (4 segments, ego frame).
pub fn render_agent_boxes(
    img: &RgbImage,
    ego: &Pose2,
    agents: &[AgentState],
    spec: &GridSpec,
    style: &RenderStyle,
) -> RgbImage {
    let mut out = img.clone();
    for a in agents {
        let center = ego.world_to_ego(a.pose.position());
        let heading = a.pose.yaw - ego.yaw;
        let (s, c) = heading.sin_cos();
        let (hl, hw) = (a.length / 2.0, a.width / 2.0);
        let corner = |lx: f64, ly: f64| -> Point2 {
            [center[0] + c * lx - s * ly, center[1] + s * lx + c * ly]
        };
        let corners = [
            corner(hl, hw),
            corner(hl, -hw),
            corner(-hl, -hw),
            corner(-hl, hw),
        ];
        for i in 0..4 {
            draw_segment(
                &mut out,
                spec,
                corners[i],
                corners[(i + 1) % 4],
                style.agent_box,
                style.thickness,
            );
        }
    }
    out
}

fn draw_trajectory(
    img: &mut RgbImage,
    traj: &Trajectory,
    spec: &GridSpec,
    color: [u8; 3],
    thickness: u32,
) {
    // Start at the ego cell so single-waypoint motions render visibly.
    let mut prev: Point2 = [0.0, 0.0];
    for w in &traj.waypoints {
        draw_segment(img, spec, prev, *w, color, thickness);
        prev = *w;
    }
}

/// Draw ground truth (orange) then the prediction (green) so the prediction
/// stays visible on overlap.
pub fn render_trajectories(
    img: &RgbImage,
    predicted: &Trajectory,
    gt: &Trajectory,
    spec: &GridSpec,
    style: &RenderStyle,
) -> RgbImage {
    let mut out = img.clone();
    draw_trajectory(&mut out, gt, spec, style.ground_truth, style.thickness);
    draw_trajectory(&mut out, predicted, spec, style.predicted, style.thickness);
    out
}
