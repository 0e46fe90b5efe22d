//! BEV grid geometry, feature tensors, agent occupancy rasterization, and the
//! deterministic synthetic feature generator.
//!
//! The grid covers the ego frame square `[-extent, extent)` on both axes.
//! Forward (+x) maps to increasing column and left (+y) to decreasing row, so
//! rendered images show the ego facing image-right with left-of-vehicle at
//! image-top.

use std::io::{Read, Write};

use crate::scene::{AgentState, Frame, HdMap, Point2, Pose2};
use crate::{Error, Result};

/// Square BEV grid geometry. Default: 180x180 cells over +/-50 m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub height_cells: usize,
    pub width_cells: usize,
    /// Half-range per axis, meters.
    pub extent_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            height_cells: 180,
            width_cells: 180,
            extent_m: 50.0,
        }
    }
}

impl GridSpec {
    pub fn new(cells: usize, extent_m: f64) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidParameter("grid needs at least 1 cell".into()));
        }
        if !(extent_m.is_finite() && extent_m > 0.0) {
            return Err(Error::InvalidParameter("grid extent must be > 0".into()));
        }
        Ok(Self {
            height_cells: cells,
            width_cells: cells,
            extent_m,
        })
    }

    /// Meters per cell.
    pub fn cell_size(&self) -> f64 {
        2.0 * self.extent_m / self.width_cells as f64
    }

    /// Map an ego-frame point to its (row, col) cell, or `None` outside the
    /// half-open square `[-extent, extent)^2`.
    pub fn point_to_cell(&self, p: Point2) -> Option<(usize, usize)> {
        let e = self.extent_m;
        if !(p[0] >= -e && p[0] < e && p[1] >= -e && p[1] < e) {
            return None;
        }
        let cs = self.cell_size();
        let col = (((p[0] + e) / cs) as usize).min(self.width_cells - 1);
        let row = (((e - p[1]) / cs) as usize).min(self.height_cells - 1);
        Some((row, col))
    }

    /// Ego-frame center of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        let cs = self.cell_size();
        [
            -self.extent_m + (col as f64 + 0.5) * cs,
            self.extent_m - (row as f64 + 0.5) * cs,
        ]
    }
}

/// The standard grid: 180x180 cells over +/-50 m.
pub fn default_grid() -> GridSpec {
    GridSpec::default()
}

/// C-channel scalar tensor over a BEV grid, channel-major, row-major within a
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    values: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.values[(c * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f32) {
        self.values[(c * self.height + row) * self.width + col] = v;
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }
}

/// Boolean occupancy over a BEV grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMap {
    pub height: usize,
    pub width: usize,
    bits: Vec<bool>,
}

impl OccupancyMap {
    pub fn empty(spec: &GridSpec) -> Self {
        Self {
            height: spec.height_cells,
            width: spec.width_cells,
            bits: vec![false; spec.height_cells * spec.width_cells],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize) {
        self.bits[row * self.width + col] = true;
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|b| *b)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True iff any cell is set in both maps.
    pub fn intersects(&self, other: &OccupancyMap) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .any(|(a, b)| *a && *b)
    }
}

/// True iff `p` lies inside (boundary inclusive) the oriented rectangle with
/// the given center, heading, length (along heading) and width (across).
pub fn oriented_rect_contains(
    center: Point2,
    heading: f64,
    length: f64,
    width: f64,
    p: Point2,
) -> bool {
    let dx = p[0] - center[0];
    let dy = p[1] - center[1];
    let (s, c) = heading.sin_cos();
    let lx = c * dx + s * dy;
    let ly = -s * dx + c * dy;
    lx.abs() <= length / 2.0 && ly.abs() <= width / 2.0
}

/// Set every cell whose center lies inside the oriented rectangle
/// (ego-frame center/heading).
pub fn stamp_oriented_rect(
    occ: &mut OccupancyMap,
    spec: &GridSpec,
    center: Point2,
    heading: f64,
    length: f64,
    width: f64,
) {
    let half_diag = (length / 2.0).hypot(width / 2.0);
    let cs = spec.cell_size();
    let e = spec.extent_m;
    let col_lo = (((center[0] - half_diag + e) / cs).floor().max(0.0)) as usize;
    let col_hi = ((((center[0] + half_diag + e) / cs).floor()) as isize)
        .min(spec.width_cells as isize - 1);
    let row_lo = (((e - (center[1] + half_diag)) / cs).floor().max(0.0)) as usize;
    let row_hi =
        ((((e - (center[1] - half_diag)) / cs).floor()) as isize).min(spec.height_cells as isize - 1);
    if col_hi < 0 || row_hi < 0 {
        return;
    }
    for row in row_lo..=row_hi as usize {
        for col in col_lo..=col_hi as usize {
            if oriented_rect_contains(center, heading, length, width, spec.cell_center(row, col)) {
                occ.set(row, col);
            }
        }
    }
}

/// Rasterize agent bounding boxes into ego-frame occupancy: a cell is set iff
/// its center lies inside some agent's oriented rectangle.
pub fn rasterize_agents(spec: &GridSpec, ego: &Pose2, agents: &[AgentState]) -> OccupancyMap {
    let mut occ = OccupancyMap::empty(spec);
    for a in agents {
        let center = ego.world_to_ego(a.pose.position());
        let heading = a.pose.yaw - ego.yaw;
        stamp_oriented_rect(&mut occ, spec, center, heading, a.length, a.width);
    }
    occ
}

/// Per-channel signature separation between scene classes (meters of feature
/// space, see [`class_signature`]).
pub const SIGNATURE_SEPARATION: f64 = 0.5;

/// Noise amplitude of the synthetic generator: 10% of the signature
/// separation.
pub const NOISE_AMPLITUDE: f64 = 0.05;

/// Half-width of the drivable corridor painted around centerlines, meters.
pub const CORRIDOR_HALF_WIDTH_M: f64 = 2.0;

/// Scene class of a cell, as encoded by the synthetic feature generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Background,
    Corridor,
    Agent,
}

/// Per-channel signature value of a scene class. Any two classes differ by at
/// least [`SIGNATURE_SEPARATION`] in every channel.
pub fn class_signature(class: CellClass, channel: usize) -> f64 {
    match class {
        CellClass::Background => 0.0,
        CellClass::Corridor => {
            if channel % 2 == 0 {
                1.0
            } else {
                0.5
            }
        }
        CellClass::Agent => {
            if channel % 2 == 0 {
                0.5
            } else {
                1.0
            }
        }
    }
}

/// splitmix64 step; the PRNG behind the synthetic noise. Constants are the
/// standard splitmix64 constants, fixed so outputs are bit-reproducible
/// across platforms.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Uniform f64 in [0, 1) from one splitmix64 output.
#[inline]
fn unit_f64(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn squared_dist_point_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let apx = p[0] - a[0];
    let apy = p[1] - a[1];
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = apx - t * abx;
    let dy = apy - t * aby;
    dx * dx + dy * dy
}

/// Classify every cell of the grid for the given frame: agent-occupied cells,
/// drivable-corridor cells near centerlines, and background.
pub fn classify_cells(spec: &GridSpec, frame: &Frame, map: &HdMap) -> Vec<CellClass> {
    let mut classes = vec![CellClass::Background; spec.height_cells * spec.width_cells];

    // Corridor: cells within CORRIDOR_HALF_WIDTH_M of a centerline segment.
    let cs = spec.cell_size();
    let e = spec.extent_m;
    let halo = CORRIDOR_HALF_WIDTH_M;
    for pl in map.centerlines() {
        let pts: Vec<Point2> = pl
            .points
            .iter()
            .map(|p| frame.ego.world_to_ego(*p))
            .collect();
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let min_x = a[0].min(b[0]) - halo;
            let max_x = a[0].max(b[0]) + halo;
            let min_y = a[1].min(b[1]) - halo;
            let max_y = a[1].max(b[1]) + halo;
            let col_lo = (((min_x + e) / cs).floor().max(0.0)) as usize;
            let col_hi = (((max_x + e) / cs).floor() as isize).min(spec.width_cells as isize - 1);
            let row_lo = (((e - max_y) / cs).floor().max(0.0)) as usize;
            let row_hi = (((e - min_y) / cs).floor() as isize).min(spec.height_cells as isize - 1);
            if col_hi < 0 || row_hi < 0 || min_x >= e || min_y >= e {
                continue;
            }
            for row in row_lo..=row_hi as usize {
                for col in col_lo..=col_hi as usize {
                    if squared_dist_point_segment(spec.cell_center(row, col), a, b) <= halo * halo
                    {
                        classes[row * spec.width_cells + col] = CellClass::Corridor;
                    }
                }
            }
        }
    }

    // Agents overwrite corridor.
    let occ = rasterize_agents(spec, &frame.ego, &frame.agents);
    for row in 0..spec.height_cells {
        for col in 0..spec.width_cells {
            if occ.get(row, col) {
                classes[row * spec.width_cells + col] = CellClass::Agent;
            }
        }
    }
    classes
}

/// Deterministic synthetic BEV feature map: per-class channel signatures plus
/// seeded uniform noise in [-NOISE_AMPLITUDE, NOISE_AMPLITUDE]. Stand-in for
/// a learned feature extractor; bit-identical given the same inputs and seed.
pub fn synth_feature_map(
    spec: &GridSpec,
    frame: &Frame,
    map: &HdMap,
    channels: usize,
    seed: u64,
) -> Result<FeatureMap> {
    if channels == 0 {
        return Err(Error::InvalidParameter(
            "feature map needs at least 1 channel".into(),
        ));
    }
    let classes = classify_cells(spec, frame, map);
    let mut fm = FeatureMap::zeros(channels, spec.height_cells, spec.width_cells);
    let mut state = seed;
    for c in 0..channels {
        for row in 0..spec.height_cells {
            for col in 0..spec.width_cells {
                let sig = class_signature(classes[row * spec.width_cells + col], c);
                let u = unit_f64(splitmix64(&mut state));
                let noise = (2.0 * u - 1.0) * NOISE_AMPLITUDE;
                fm.set(c, row, col, (sig + noise) as f32);
            }
        }
    }
    Ok(fm)
}

const BFT_MAGIC: &[u8; 4] = b"BFT1";

/// Write a feature map in the `.bft` binary format: magic "BFT1", u32 LE
/// C/H/W, then C*H*W f32 LE values channel-major.
pub fn write_bft<W: Write>(fm: &FeatureMap, mut w: W) -> Result<()> {
    w.write_all(BFT_MAGIC)?;
    w.write_all(&(fm.channels as u32).to_le_bytes())?;
    w.write_all(&(fm.height as u32).to_le_bytes())?;
    w.write_all(&(fm.width as u32).to_le_bytes())?;
    for v in fm.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a `.bft` feature tensor, rejecting wrong magic and truncation.
pub fn read_bft<R: Read>(mut r: R) -> Result<FeatureMap> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::BadFeatureFile("truncated header".into()))?;
    if &magic != BFT_MAGIC {
        return Err(Error::BadFeatureFile("wrong magic".into()));
    }
    let mut dims = [0u32; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| Error::BadFeatureFile("truncated header".into()))?;
        *d = u32::from_le_bytes(b);
    }
    let (c, h, w) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let n = c
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| Error::BadFeatureFile("dimension overflow".into()))?;
    let mut fm = FeatureMap::zeros(c, h, w);
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::BadFeatureFile("truncated payload".into()))?;
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        fm.values[i] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    Ok(fm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_geometry() {
        let g = default_grid();
        assert_eq!(g.height_cells, 180);
        assert_eq!(g.width_cells, 180);
        assert_eq!(g.extent_m, 50.0);
        assert!((g.cell_size() - 100.0 / 180.0).abs() < 1e-12);
    }

    #[test]
    fn custom_grid_cell_size() {
        let g = GridSpec::new(4, 1.0).unwrap();
        assert_eq!(g.cell_size(), 0.5);
    }

    #[test]
    fn point_to_cell_examples() {
        let g = default_grid();
        assert_eq!(g.point_to_cell([0.0, 0.0]), Some((90, 90)));
        let (_, col) = g.point_to_cell([49.99, 0.0]).unwrap();
        assert_eq!(col, 179);
        assert_eq!(g.point_to_cell([50.0, 0.0]), None);
    }

    #[test]
    fn cell_center_roundtrip_exhaustive() {
        let g = default_grid();
        for row in 0..g.height_cells {
            for col in 0..g.width_cells {
                let c = g.cell_center(row, col);
                assert_eq!(g.point_to_cell(c), Some((row, col)), "row={row} col={col}");
            }
        }
    }

    fn agent(x: f64, y: f64, yaw: f64, length: f64, width: f64) -> AgentState {
        AgentState {
            id: "a".into(),
            pose: Pose2::new(x, y, yaw),
            length,
            width,
            speed: 0.0,
        }
    }

    #[test]
    fn rasterize_no_agents() {
        let g = default_grid();
        let occ = rasterize_agents(&g, &Pose2::new(0.0, 0.0, 0.0), &[]);
        assert!(!occ.any());
    }

    #[test]
    fn rasterize_unit_square_agent() {
        let g = default_grid();
        let occ = rasterize_agents(
            &g,
            &Pose2::new(0.0, 0.0, 0.0),
            &[agent(0.0, 0.0, 0.0, 1.0, 1.0)],
        );
        // Independent enumeration: cells whose centers fall in [-0.5, 0.5]^2.
        let mut expected = 0usize;
        for row in 0..g.height_cells {
            for col in 0..g.width_cells {
                let c = g.cell_center(row, col);
                let inside = c[0].abs() <= 0.5 && c[1].abs() <= 0.5;
                assert_eq!(occ.get(row, col), inside, "row={row} col={col}");
                if inside {
                    expected += 1;
                }
            }
        }
        assert_eq!(occ.count(), expected);
        assert!(occ.get(90, 90) || occ.get(89, 89));
    }

    #[test]
    fn rasterize_agent_outside_extent() {
        let g = default_grid();
        let occ = rasterize_agents(
            &g,
            &Pose2::new(0.0, 0.0, 0.0),
            &[agent(200.0, 0.0, 0.0, 4.0, 2.0)],
        );
        assert!(!occ.any());
    }

    #[test]
    fn rasterize_rigid_invariance() {
        let g = default_grid();
        let ego = Pose2::new(3.0, -2.0, 0.4);
        let agents = vec![agent(8.0, 1.0, 0.9, 4.2, 1.8), agent(-5.0, -6.0, -1.2, 3.0, 2.0)];
        let occ1 = rasterize_agents(&g, &ego, &agents);

        let t = Pose2::new(120.0, -55.0, 2.1);
        let ego2 = ego.transformed_by(&t);
        let agents2: Vec<AgentState> = agents
            .iter()
            .map(|a| AgentState {
                pose: a.pose.transformed_by(&t),
                ..a.clone()
            })
            .collect();
        let occ2 = rasterize_agents(&g, &ego2, &agents2);
        assert_eq!(occ1, occ2);
    }

    #[test]
    fn synth_is_deterministic() {
        let g = GridSpec::new(32, 10.0).unwrap();
        let f = Frame {
            t: 0.0,
            ego: Pose2::new(0.0, 0.0, 0.0),
            ego_speed: 5.0,
            agents: vec![agent(4.0, 0.0, 0.0, 4.0, 2.0)],
        };
        let m = HdMap::empty();
        let a = synth_feature_map(&g, &f, &m, 8, 7).unwrap();
        let b = synth_feature_map(&g, &f, &m, 8, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_feature_map(&g, &f, &m, 8, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_empty_scene_variance_bounded() {
        let g = GridSpec::new(32, 10.0).unwrap();
        let f = Frame {
            t: 0.0,
            ego: Pose2::new(0.0, 0.0, 0.0),
            ego_speed: 0.0,
            agents: vec![],
        };
        let fm = synth_feature_map(&g, &f, &HdMap::empty(), 4, 1).unwrap();
        let n = fm.cells() as f64;
        for c in 0..fm.channels {
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for row in 0..fm.height {
                for col in 0..fm.width {
                    let v = fm.get(c, row, col) as f64;
                    sum += v;
                    sum2 += v * v;
                }
            }
            let mean = sum / n;
            let var = sum2 / n - mean * mean;
            assert!(var <= NOISE_AMPLITUDE * NOISE_AMPLITUDE, "c={c} var={var}");
        }
    }

    #[test]
    fn synth_agent_margin() {
        let g = GridSpec::new(64, 20.0).unwrap();
        let f = Frame {
            t: 0.0,
            ego: Pose2::new(0.0, 0.0, 0.0),
            ego_speed: 0.0,
            agents: vec![agent(5.0, 0.0, 0.0, 4.0, 2.0)],
        };
        let fm = synth_feature_map(&g, &f, &HdMap::empty(), 8, 3).unwrap();
        let classes = classify_cells(&g, &f, &HdMap::empty());
        let (ar, ac) = g.point_to_cell([5.0, 0.0]).unwrap();
        let (br, bc) = g.point_to_cell([-10.0, -10.0]).unwrap();
        assert_eq!(classes[ar * g.width_cells + ac], CellClass::Agent);
        assert_eq!(classes[br * g.width_cells + bc], CellClass::Background);
        let margin = SIGNATURE_SEPARATION - 2.0 * NOISE_AMPLITUDE;
        let mut max_diff: f64 = 0.0;
        for c in 0..8 {
            let d = (fm.get(c, ar, ac) - fm.get(c, br, bc)).abs() as f64;
            max_diff = max_diff.max(d);
        }
        assert!(max_diff >= margin, "max_diff={max_diff}");
    }

    #[test]
    fn bft_roundtrip() {
        let g = GridSpec::new(8, 4.0).unwrap();
        let f = Frame {
            t: 0.0,
            ego: Pose2::new(0.0, 0.0, 0.0),
            ego_speed: 0.0,
            agents: vec![agent(1.0, 1.0, 0.3, 2.0, 1.0)],
        };
        let fm = synth_feature_map(&g, &f, &HdMap::empty(), 3, 42).unwrap();
        let mut buf = Vec::new();
        write_bft(&fm, &mut buf).unwrap();
        let back = read_bft(buf.as_slice()).unwrap();
        assert_eq!(back, fm);
    }

    #[test]
    fn bft_rejects_bad_input() {
        assert!(matches!(
            read_bft(&b"XXXX"[..]),
            Err(Error::BadFeatureFile(_))
        ));
        let fm = FeatureMap::zeros(1, 2, 2);
        let mut buf = Vec::new();
        write_bft(&fm, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_bft(buf.as_slice()),
            Err(Error::BadFeatureFile(_))
        ));
    }
}
