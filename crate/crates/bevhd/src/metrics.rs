//! Open-loop evaluation: per-step L2, the ST-P3 and UniAD horizon standards,
//! grid-based collision rate, and the aggregated report.
//!
//! ST-P3 (`l2_avg`): mean of per-step errors over every 0.5 s step up to the
//! horizon. UniAD (`l2_max`): the error at exactly the horizon step.
//! Collision aggregation mirrors the ST-P3 structure: per-step collision
//! fractions averaged over the steps up to the horizon.

use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::codec::{decode, encode, TokenVocab};
use crate::grid::{rasterize_agents, stamp_oriented_rect, GridSpec, OccupancyMap};
use crate::overlay::{compose_bev_hd, render_agent_boxes, RenderStyle};
use crate::planner::{PlanContext, PlanOutput, Planner};
use crate::scene::{ground_truth_trajectory, Scenario, Trajectory, HORIZON_STEPS};
use crate::viz::visualize;
use crate::{Error, Result};

/// Euclidean error at each 0.5 s step (0.5 s ... 3.0 s for the default
/// horizon).
pub type StepErrors = Vec<f64>;

/// Reporting horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    OneS,
    TwoS,
    ThreeS,
}

impl Horizon {
    pub const ALL: [Horizon; 3] = [Horizon::OneS, Horizon::TwoS, Horizon::ThreeS];

    /// Number of 0.5 s steps up to and including this horizon.
    pub fn steps(self) -> usize {
        match self {
            Horizon::OneS => 2,
            Horizon::TwoS => 4,
            Horizon::ThreeS => 6,
        }
    }
}

/// Ego footprint used for collision checking. Default 4.08 x 1.73 m.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoBoxSpec {
    pub length: f64,
    pub width: f64,
}

impl Default for EgoBoxSpec {
    fn default() -> Self {
        Self {
            length: 4.08,
            width: 1.73,
        }
    }
}

/// Per-step Euclidean distance between prediction and ground truth.
pub fn l2_per_step(pred: &Trajectory, gt: &Trajectory) -> Result<StepErrors> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    Ok(pred
        .waypoints
        .iter()
        .zip(&gt.waypoints)
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .collect())
}

/// ST-P3 standard: mean error over all steps up to the horizon.
pub fn l2_stp3(e: &[f64], horizon: Horizon) -> f64 {
    let n = horizon.steps();
    e[..n].iter().sum::<f64>() / n as f64
}

/// UniAD standard: error at exactly the horizon step.
pub fn l2_uniad(e: &[f64], horizon: Horizon) -> f64 {
    e[horizon.steps() - 1]
}

/// Reconstruct per-waypoint headings by finite differences: waypoint k's
/// heading points from waypoint k-1 (the origin for k = 0) to waypoint k.
/// Zero-length steps inherit the previous heading (initially 0).
pub fn predicted_headings(waypoints: &[crate::scene::Point2]) -> Vec<f64> {
    let mut headings = Vec::with_capacity(waypoints.len());
    let mut prev = [0.0, 0.0];
    let mut heading = 0.0;
    for w in waypoints {
        let dx = w[0] - prev[0];
        let dy = w[1] - prev[1];
        if dx.hypot(dy) > 1e-12 {
            heading = dy.atan2(dx);
        }
        headings.push(heading);
        prev = *w;
    }
    headings
}

/// True iff the ego box, placed at predicted waypoint `k` with the
/// finite-difference heading, overlaps the given ground-truth agent
/// occupancy on the grid.
pub fn collision_at_step(
    spec: &GridSpec,
    ego_box: &EgoBoxSpec,
    pred: &Trajectory,
    k: usize,
    agents_occ: &OccupancyMap,
) -> bool {
    let headings = predicted_headings(&pred.waypoints);
    let mut ego_occ = OccupancyMap::empty(spec);
    stamp_oriented_rect(
        &mut ego_occ,
        spec,
        pred.waypoints[k],
        headings[k],
        ego_box.length,
        ego_box.width,
    );
    ego_occ.intersects(agents_occ)
}

/// Per-step collision rate aggregated at a horizon: for each step the
/// fraction of samples colliding at that step, averaged over the steps up to
/// the horizon.
pub fn collision_rate(per_sample_collisions: &[Vec<bool>], horizon: Horizon) -> f64 {
    if per_sample_collisions.is_empty() {
        return 0.0;
    }
    let n_samples = per_sample_collisions.len() as f64;
    let steps = horizon.steps();
    let mut sum = 0.0;
    for t in 0..steps {
        let hits = per_sample_collisions.iter().filter(|c| c[t]).count();
        sum += hits as f64 / n_samples;
    }
    sum / steps as f64
}

/// What to do when the planner errors on a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailurePolicy {
    Abort,
    RecordAndSkip,
}

/// Evaluation harness configuration.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub grid: GridSpec,
    pub vocab: TokenVocab,
    pub style: RenderStyle,
    pub ego_box: EgoBoxSpec,
    pub horizon_steps: usize,
    pub channels: usize,
    pub seed: u64,
    /// Force baseline waypoint outputs through encode/decode.
    pub route_through_codec: bool,
    /// Render agent bounding boxes onto the BEV-HD image.
    pub render_boxes: bool,
    pub failure_policy: FailurePolicy,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            vocab: TokenVocab::default(),
            style: RenderStyle::default(),
            ego_box: EgoBoxSpec::default(),
            horizon_steps: HORIZON_STEPS,
            channels: 8,
            seed: 0,
            route_through_codec: false,
            render_boxes: false,
            failure_policy: FailurePolicy::Abort,
            workers: 1,
        }
    }
}

/// Metrics of one reporting horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonMetrics {
    pub l2_avg: f64,
    pub l2_max: f64,
    pub collision_rate: f64,
}

/// The aggregated evaluation report (Table-1-shaped).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub planner: String,
    pub samples: usize,
    pub skipped: usize,
    pub clamped: usize,
    pub mean_latency_s: f64,
    pub h1s: HorizonMetrics,
    pub h2s: HorizonMetrics,
    pub h3s: HorizonMetrics,
    /// Arithmetic mean of the three horizon entries.
    pub avg: HorizonMetrics,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Aligned text table with 1s/2s/3s/Avg. columns for L2_avg, L2_max, and
    /// collision %.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "planner: {}   samples: {}   skipped: {}   clamped: {}   mean latency: {:.6} s\n",
            self.planner, self.samples, self.skipped, self.clamped, self.mean_latency_s
        ));
        out.push_str(&format!(
            "{:<18} {:>10} {:>10} {:>10} {:>10}\n",
            "metric", "1s", "2s", "3s", "Avg."
        ));
        let row = |name: &str, f: &dyn Fn(&HorizonMetrics) -> f64, scale: f64| {
            format!(
                "{:<18} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                name,
                f(&self.h1s) * scale,
                f(&self.h2s) * scale,
                f(&self.h3s) * scale,
                f(&self.avg) * scale,
            )
        };
        out.push_str(&row("L2_avg (m)", &|h| h.l2_avg, 1.0));
        out.push_str(&row("L2_max (m)", &|h| h.l2_max, 1.0));
        out.push_str(&row("Collision (%)", &|h| h.collision_rate, 100.0));
        out
    }
}

/// One evaluated sample, as written to the per-sample CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub scenario: String,
    pub frame: usize,
    pub errors: StepErrors,
    pub collisions: Vec<bool>,
    pub latency_s: f64,
    pub clamped: bool,
}

/// CSV header matching [`SampleRecord::to_csv_row`].
pub fn csv_header(horizon_steps: usize) -> String {
    let mut cols = vec!["scenario".to_string(), "frame".to_string()];
    cols.extend((1..=horizon_steps).map(|k| format!("e{k}")));
    cols.extend((1..=horizon_steps).map(|k| format!("collision{k}")));
    cols.push("latency_s".into());
    cols.push("clamped".into());
    cols.join(",")
}

impl SampleRecord {
    pub fn to_csv_row(&self) -> String {
        let mut cols = vec![self.scenario.clone(), self.frame.to_string()];
        cols.extend(self.errors.iter().map(|e| e.to_string()));
        cols.extend(self.collisions.iter().map(|c| (*c as u8).to_string()));
        cols.push(self.latency_s.to_string());
        cols.push((self.clamped as u8).to_string());
        cols.join(",")
    }
}

struct SampleOutcome {
    record: Option<SampleRecord>, // None: planner failed, sample skipped
}

fn evaluate_sample(
    planner: &dyn Planner,
    scenario: &Scenario,
    frame_index: usize,
    cfg: &EvalConfig,
) -> Result<SampleRecord> {
    let frame = &scenario.frames[frame_index];
    let fm = crate::grid::synth_feature_map(
        &cfg.grid,
        frame,
        &scenario.map,
        cfg.channels,
        cfg.seed,
    )?;
    let bev = visualize(&fm)?;
    let mut image = compose_bev_hd(&bev, &scenario.map, &frame.ego, &cfg.grid, &cfg.style);
    if cfg.render_boxes {
        image = render_agent_boxes(&image, &frame.ego, &frame.agents, &cfg.grid, &cfg.style);
    }

    let ctx = PlanContext {
        scenario,
        frame_index,
        image: &image,
        grid: &cfg.grid,
        vocab: &cfg.vocab,
        horizon_steps: cfg.horizon_steps,
    };
    let start = Instant::now();
    let output = planner.plan(&ctx)?;
    let latency_s = start.elapsed().as_secs_f64();

    let (pred, clamped) = match output {
        PlanOutput::Tokens(tokens) => (decode(&tokens, &cfg.vocab)?, tokens.clamped),
        PlanOutput::Waypoints(traj) => {
            if cfg.route_through_codec {
                let tokens = encode(&traj, &cfg.vocab);
                (decode(&tokens, &cfg.vocab)?, tokens.clamped)
            } else {
                (traj, false)
            }
        }
    };

    let gt = ground_truth_trajectory(scenario, frame_index, cfg.horizon_steps)?;
    let errors = l2_per_step(&pred, &gt)?;
    let collisions = (0..cfg.horizon_steps)
        .map(|k| {
            let future = &scenario.frames[frame_index + k + 1];
            let occ = rasterize_agents(&cfg.grid, &frame.ego, &future.agents);
            collision_at_step(&cfg.grid, &cfg.ego_box, &pred, k, &occ)
        })
        .collect();

    Ok(SampleRecord {
        scenario: scenario.name.clone(),
        frame: frame_index,
        errors,
        collisions,
        latency_s,
        clamped,
    })
}

/// Run the full open-loop evaluation: for every eligible frame build the
/// BEV-HD image, invoke the planner, score L2 under both standards and
/// per-step collisions, and aggregate.
///
/// Samples are scored independently (optionally across `cfg.workers`
/// threads); aggregation always runs in scenario/frame order, so reports are
/// deterministic regardless of worker count.
pub fn evaluate(
    planner: &dyn Planner,
    scenarios: &[Scenario],
    cfg: &EvalConfig,
) -> Result<(MetricsReport, Vec<SampleRecord>)> {
    let mut samples: Vec<(usize, usize)> = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        if s.frames.len() > cfg.horizon_steps {
            for fi in 0..s.frames.len() - cfg.horizon_steps {
                samples.push((si, fi));
            }
        }
    }

    let outcomes: Mutex<Vec<Option<Result<SampleOutcome>>>> =
        Mutex::new((0..samples.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = cfg.workers.max(1).min(samples.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= samples.len() {
                    break;
                }
                let (si, fi) = samples[i];
                let result = match evaluate_sample(planner, &scenarios[si], fi, cfg) {
                    Ok(record) => Ok(SampleOutcome {
                        record: Some(record),
                    }),
                    Err(e) => match cfg.failure_policy {
                        FailurePolicy::Abort => Err(e),
                        FailurePolicy::RecordAndSkip => Ok(SampleOutcome { record: None }),
                    },
                };
                outcomes.lock().expect("no poisoned worker")[i] = Some(result);
            });
        }
    });

    let outcomes = outcomes.into_inner().expect("workers joined");
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for outcome in outcomes {
        match outcome.expect("every sample visited") {
            Ok(SampleOutcome {
                record: Some(record),
            }) => records.push(record),
            Ok(SampleOutcome { record: None }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }

    Ok((aggregate(planner.name(), &records, skipped), records))
}

/// Aggregate per-sample records into the report (fixed reduction order).
pub fn aggregate(planner: &str, records: &[SampleRecord], skipped: usize) -> MetricsReport {
    let n = records.len();
    let mean = |f: &dyn Fn(&SampleRecord) -> f64| -> f64 {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let collisions: Vec<Vec<bool>> = records.iter().map(|r| r.collisions.clone()).collect();
    let horizon = |h: Horizon| -> HorizonMetrics {
        HorizonMetrics {
            l2_avg: mean(&|r| l2_stp3(&r.errors, h)),
            l2_max: mean(&|r| l2_uniad(&r.errors, h)),
            collision_rate: collision_rate(&collisions, h),
        }
    };
    let h1s = horizon(Horizon::OneS);
    let h2s = horizon(Horizon::TwoS);
    let h3s = horizon(Horizon::ThreeS);
    let avg = HorizonMetrics {
        l2_avg: (h1s.l2_avg + h2s.l2_avg + h3s.l2_avg) / 3.0,
        l2_max: (h1s.l2_max + h2s.l2_max + h3s.l2_max) / 3.0,
        collision_rate: (h1s.collision_rate + h2s.collision_rate + h3s.collision_rate) / 3.0,
    };
    MetricsReport {
        planner: planner.to_string(),
        samples: n,
        skipped,
        clamped: records.iter().filter(|r| r.clamped).count(),
        mean_latency_s: mean(&|r| r.latency_s),
        h1s,
        h2s,
        h3s,
        avg,
    }
}
