//! TOML configuration: optional overrides layered over module defaults,
//! validated at load. Flags beat the config file, which beats defaults; the
//! `BEVHD_CONFIG` env var supplies a config path when `--config` is absent.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use crate::codec::TokenVocab;
use crate::grid::GridSpec;
use crate::metrics::{EgoBoxSpec, FailurePolicy};
use crate::overlay::RenderStyle;
use crate::{Error, Result};

/// Planner selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Oracle,
    ConstantVelocity,
    LaneFollow,
    Remote,
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(PlannerKind::Oracle),
            "constant_velocity" => Ok(PlannerKind::ConstantVelocity),
            "lane_follow" => Ok(PlannerKind::LaneFollow),
            "remote" => Ok(PlannerKind::Remote),
            other => Err(Error::Config(format!(
                "unknown planner '{other}' (expected oracle, constant_velocity, lane_follow, or remote)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GridSection {
    cells: Option<usize>,
    extent_m: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct VocabSection {
    bins_per_axis: Option<u32>,
    range_m: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PlannerSection {
    kind: Option<PlannerKind>,
    endpoint: Option<String>,
    timeout_s: Option<f64>,
    retries: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalSection {
    ego_length: Option<f64>,
    ego_width: Option<f64>,
    failure_policy: Option<String>,
    out_dir: Option<String>,
    workers: Option<usize>,
    channels: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    grid: GridSection,
    vocab: VocabSection,
    style: Option<RenderStyle>,
    planner: PlannerSection,
    eval: EvalSection,
}

/// Fully resolved configuration (defaults + file overrides).
#[derive(Debug, Clone)]
pub struct Config {
    pub grid: GridSpec,
    pub vocab: TokenVocab,
    pub style: RenderStyle,
    pub planner_kind: PlannerKind,
    pub endpoint: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub ego_box: EgoBoxSpec,
    pub failure_policy: FailurePolicy,
    pub out_dir: Option<String>,
    pub workers: usize,
    pub channels: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            vocab: TokenVocab::default(),
            style: RenderStyle::default(),
            planner_kind: PlannerKind::Oracle,
            endpoint: None,
            timeout: Duration::from_secs(10),
            retries: 2,
            ego_box: EgoBoxSpec::default(),
            failure_policy: FailurePolicy::Abort,
            out_dir: None,
            workers: 1,
            channels: 8,
            seed: 0,
        }
    }
}

impl Config {
    /// Parse a TOML document, validating every override.
    pub fn from_toml(text: &str) -> Result<Config> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        let mut cfg = Config::default();

        let g = &file.grid;
        if g.cells.is_some() || g.extent_m.is_some() {
            cfg.grid = GridSpec::new(
                g.cells.unwrap_or(cfg.grid.width_cells),
                g.extent_m.unwrap_or(cfg.grid.extent_m),
            )?;
        }
        let v = &file.vocab;
        if v.bins_per_axis.is_some() || v.range_m.is_some() {
            cfg.vocab = TokenVocab::new(
                v.bins_per_axis.unwrap_or(cfg.vocab.bins_per_axis),
                v.range_m.unwrap_or(cfg.vocab.range_m),
            )?;
        }
        if let Some(style) = file.style {
            if style.thickness == 0 {
                return Err(Error::Config("style.thickness must be >= 1".into()));
            }
            cfg.style = style;
        }

        let p = &file.planner;
        if let Some(kind) = p.kind {
            cfg.planner_kind = kind;
        }
        cfg.endpoint = p.endpoint.clone().or(cfg.endpoint);
        if let Some(t) = p.timeout_s {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config("planner.timeout_s must be > 0".into()));
            }
            cfg.timeout = Duration::from_secs_f64(t);
        }
        if let Some(r) = p.retries {
            cfg.retries = r;
        }

        let e = &file.eval;
        if e.ego_length.is_some() || e.ego_width.is_some() {
            let ego = EgoBoxSpec {
                length: e.ego_length.unwrap_or(cfg.ego_box.length),
                width: e.ego_width.unwrap_or(cfg.ego_box.width),
            };
            if !(ego.length.is_finite() && ego.length > 0.0)
                || !(ego.width.is_finite() && ego.width > 0.0)
            {
                return Err(Error::Config("eval ego box dimensions must be > 0".into()));
            }
            cfg.ego_box = ego;
        }
        if let Some(fp) = &e.failure_policy {
            cfg.failure_policy = match fp.as_str() {
                "abort" => FailurePolicy::Abort,
                "skip" => FailurePolicy::RecordAndSkip,
                other => {
                    return Err(Error::Config(format!(
                        "unknown failure policy '{other}' (expected abort or skip)"
                    )))
                }
            };
        }
        cfg.out_dir = e.out_dir.clone().or(cfg.out_dir);
        if let Some(w) = e.workers {
            if w == 0 {
                return Err(Error::Config("eval.workers must be >= 1".into()));
            }
            cfg.workers = w;
        }
        if let Some(c) = e.channels {
            if c == 0 {
                return Err(Error::Config("eval.channels must be >= 1".into()));
            }
            cfg.channels = c;
        }
        if let Some(s) = e.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::from_toml(&text)
    }

    /// Resolve: explicit `--config` path, else `BEVHD_CONFIG`, else defaults.
    pub fn load(explicit: Option<&Path>) -> Result<Config> {
        match explicit {
            Some(p) => Config::from_file(p),
            None => match std::env::var_os("BEVHD_CONFIG") {
                Some(p) => Config::from_file(Path::new(&p)),
                None => Ok(Config::default()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_empty() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c.grid, GridSpec::default());
        assert_eq!(c.vocab, TokenVocab::default());
        assert_eq!(c.workers, 1);
        assert_eq!(c.planner_kind, PlannerKind::Oracle);
    }

    #[test]
    fn overrides_apply() {
        let c = Config::from_toml(
            r#"
[grid]
cells = 90
extent_m = 25.0

[vocab]
bins_per_axis = 200

[planner]
kind = "remote"
endpoint = "http://localhost:1234/v1/plan"
timeout_s = 0.5
retries = 0

[eval]
workers = 4
failure_policy = "skip"
"#,
        )
        .unwrap();
        assert_eq!(c.grid.width_cells, 90);
        assert_eq!(c.grid.extent_m, 25.0);
        assert_eq!(c.vocab.bins_per_axis, 200);
        assert_eq!(c.vocab.range_m, 50.0);
        assert_eq!(c.planner_kind, PlannerKind::Remote);
        assert_eq!(c.endpoint.as_deref(), Some("http://localhost:1234/v1/plan"));
        assert_eq!(c.timeout, Duration::from_millis(500));
        assert_eq!(c.workers, 4);
        assert_eq!(c.failure_policy, FailurePolicy::RecordAndSkip);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config::from_toml("[grid]\ncells = 0\n").is_err());
        assert!(Config::from_toml("[vocab]\nbins_per_axis = 1\n").is_err());
        assert!(Config::from_toml("[eval]\nworkers = 0\n").is_err());
        assert!(Config::from_toml("[planner]\ntimeout_s = -1.0\n").is_err());
        assert!(Config::from_toml("[eval]\nfailure_policy = \"explode\"\n").is_err());
        assert!(Config::from_toml("[nonsense]\nx = 1\n").is_err());
    }
}
