//! BEV-HD trajectory planning pipeline.
//!
//! Builds bird's-eye-view scene images for a pluggable trajectory planner and
//! scores the planner's output open-loop:
//!
//! - [`scene`]: ground-truth world model (poses, agents, HD map, scenarios)
//!   and frame transforms.
//! - [`grid`]: BEV grid geometry, feature tensors, agent occupancy
//!   rasterization, and a deterministic synthetic feature generator.
//! - [`viz`]: PCA reduction of feature maps to RGB images.
//! - [`overlay`]: HD-map cropping and rendering onto the BEV image, agent
//!   boxes, and trajectory overlays.
//! - [`codec`]: trajectory <-> waypoint-token conversion.
//! - [`planner`]: baseline planners, a remote JSON-over-HTTP planner client,
//!   and a mock server.
//! - [`metrics`]: per-step L2, ST-P3 / UniAD horizon metrics, grid collision
//!   rate, and the evaluation harness.
//! - [`scenario_gen`]: deterministic synthetic scenario generator.
//! - [`config`]: CLI configuration.

pub mod codec;
pub mod config;
pub mod grid;
pub mod metrics;
pub mod overlay;
pub mod planner;
pub mod scenario_gen;
pub mod scene;
pub mod viz;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("frame {frame} with {steps} future steps exceeds scenario of {frames} frames")]
    HorizonOutOfRange {
        frame: usize,
        steps: usize,
        frames: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("channel count mismatch: map has {map} channels, basis has {basis}")]
    ChannelMismatch { map: usize, basis: usize },
    #[error("trajectory length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("token {token} at index {index} out of vocabulary (size {vocab_size})")]
    TokenOutOfVocab {
        token: u32,
        index: usize,
        vocab_size: u32,
    },
    #[error("map has no centerline")]
    NoCenterline,
    #[error("bad feature file: {0}")]
    BadFeatureFile(String),
    #[error("bad image file: {0}")]
    BadImageFile(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config: {0}")]
    Config(String),
    #[error("planner '{planner}' failed: {message}")]
    PlannerFailed { planner: String, message: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("remote planner error (HTTP {status}): {message}")]
    RemoteStatus { status: u16, message: String },
    #[error("bind failed on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
