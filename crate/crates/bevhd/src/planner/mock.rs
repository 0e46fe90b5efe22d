//! Mock planning server: serves the wire protocol with deterministic
//! policies, for tests and end-to-end harness runs without a real model.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use tiny_http::{Header, Response, Server};

use super::{plan_constant_velocity, WireRequest, WireResponse, WIRE_VERSION};
use crate::codec::{encode, TokenVocab};
use crate::scene::{ground_truth_trajectory, Frame, Scenario};
use crate::{Error, Result};

/// Deterministic answer policy of the mock server.
#[derive(Debug, Clone)]
pub enum MockPolicy {
    /// Answer every request with the same token list.
    FixedTokens(Vec<u32>),
    /// Encode the ground truth of the frame named in the request metadata,
    /// looked up in a sidecar scenario set.
    EchoOracle(Vec<Scenario>),
    /// Constant-velocity rollout from the ego speed in the request metadata,
    /// encoded with the request's vocabulary.
    ConstantVelocity,
}

impl MockPolicy {
    fn answer(&self, req: &WireRequest) -> std::result::Result<WireResponse, String> {
        let tokens = match self {
            MockPolicy::FixedTokens(tokens) => tokens.clone(),
            MockPolicy::EchoOracle(scenarios) => {
                let meta = req
                    .meta
                    .as_ref()
                    .ok_or("echo-oracle policy requires request meta")?;
                let scenario = scenarios
                    .iter()
                    .find(|s| s.name == meta.scenario)
                    .ok_or_else(|| format!("unknown scenario '{}'", meta.scenario))?;
                let gt = ground_truth_trajectory(scenario, meta.frame, req.horizon_steps)
                    .map_err(|e| e.to_string())?;
                encode_with(&gt, &req.vocab)?
            }
            MockPolicy::ConstantVelocity => {
                let meta = req
                    .meta
                    .as_ref()
                    .ok_or("constant-velocity policy requires request meta")?;
                let frame = Frame {
                    t: 0.0,
                    ego: crate::scene::Pose2::new(0.0, 0.0, 0.0),
                    ego_speed: meta.ego_speed,
                    agents: Vec::new(),
                };
                let traj = plan_constant_velocity(&frame, req.horizon_steps);
                encode_with(&traj, &req.vocab)?
            }
        };
        Ok(WireResponse {
            version: WIRE_VERSION,
            tokens: Some(tokens),
            waypoints: None,
            metadata: Some("mock".into()),
        })
    }
}

fn encode_with(
    traj: &crate::scene::Trajectory,
    vocab: &TokenVocab,
) -> std::result::Result<Vec<u32>, String> {
    let vocab = TokenVocab::new(vocab.bins_per_axis, vocab.range_m).map_err(|e| e.to_string())?;
    Ok(encode(traj, &vocab).tokens)
}

/// Handle to a running mock server; shuts down on [`stop`](Self::stop) or
/// drop.
pub struct MockServerHandle {
    addr: std::net::SocketAddr,
    stop_flag: Arc<AtomicBool>,
    workers: Vec<std::thread::JoinHandle<()>>,
}

impl MockServerHandle {
    pub fn addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/v1/plan", self.addr)
    }

    pub fn stop(&mut self) {
        self.stop_flag.store(true, Ordering::SeqCst);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for MockServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header is valid")
}

fn error_body(msg: &str) -> String {
    serde_json::to_string(&super::WireError { error: msg.into() })
        .expect("error serialization")
}

fn handle(req: tiny_http::Request, policy: &MockPolicy) {
    use std::io::Read as _;
    let respond_error = |req: tiny_http::Request, code: u16, msg: &str| {
        let resp = Response::from_string(error_body(msg))
            .with_status_code(code)
            .with_header(json_header());
        let _ = req.respond(resp);
    };

    if req.method() != &tiny_http::Method::Post || req.url() != "/v1/plan" {
        respond_error(req, 404, "unknown endpoint; use POST /v1/plan");
        return;
    }
    let mut body = String::new();
    let mut req = req;
    if req.as_reader().read_to_string(&mut body).is_err() {
        respond_error(req, 400, "unreadable body");
        return;
    }
    let wire: WireRequest = match serde_json::from_str(&body) {
        Ok(w) => w,
        Err(e) => {
            respond_error(req, 400, &format!("malformed request: {e}"));
            return;
        }
    };
    if wire.version != WIRE_VERSION {
        respond_error(req, 400, &format!("unsupported version {}", wire.version));
        return;
    }
    match policy.answer(&wire) {
        Ok(resp) => {
            let body = serde_json::to_string(&resp).expect("response serialization");
            let _ = req.respond(Response::from_string(body).with_header(json_header()));
        }
        Err(msg) => respond_error(req, 400, &msg),
    }
}

/// Start a mock server on `bind` (use port 0 for an ephemeral port).
/// Requests are handled concurrently by a small worker pool; policies are
/// stateless per request.
pub fn serve_mock(policy: MockPolicy, bind: &str) -> Result<MockServerHandle> {
    let server = Server::http(bind).map_err(|e| Error::Bind {
        addr: bind.to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let addr = match server.server_addr() {
        tiny_http::ListenAddr::IP(a) => a,
        other => {
            return Err(Error::Bind {
                addr: bind.to_string(),
                source: std::io::Error::other(format!("unexpected listen addr {other:?}")),
            })
        }
    };
    let server = Arc::new(server);
    let policy = Arc::new(policy);
    let stop_flag = Arc::new(AtomicBool::new(false));
    let workers = (0..4)
        .map(|_| {
            let server = Arc::clone(&server);
            let policy = Arc::clone(&policy);
            let stop = Arc::clone(&stop_flag);
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(req)) => handle(req, &policy),
                        Ok(None) => {}
                        Err(_) => break,
                    }
                }
            })
        })
        .collect();
    Ok(MockServerHandle {
        addr,
        stop_flag,
        workers,
    })
}
