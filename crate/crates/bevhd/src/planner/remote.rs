//! HTTP client for the remote planner wire protocol.

use std::time::Duration;

use base64::Engine;

use super::{
    build_prompt, PlanContext, PlanOutput, Planner, WireMeta, WireRequest, WireResponse,
    WIRE_VERSION,
};
use crate::codec::{TokenVocab, WaypointTokens};
use crate::scene::Trajectory;
use crate::{Error, Result};

/// Remote planner speaking `POST /v1/plan`. Transport failures are retried
/// with exponential backoff; response shape and token validity are checked
/// before anything reaches the harness.
pub struct RemotePlanner {
    endpoint: String,
    retries: u32,
    /// Attach scene metadata to requests (needed by stateful mock policies).
    send_meta: bool,
    agent: ureq::Agent,
}

impl RemotePlanner {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        Self {
            endpoint: endpoint.into(),
            retries,
            send_meta: true,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn with_meta(mut self, send_meta: bool) -> Self {
        self.send_meta = send_meta;
        self
    }

    fn build_request(&self, ctx: &PlanContext<'_>) -> WireRequest {
        WireRequest {
            version: WIRE_VERSION,
            image_ppm_base64: base64::engine::general_purpose::STANDARD
                .encode(ctx.image.to_ppm()),
            prompt: build_prompt(ctx.horizon_steps, ctx.grid),
            horizon_steps: ctx.horizon_steps,
            vocab: *ctx.vocab,
            meta: self.send_meta.then(|| WireMeta {
                scenario: ctx.scenario.name.clone(),
                frame: ctx.frame_index,
                ego_speed: ctx.frame().ego_speed,
            }),
        }
    }

    fn post_once(&self, body: &str) -> Result<String> {
        match self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json")
            .send_string(body)
        {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| Error::Transport(e.to_string())),
            Err(ureq::Error::Status(status, resp)) => {
                let message = resp
                    .into_string()
                    .ok()
                    .and_then(|s| serde_json::from_str::<super::WireError>(&s).ok())
                    .map(|e| e.error)
                    .unwrap_or_else(|| "no error body".into());
                Err(Error::RemoteStatus { status, message })
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if is_timeout(&t) {
                    Err(Error::Timeout(msg))
                } else {
                    Err(Error::Transport(msg))
                }
            }
        }
    }

    /// POST the request, retrying transport failures with exponential
    /// backoff, then validate the response against the request.
    pub fn plan_remote(&self, req: &WireRequest) -> Result<PlanOutput> {
        let body = serde_json::to_string(req).expect("wire request serialization");
        let mut last_err = None;
        for attempt in 0..=self.retries {
            match self.post_once(&body) {
                Ok(text) => return validate_response(&text, req.horizon_steps, &req.vocab),
                Err(e @ (Error::Transport(_) | Error::Timeout(_))) => {
                    last_err = Some(e);
                    if attempt < self.retries {
                        std::thread::sleep(Duration::from_millis(100 << attempt));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    matches!(t.kind(), ureq::ErrorKind::Io)
        && t.to_string().to_lowercase().contains("timed out")
}

/// Parse and validate a wire response body: exactly one of tokens/waypoints,
/// declared horizon respected, tokens inside the vocabulary.
pub fn validate_response(
    text: &str,
    horizon_steps: usize,
    vocab: &TokenVocab,
) -> Result<PlanOutput> {
    let resp: WireResponse = serde_json::from_str(text)
        .map_err(|e| Error::MalformedResponse(format!("invalid JSON: {e}")))?;
    if resp.version != WIRE_VERSION {
        return Err(Error::MalformedResponse(format!(
            "unsupported version {}",
            resp.version
        )));
    }
    match (resp.tokens, resp.waypoints) {
        (Some(tokens), None) => {
            if tokens.len() != horizon_steps {
                return Err(Error::MalformedResponse(format!(
                    "expected {} tokens, got {}",
                    horizon_steps,
                    tokens.len()
                )));
            }
            for (index, &token) in tokens.iter().enumerate() {
                if token >= vocab.vocab_size() {
                    return Err(Error::TokenOutOfVocab {
                        token,
                        index,
                        vocab_size: vocab.vocab_size(),
                    });
                }
            }
            Ok(PlanOutput::Tokens(WaypointTokens::new(tokens)))
        }
        (None, Some(waypoints)) => {
            if waypoints.len() != horizon_steps {
                return Err(Error::MalformedResponse(format!(
                    "expected {} waypoints, got {}",
                    horizon_steps,
                    waypoints.len()
                )));
            }
            let traj = Trajectory::new(waypoints);
            if !traj.is_finite() {
                return Err(Error::MalformedResponse("non-finite waypoint".into()));
            }
            Ok(PlanOutput::Waypoints(traj))
        }
        (Some(_), Some(_)) => Err(Error::MalformedResponse(
            "both tokens and waypoints present".into(),
        )),
        (None, None) => Err(Error::MalformedResponse(
            "neither tokens nor waypoints present".into(),
        )),
    }
}

impl Planner for RemotePlanner {
    fn name(&self) -> &str {
        "remote"
    }

    fn plan(&self, ctx: &PlanContext<'_>) -> Result<PlanOutput> {
        let req = self.build_request(ctx);
        self.plan_remote(&req)
    }
}
