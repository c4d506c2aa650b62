//! Newline-delimited JSON session for external training clients.
//!
//! Requests, one per line:
//!
//! ```text
//! {"cmd": "reset", "episode": ["id", ...], "seed": 0}
//! {"cmd": "step", "action": [x, y, theta]}
//! {"cmd": "close"}
//! ```
//!
//! Every reset or step answers with `obs` (base64 of the 224×224 observation
//! as little-endian float32, row-major), `reward`, `terminated` and `info`
//! (`outcome`, compactness `C`, stability `S` as ±1, `termination`).
//! Malformed or out-of-order requests get `{"error": "..."}` and leave the
//! session usable.

use std::io::{BufRead, Write};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bench::ObjectLibrary;
use crate::container::{Observation, OBSERVATION_SIZE};
use crate::episode::{Action, Env, EnvConfig, StepStatus};
use crate::error::{IoContext, PackError, Result};

#[derive(Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
enum Request {
    Reset {
        episode: Vec<String>,
        #[serde(default)]
        seed: u64,
    },
    Step {
        action: [f64; 3],
    },
    Close,
}

pub struct Session {
    library: Arc<ObjectLibrary>,
    env: Env,
}

/// A response line and whether the client asked to close.
pub struct Reply {
    pub line: String,
    pub close: bool,
}

impl Session {
    pub fn new(library: Arc<ObjectLibrary>, cfg: EnvConfig) -> Result<Self> {
        let env = Env::new(EnvConfig {
            render: true,
            ..cfg
        })?;
        Ok(Self { library, env })
    }

    pub fn handle(&mut self, line: &str) -> Reply {
        let (value, close) = match serde_json::from_str::<Request>(line) {
            Err(e) => (
                error(&PackError::Protocol(format!("bad request: {e}"))),
                false,
            ),
            Ok(Request::Close) => (json!({ "closed": true }), true),
            Ok(req) => (self.dispatch(req).unwrap_or_else(|e| error(&e)), false),
        };
        Reply {
            line: value.to_string(),
            close,
        }
    }

    fn dispatch(&mut self, req: Request) -> Result<Value> {
        match req {
            Request::Reset { episode, seed } => {
                let objects = self.library.resolve(&episode)?;
                let obs = self.env.reset(objects, seed)?.expect("rendering session");
                Ok(json!({
                    "obs": encode(&obs),
                    "shape": [OBSERVATION_SIZE, OBSERVATION_SIZE],
                    "reward": 0.0,
                    "terminated": false,
                    "info": { "outcome": "reset", "C": null, "S": null, "termination": null },
                }))
            }
            Request::Step {
                action: [x, y, theta],
            } => {
                let t = self.env.step(Action::new(x, y, theta))?;
                let placed = t.status == StepStatus::Placed;
                Ok(json!({
                    "obs": encode(t.observation.as_ref().expect("rendering session")),
                    "shape": [OBSERVATION_SIZE, OBSERVATION_SIZE],
                    "reward": t.reward,
                    "terminated": t.terminated,
                    "info": {
                        "outcome": t.status,
                        "C": placed.then_some(t.outcome.compactness),
                        "S": placed.then_some(if t.outcome.stable { 1 } else { -1 }),
                        "termination": t.termination,
                        "pose": t.pose,
                    },
                }))
            }
            Request::Close => unreachable!("handled by the caller"),
        }
    }
}

fn error(e: &PackError) -> Value {
    json!({ "error": e.to_string() })
}

pub fn encode(obs: &Observation) -> String {
    STANDARD.encode(obs.to_le_bytes())
}

/// Inverse of [`encode`].
pub fn decode(text: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| PackError::Protocol(format!("bad base64: {e}")))?;
    if bytes.len() != OBSERVATION_SIZE * OBSERVATION_SIZE * 4 {
        return Err(PackError::Protocol(format!(
            "observation has {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Answers requests until `close` or end of input.
pub fn serve<R: BufRead, W: Write>(session: &mut Session, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line.at_path("<input>")?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle(&line);
        output
            .write_all(reply.line.as_bytes())
            .at_path("<output>")?;
        output.write_all(b"\n").at_path("<output>")?;
        output.flush().at_path("<output>")?;
        if reply.close {
            break;
        }
    }
    Ok(())
}
