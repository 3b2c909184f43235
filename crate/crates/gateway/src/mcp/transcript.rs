//! Recorded JSON-RPC sessions and their replay.
//!
//! A transcript is plain text: `-> ` lines are requests sent to the server,
//! each followed by a `<- ` line holding the exact response unless the
//! request was a notification. `#` lines and blank lines are ignored.

use std::sync::Arc;

use replen_core::consortium::Consortium;
use replen_core::orchestrator::{Actor, ApprovalState, Decision, Engine, EngineConfig, EngineHandle, HandleOptions};
use replen_core::sim::{generate_scenario, ScenarioSpec, World};
use serde_json::Value;

use super::McpServer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub request: String,
    pub response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranscriptError {
    #[error("line {0}: response without a request")]
    OrphanResponse(usize),
    #[error("line {0}: expected `-> `, `<- `, `#` or a blank line")]
    BadLine(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub exchange: usize,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub header: Vec<String>,
    pub exchanges: Vec<Exchange>,
}

impl Transcript {
    pub fn parse(text: &str) -> Result<Self, TranscriptError> {
        let mut t = Transcript::default();
        for (i, line) in text.lines().enumerate() {
            if let Some(req) = line.strip_prefix("-> ") {
                t.exchanges.push(Exchange {
                    request: req.to_string(),
                    response: None,
                });
            } else if let Some(resp) = line.strip_prefix("<- ") {
                match t.exchanges.last_mut() {
                    Some(ex) if ex.response.is_none() => ex.response = Some(resp.to_string()),
                    _ => return Err(TranscriptError::OrphanResponse(i + 1)),
                }
            } else if line.starts_with('#') {
                if t.exchanges.is_empty() {
                    t.header.push(line.to_string());
                }
            } else if !line.trim().is_empty() {
                return Err(TranscriptError::BadLine(i + 1));
            }
        }
        Ok(t)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for h in &self.header {
            out.push_str(h);
            out.push('\n');
        }
        for ex in &self.exchanges {
            out.push_str("-> ");
            out.push_str(&ex.request);
            out.push('\n');
            if let Some(r) = &ex.response {
                out.push_str("<- ");
                out.push_str(r);
                out.push('\n');
            }
        }
        out
    }

    /// Sends every request to `server` and stores what it answered.
    pub fn record(&self, server: &McpServer) -> Transcript {
        Transcript {
            header: self.header.clone(),
            exchanges: self
                .exchanges
                .iter()
                .map(|ex| Exchange {
                    request: ex.request.clone(),
                    response: server.handle_request(&ex.request),
                })
                .collect(),
        }
    }

    /// Replays the requests with every numeric id shifted by `id_shift` and compares
    /// the responses byte for byte once the echoed id is mapped back.
    pub fn replay(&self, server: &McpServer, id_shift: i64) -> Vec<Mismatch> {
        let mut out = Vec::new();
        for (i, ex) in self.exchanges.iter().enumerate() {
            let (request, ids) = shift_id(&ex.request, id_shift);
            let actual = server.handle_request(&request);
            let expected = match (&ex.response, &ids) {
                (Some(r), Some((old, new))) => Some(r.replacen(&id_prefix(old), &id_prefix(new), 1)),
                (r, _) => r.clone(),
            };
            if actual != expected {
                out.push(Mismatch {
                    exchange: i,
                    expected,
                    actual,
                });
            }
        }
        out
    }
}

fn id_prefix(id: &Value) -> String {
    format!(r#"{{"jsonrpc":"2.0","id":{id},"#)
}

/// Rewrites a numeric request id; other requests pass through untouched.
fn shift_id(raw: &str, shift: i64) -> (String, Option<(Value, Value)>) {
    let Ok(Value::Object(mut obj)) = serde_json::from_str::<Value>(raw) else {
        return (raw.to_string(), None);
    };
    let Some(old) = obj.get("id").and_then(Value::as_i64) else {
        return (raw.to_string(), None);
    };
    let new = Value::from(old + shift);
    obj.insert("id".into(), new.clone());
    (Value::Object(obj).to_string(), Some((Value::from(old), new)))
}

/// The engine state the bundled transcripts were recorded against: two outlets,
/// three SKUs, seed 7, manual approvals. Everything pending is approved after
/// each of the first nine cycles; the tenth leaves its drafts pending.
pub fn reference_engine() -> Engine {
    let cfg = generate_scenario(&ScenarioSpec::new(2, 3, 7));
    let threshold = cfg.policy.dispersion_flag_threshold;
    let world = World::generate(cfg).expect("reference scenario is valid");
    let mut engine = Engine::new(world, EngineConfig::new(false, Consortium::trio(0.05, threshold)));
    for cycle in 0..10 {
        engine.run_cycle();
        if cycle < 9 {
            let pending: Vec<String> = engine
                .approvals()
                .iter()
                .filter(|a| a.state == ApprovalState::Pending)
                .map(|a| a.id.clone())
                .collect();
            for id in pending {
                engine.submit_decision(&id, Decision::Approve, Actor::human("fixture")).expect("pending item accepts approval");
            }
        }
    }
    engine
}

pub fn reference_handle() -> Arc<EngineHandle> {
    Arc::new(EngineHandle::spawn(reference_engine(), HandleOptions::default()))
}
