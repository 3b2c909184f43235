//! Thin client for the HTTP API of a running `replen serve`.

use std::time::Duration;

use serde_json::Value;
use ureq::Agent;

use crate::CliError;

pub struct Client {
    base: String,
    agent: Agent,
}

impl Client {
    pub fn new(base: &str) -> Self {
        let agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base: base.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn get(&self, path: &str) -> Result<Value, CliError> {
        let resp = self.agent.get(&self.url(path)).call().map_err(|e| self.unreachable(e))?;
        finish(resp)
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<Value, CliError> {
        let resp = self.agent.post(&self.url(path)).send_json(body).map_err(|e| self.unreachable(e))?;
        finish(resp)
    }

    fn unreachable(&self, e: ureq::Error) -> CliError {
        CliError::Runtime(format!("cannot reach {}: {e}", self.base))
    }
}

/// Client errors (4xx) are the caller's fault; anything else is a runtime failure.
fn finish(mut resp: ureq::http::Response<ureq::Body>) -> Result<Value, CliError> {
    let status = resp.status();
    let body: Value = resp
        .body_mut()
        .read_json()
        .map_err(|e| CliError::Runtime(format!("unreadable response ({status}): {e}")))?;
    if status.is_success() {
        return Ok(body);
    }
    let msg = body.get("error").and_then(Value::as_str).map(str::to_string).unwrap_or_else(|| body.to_string());
    if status.is_client_error() {
        Err(CliError::Validation(msg))
    } else {
        Err(CliError::Runtime(format!("server error {status}: {msg}")))
    }
}
