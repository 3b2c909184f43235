//! One MCP server per agent workflow, speaking JSON-RPC 2.0.
//!
//! Reads are answered from engine snapshots and are not audited. Writes go
//! through the engine's command queue, which audits them.

mod tools;
pub mod transcript;
pub mod transport;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use replen_core::orchestrator::EngineHandle;
use serde::Serialize;
use serde_json::{json, Value};

pub use tools::{registry, ToolDescriptor};

pub const PROTOCOL_VERSION: &str = "2024-11-05";

pub const PARSE_ERROR: i64 = -32700;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Workflow {
    Procurement,
    Planning,
    Exceptions,
    Forecasting,
    Inventory,
    Supplier,
}

impl Workflow {
    pub const ALL: [Workflow; 6] = [
        Workflow::Procurement,
        Workflow::Planning,
        Workflow::Exceptions,
        Workflow::Forecasting,
        Workflow::Inventory,
        Workflow::Supplier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Workflow::Procurement => "procurement",
            Workflow::Planning => "planning",
            Workflow::Exceptions => "exceptions",
            Workflow::Forecasting => "forecasting",
            Workflow::Inventory => "inventory",
            Workflow::Supplier => "supplier",
        }
    }
}

impl fmt::Display for Workflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown workflow {0:?}")]
pub struct UnknownWorkflow(pub String);

impl FromStr for Workflow {
    type Err = UnknownWorkflow;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Workflow::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| UnknownWorkflow(s.to_string()))
    }
}

#[derive(Debug, Serialize)]
struct RpcError {
    code: i64,
    message: String,
}

#[derive(Debug, Serialize)]
struct Response {
    jsonrpc: &'static str,
    id: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<RpcError>,
}

impl Response {
    fn ok(id: Value, result: Value) -> Self {
        Self {
            jsonrpc: "2.0",
            id,
            result: Some(result),
            error: None,
        }
    }

    fn err(id: Value, code: i64, message: impl Into<String>) -> Self {
        Self {
            jsonrpc: "2.0",
            id,
            result: None,
            error: Some(RpcError {
                code,
                message: message.into(),
            }),
        }
    }

    fn render(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

struct Request {
    /// `None` for notifications.
    id: Option<Value>,
    method: String,
    params: Value,
}

fn parse_envelope(raw: &str) -> Result<Request, (Value, String)> {
    let v: Value = serde_json::from_str(raw).map_err(|e| (Value::Null, format!("parse error: {e}")))?;
    let Value::Object(mut obj) = v else {
        return Err((Value::Null, "parse error: request must be a JSON object".into()));
    };
    let id = obj.remove("id");
    let echo = match &id {
        Some(i @ (Value::String(_) | Value::Number(_) | Value::Null)) => i.clone(),
        Some(_) => return Err((Value::Null, "parse error: id must be a string, number or null".into())),
        None => Value::Null,
    };
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Err((echo, "parse error: jsonrpc must be \"2.0\"".into()));
    }
    let Some(Value::String(method)) = obj.remove("method") else {
        return Err((echo, "parse error: method must be a string".into()));
    };
    let params = match obj.remove("params") {
        None | Some(Value::Null) => Value::Object(Default::default()),
        Some(p @ (Value::Object(_) | Value::Array(_))) => p,
        Some(_) => return Err((echo, "parse error: params must be an object or array".into())),
    };
    Ok(Request { id, method, params })
}

struct Tool {
    descriptor: ToolDescriptor,
    validator: jsonschema::Validator,
}

/// The MCP server of one workflow.
pub struct McpServer {
    workflow: Workflow,
    tools: Vec<Tool>,
    engine: Arc<EngineHandle>,
}

impl McpServer {
    pub fn new(workflow: Workflow, engine: Arc<EngineHandle>) -> Self {
        let tools = registry(workflow)
            .into_iter()
            .map(|descriptor| {
                let validator = jsonschema::validator_for(&descriptor.input_schema).expect("bundled tool schemas are valid");
                Tool { descriptor, validator }
            })
            .collect();
        Self { workflow, tools, engine }
    }

    pub fn workflow(&self) -> Workflow {
        self.workflow
    }

    pub fn tools(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.tools.iter().map(|t| &t.descriptor)
    }

    /// Answers one raw JSON-RPC message. Notifications produce no response.
    pub fn handle_request(&self, raw: &str) -> Option<String> {
        let req = match parse_envelope(raw) {
            Ok(r) => r,
            Err((id, msg)) => return Some(Response::err(id, PARSE_ERROR, msg).render()),
        };
        let Some(id) = req.id else {
            return None;
        };
        let resp = match self.dispatch(&req.method, &req.params) {
            Ok(result) => Response::ok(id, result),
            Err((code, msg)) => Response::err(id, code, msg),
        };
        Some(resp.render())
    }

    fn dispatch(&self, method: &str, params: &Value) -> Result<Value, (i64, String)> {
        match method {
            "initialize" => {
                let version = params.get("protocolVersion").and_then(Value::as_str).unwrap_or(PROTOCOL_VERSION);
                Ok(json!({
                    "protocolVersion": version,
                    "capabilities": { "tools": { "listChanged": false } },
                    "serverInfo": { "name": format!("replen-{}", self.workflow), "version": env!("CARGO_PKG_VERSION") },
                }))
            }
            "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({ "tools": self.tools().map(ToolDescriptor::listing).collect::<Vec<_>>() })),
            "tools/call" => self.call(params),
            other => Err((METHOD_NOT_FOUND, format!("method not found: {other}"))),
        }
    }

    fn call(&self, params: &Value) -> Result<Value, (i64, String)> {
        let Some(name) = params.get("name").and_then(Value::as_str) else {
            return Err((INVALID_PARAMS, "tools/call requires a string name".into()));
        };
        let args = match params.get("arguments") {
            None | Some(Value::Null) => Value::Object(Default::default()),
            Some(a) => a.clone(),
        };
        let Some(tool) = self.tools.iter().find(|t| t.descriptor.name == name) else {
            return Ok(tool_result(format!("unknown tool: {name}"), true));
        };
        if let Err(e) = tool.validator.validate(&args) {
            let at = e.instance_path.to_string();
            let at = if at.is_empty() { String::new() } else { format!(" at {at}") };
            return Err((INVALID_PARAMS, format!("invalid arguments for {name}{at}: {e}")));
        }
        Ok(match tools::invoke(&self.engine, name, &args) {
            Ok(v) => tool_result(serde_json::to_string(&v).expect("tool output serializes"), false),
            Err(msg) => tool_result(msg, true),
        })
    }
}

fn tool_result(text: String, is_error: bool) -> Value {
    json!({ "content": [{ "type": "text", "text": text }], "isError": is_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_checks() {
        assert!(parse_envelope("{").is_err());
        assert!(parse_envelope("[]").is_err());
        assert!(parse_envelope(r#"{"id":1,"method":"ping"}"#).is_err());
        assert!(parse_envelope(r#"{"jsonrpc":"2.0","id":{},"method":"ping"}"#).is_err());
        assert!(parse_envelope(r#"{"jsonrpc":"2.0","id":1,"method":"ping","params":3}"#).is_err());
        let r = parse_envelope(r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#).unwrap();
        assert!(r.id.is_none());
        let r = parse_envelope(r#"{"jsonrpc":"2.0","id":"a","method":"ping"}"#).unwrap();
        assert_eq!(r.id, Some(json!("a")));
    }

    #[test]
    fn workflow_names_round_trip() {
        for w in Workflow::ALL {
            assert_eq!(w.name().parse::<Workflow>().unwrap(), w);
        }
        assert!("billing".parse::<Workflow>().is_err());
    }
}
