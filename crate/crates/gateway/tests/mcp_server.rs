use std::io::Cursor;
use std::sync::Arc;
use std::thread;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use replen_core::orchestrator::{Actor, Decision};
use replen_gateway::mcp::transcript::reference_handle;
use replen_gateway::mcp::transport::{router, serve_lines};
use replen_gateway::mcp::{McpServer, Workflow};
use serde_json::{json, Value};
use tower::ServiceExt;

fn call(server: &McpServer, id: u64, name: &str, args: Value) -> Value {
    let req = json!({ "jsonrpc": "2.0", "id": id, "method": "tools/call", "params": { "name": name, "arguments": args } });
    serde_json::from_str(&server.handle_request(&req.to_string()).unwrap()).unwrap()
}

fn text_of(resp: &Value) -> Value {
    serde_json::from_str(resp["result"]["content"][0]["text"].as_str().unwrap()).unwrap()
}

#[test]
fn listing_tools_writes_nothing() {
    let engine = reference_handle();
    let before = engine.snapshot().audit_len;
    for w in Workflow::ALL {
        let server = McpServer::new(w, Arc::clone(&engine));
        for (i, method) in ["initialize", "tools/list", "ping"].into_iter().enumerate() {
            let req = json!({ "jsonrpc": "2.0", "id": i, "method": method });
            assert!(server.handle_request(&req.to_string()).unwrap().contains("\"result\""));
        }
        let names: Vec<&str> = server.tools().map(|t| t.name).collect();
        let listed: Value = serde_json::from_str(&server.handle_request(r#"{"jsonrpc":"2.0","id":9,"method":"tools/list"}"#).unwrap()).unwrap();
        let listed: Vec<&str> = listed["result"]["tools"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
        assert_eq!(names, listed);
    }
    assert_eq!(engine.snapshot().audit_len, before);
}

#[test]
fn read_tools_are_not_audited_but_writes_are() {
    let engine = reference_handle();
    let server = McpServer::new(Workflow::Procurement, Arc::clone(&engine));
    let before = engine.snapshot().audit_len;
    let pending = text_of(&call(&server, 1, "list_pending_orders", json!({})));
    let ids: Vec<&str> = pending.as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["PO-7", "PO-8"]);
    assert_eq!(engine.snapshot().audit_len, before);
    let r = call(&server, 2, "approve_order", json!({ "id": "PO-7", "qty": 12 }));
    assert_eq!(text_of(&r)["state"], "Modified");
    let tail = engine.audit_since(before);
    assert_eq!(tail.len(), 1);
    assert_eq!(tail[0].event_kind, "approval_decided");
    assert_eq!(tail[0].actor, Actor::human("mcp-client"));
}

#[test]
fn approve_over_mcp_matches_a_direct_decision() {
    let via_mcp = reference_handle();
    let direct = reference_handle();
    let server = McpServer::new(Workflow::Procurement, Arc::clone(&via_mcp));
    let before = via_mcp.snapshot().audit_len;
    call(&server, 1, "approve_order", json!({ "id": "PO-8", "decider": "ana" }));
    direct.decide("PO-8", Decision::Approve, Actor::human("ana")).unwrap();
    let a = via_mcp.audit_since(before);
    let b = direct.audit_since(before);
    assert_eq!(a, b);
}

#[test]
fn concurrent_clients_are_serialized() {
    let engine = reference_handle();
    let before = engine.snapshot().audit_len;
    let procurement = McpServer::new(Workflow::Procurement, Arc::clone(&engine));
    let planning = McpServer::new(Workflow::Planning, Arc::clone(&engine));
    thread::scope(|s| {
        s.spawn(|| {
            for id in ["PO-7", "PO-8"] {
                assert_eq!(call(&procurement, 1, "approve_order", json!({ "id": id, "decider": "a" }))["result"]["isError"], false);
            }
        });
        s.spawn(|| {
            assert_eq!(call(&planning, 1, "approve_plan", json!({ "id": "PLAN-5", "decider": "b" }))["result"]["isError"], false);
        });
    });
    let tail = engine.audit_since(before);
    assert_eq!(tail.len(), 3);
    assert!(tail.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    let mut decided: Vec<&str> = tail.iter().map(|r| r.payload["item_id"].as_str().unwrap()).collect();
    decided.sort();
    assert_eq!(decided, ["PLAN-5", "PO-7", "PO-8"]);
}

#[test]
fn stdio_framing_answers_line_by_line() {
    let server = McpServer::new(Workflow::Exceptions, reference_handle());
    let input = concat!(
        r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{"protocolVersion":"2024-11-05"}}"#,
        "\n",
        r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#,
        "\n\n",
        r#"{"jsonrpc":"2.0","id":2,"method":"tools/list"}"#,
        "\n",
    );
    let mut out = Vec::new();
    serve_lines(&server, Cursor::new(input), &mut out).unwrap();
    let out = String::from_utf8(out).unwrap();
    let lines: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["result"]["protocolVersion"], "2024-11-05");
    assert_eq!(lines[1]["result"]["tools"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn http_framing_posts_to_rpc() {
    let server = Arc::new(McpServer::new(Workflow::Supplier, reference_handle()));
    let app = router(server);
    let resp = app
        .clone()
        .oneshot(Request::post("/rpc").body(Body::from(r#"{"jsonrpc":"2.0","id":"x","method":"tools/list"}"#)).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["id"], "x");
    assert_eq!(v["result"]["tools"][0]["name"], "get_interactions");

    let resp = app
        .oneshot(Request::post("/rpc").body(Body::from(r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#)).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::ACCEPTED);
}

#[test]
fn protocol_version_is_echoed() {
    let server = McpServer::new(Workflow::Inventory, reference_handle());
    let r = server
        .handle_request(r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{"protocolVersion":"2025-03-26"}}"#)
        .unwrap();
    assert!(r.contains(r#""protocolVersion":"2025-03-26""#));
}
