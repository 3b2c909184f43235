use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::Query;
use axum::routing::post;
use axum::{Json, Router};
use replen_core::consortium::{Consortium, Proposal, Reasoner, ReasonerError, ReasonerTask, TaskKind, TaskValue};
use replen_core::orchestrator::{Engine, EngineConfig};
use replen_core::procurement::PurchaseOrder;
use replen_core::sim::{generate_scenario, ResponseKind, ScenarioSpec, SupplierResponse, World};
use replen_gateway::remote::{RemoteReasoner, RemoteSupplier};
use serde_json::json;

/// Serves `app` on an ephemeral port from a background runtime.
fn spawn(app: Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn task() -> ReasonerTask {
    ReasonerTask {
        kind: TaskKind::OrderQuantity,
        context: json!({ "sku": "SKU001" }),
        baseline_hint: TaskValue::Number(40.0),
    }
}

async fn double(Json(t): Json<ReasonerTask>) -> Json<Proposal> {
    Json(Proposal {
        reasoner_id: "whatever".into(),
        value: TaskValue::Number(t.baseline_hint.as_number().unwrap() * 2.0),
        rationale: "doubled".into(),
    })
}

#[test]
fn remote_reasoner_round_trip() {
    let base = spawn(Router::new().route("/propose", post(double)));
    let r = RemoteReasoner::new("model-a", &base, Duration::from_secs(5));
    let p = r.propose(&task()).unwrap();
    assert_eq!(p.reasoner_id, "model-a");
    assert_eq!(p.value, TaskValue::Number(80.0));
    assert!(r.is_remote());
}

#[test]
fn slow_and_broken_reasoners_fail_cleanly() {
    async fn slow() -> &'static str {
        tokio::time::sleep(Duration::from_secs(2)).await;
        "{}"
    }
    async fn garbage() -> &'static str {
        "not json"
    }
    let base = spawn(Router::new().route("/propose", post(slow)));
    let r = RemoteReasoner::new("slow", &base, Duration::from_millis(200));
    assert_eq!(r.propose(&task()), Err(ReasonerError::Timeout));

    let base = spawn(Router::new().route("/propose", post(garbage)));
    let r = RemoteReasoner::new("garbage", &base, Duration::from_secs(5));
    assert!(matches!(r.propose(&task()), Err(ReasonerError::Malformed(_))));

    let r = RemoteReasoner::new("gone", "http://127.0.0.1:9", Duration::from_secs(1));
    assert!(matches!(r.propose(&task()), Err(ReasonerError::Unavailable(_))));
}

#[test]
fn failed_remote_reasoner_becomes_an_absent_proposal() {
    let base = spawn(Router::new().route("/propose", post(double)));
    let reasoners: Vec<Arc<dyn Reasoner>> = vec![
        Arc::new(replen_core::consortium::BaselineReasoner::new("baseline")),
        Arc::new(RemoteReasoner::new("model-a", &base, Duration::from_secs(5))),
        Arc::new(RemoteReasoner::new("gone", "http://127.0.0.1:9", Duration::from_secs(1))),
    ];
    let (value, trace) = Consortium::new(reasoners, 0.25).decide(&task()).unwrap();
    assert_eq!(trace.proposals.len(), 2);
    assert_eq!(trace.failures.len(), 1);
    assert_eq!(value, TaskValue::Number(40.0));
}

async fn confirm(Query(q): Query<HashMap<String, u32>>, Json(po): Json<PurchaseOrder>) -> Json<SupplierResponse> {
    Json(SupplierResponse {
        po_id: po.id,
        day: q["day"],
        kind: ResponseKind::Confirmed,
        delivery_day: Some(po.need_by_day),
    })
}

#[test]
fn remote_supplier_answers_drive_the_engine() {
    let url = spawn(Router::new().route("/po", post(confirm)));
    let cfg = generate_scenario(&ScenarioSpec::new(2, 3, 7));
    let mut config = EngineConfig::new(true, Consortium::baseline(0.25));
    config.supplier_channel = Some(Arc::new(RemoteSupplier::new(&format!("{url}/po"), Duration::from_secs(5))));
    let mut engine = Engine::new(World::generate(cfg).unwrap(), config);
    for _ in 0..15 {
        let r = engine.run_cycle();
        assert!(r.stage_errors.is_empty(), "{:?}", r.stage_errors);
    }
    let responses: Vec<_> = engine.audit().records().iter().filter(|r| r.event_kind == "supplier_response").collect();
    assert!(!responses.is_empty());
    assert!(responses.iter().all(|r| r.payload["response"]["outcome"] == "confirmed"));
}

#[test]
fn remote_supplier_rejects_answers_for_other_orders() {
    async fn wrong(Json(po): Json<PurchaseOrder>) -> Json<SupplierResponse> {
        Json(SupplierResponse {
            po_id: replen_core::domain::PoId(po.id.0 + 1),
            day: 0,
            kind: ResponseKind::NoResponse,
            delivery_day: None,
        })
    }
    let url = spawn(Router::new().route("/po", post(wrong)));
    let cfg = generate_scenario(&ScenarioSpec::new(2, 3, 7));
    let mut config = EngineConfig::new(true, Consortium::baseline(0.25));
    config.supplier_channel = Some(Arc::new(RemoteSupplier::new(&format!("{url}/po"), Duration::from_secs(5))));
    let mut engine = Engine::new(World::generate(cfg).unwrap(), config);
    let errors: Vec<String> = (0..15).flat_map(|_| engine.run_cycle().stage_errors).collect();
    assert!(errors.iter().any(|e| e.contains("instead of")), "{errors:?}");
}
