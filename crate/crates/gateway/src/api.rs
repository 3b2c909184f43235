//! HTTP API over an [`EngineHandle`]: snapshot reads, decision endpoints and a
//! server-sent event feed of audit records.

use std::convert::Infallible;
use std::sync::mpsc::RecvTimeoutError;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use replen_core::domain::AlertId;
use replen_core::exceptions::{AlertError, AlertState};
use replen_core::orchestrator::{Actor, ApprovalItem, CommandError, Decision, DecisionError, EngineHandle};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

const DEFAULT_DECIDER: &str = "operator";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Unavailable(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        }
    }
}

impl From<CommandError> for ApiError {
    fn from(e: CommandError) -> Self {
        let msg = e.to_string();
        match e {
            CommandError::Decision(DecisionError::UnknownItem(_)) | CommandError::Alert(AlertError::Unknown(_)) => ApiError::NotFound(msg),
            CommandError::Decision(DecisionError::NotPending(_)) | CommandError::Alert(AlertError::NotOpen(_)) => ApiError::Conflict(msg),
            CommandError::Decision(DecisionError::InvalidDelta(_)) => ApiError::Unprocessable(msg),
            CommandError::Stopped => ApiError::Unavailable(msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::Unprocessable(format!("invalid request body: {e}")))
}

/// Engine calls block on the command queue, so they run off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, CommandError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Unavailable(e.to_string()))?
        .map_err(ApiError::from)
}

type Engine = State<Arc<EngineHandle>>;

async fn state(State(engine): Engine) -> Json<Value> {
    Json(serde_json::to_value(&*engine.snapshot()).expect("snapshot serializes"))
}

async fn kpis(State(engine): Engine) -> Json<Value> {
    Json(serde_json::to_value(&engine.snapshot().kpis).expect("kpis serialize"))
}

#[derive(Debug, Deserialize)]
struct StateFilter {
    state: Option<String>,
}

/// An approval item together with the PO or plan it gates.
#[derive(Debug, Serialize)]
struct ApprovalEntry {
    #[serde(flatten)]
    item: ApprovalItem,
    payload: Option<Value>,
}

fn approval_matches(item: &ApprovalItem, filter: Option<&str>) -> bool {
    match filter {
        None | Some("all") => true,
        Some(s) => serde_json::to_value(item.state).ok().and_then(|v| v.as_str().map(|v| v.eq_ignore_ascii_case(s))).unwrap_or(false),
    }
}

async fn approvals(State(engine): Engine, Query(f): Query<StateFilter>) -> Json<Vec<ApprovalEntry>> {
    let view = engine.snapshot();
    Json(
        view.approvals
            .iter()
            .filter(|a| approval_matches(a, f.state.as_deref()))
            .map(|a| ApprovalEntry {
                item: a.clone(),
                payload: view.approval_payload(a),
            })
            .collect(),
    )
}

async fn approval(State(engine): Engine, Path(id): Path<String>) -> ApiResult<ApprovalEntry> {
    let view = engine.snapshot();
    let item = view.approval(&id).ok_or_else(|| ApiError::NotFound(format!("unknown approval item {id}")))?;
    Ok(Json(ApprovalEntry {
        item: item.clone(),
        payload: view.approval_payload(item),
    }))
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    #[serde(flatten)]
    decision: Decision,
    #[serde(default)]
    decider: Option<String>,
}

async fn decide(State(engine): Engine, Path(id): Path<String>, body: Bytes) -> ApiResult<ApprovalItem> {
    let body: DecisionBody = parse_body(&body)?;
    let actor = Actor::human(body.decider.as_deref().unwrap_or(DEFAULT_DECIDER));
    let item = blocking(move || engine.decide(&id, body.decision, actor)).await?;
    Ok(Json(item))
}

async fn alerts(State(engine): Engine, Query(f): Query<StateFilter>) -> Json<Value> {
    let view = engine.snapshot();
    let wanted = |s: AlertState| match f.state.as_deref() {
        None | Some("all") => true,
        Some(x) => format!("{s:?}").eq_ignore_ascii_case(x),
    };
    Json(serde_json::to_value(view.alerts.iter().filter(|a| wanted(a.state)).collect::<Vec<_>>()).expect("alerts serialize"))
}

#[derive(Debug, Default, Deserialize)]
struct DeciderBody {
    #[serde(default)]
    decider: Option<String>,
}

async fn ack(State(engine): Engine, Path(id): Path<String>, body: Bytes) -> ApiResult<Value> {
    let body: DeciderBody = parse_body(&body)?;
    let alert: AlertId = id.parse().map_err(|_| ApiError::NotFound(format!("unknown alert {id}")))?;
    let actor = Actor::human(body.decider.as_deref().unwrap_or(DEFAULT_DECIDER));
    let a = blocking(move || engine.ack_alert(alert, actor)).await?;
    Ok(Json(serde_json::to_value(a).expect("alert serializes")))
}

async fn plan(State(engine): Engine, Path(id): Path<String>) -> ApiResult<Value> {
    engine
        .snapshot()
        .plan(&id)
        .map(|p| Json(serde_json::to_value(p).expect("plan serializes")))
        .ok_or_else(|| ApiError::NotFound(format!("unknown plan {id}")))
}

async fn generate_plan(State(engine): Engine, body: Bytes) -> ApiResult<Value> {
    let body: DeciderBody = parse_body(&body)?;
    let actor = Actor::human(body.decider.as_deref().unwrap_or(DEFAULT_DECIDER));
    let id = blocking(move || engine.generate_plan(actor)).await?;
    Ok(Json(json!({ "plan_id": id })))
}

#[derive(Debug, Deserialize)]
struct StepBody {
    #[serde(default = "one")]
    days: u32,
}

fn one() -> u32 {
    1
}

async fn step(State(engine): Engine, body: Bytes) -> ApiResult<Value> {
    let body: StepBody = parse_body(&body)?;
    let reports = blocking(move || engine.step(body.days)).await?;
    Ok(Json(serde_json::to_value(reports).expect("reports serialize")))
}

async fn pause(State(engine): Engine) -> ApiResult<Value> {
    blocking(move || engine.pause()).await?;
    Ok(Json(json!({ "paused": true })))
}

async fn resume(State(engine): Engine) -> ApiResult<Value> {
    blocking(move || engine.resume()).await?;
    Ok(Json(json!({ "paused": false })))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    after: Option<u64>,
}

/// Streams audit records with `seq` above `?after=`, the `Last-Event-ID` header,
/// or the current log length when neither is given.
async fn events(State(engine): Engine, headers: HeaderMap, Query(q): Query<EventsQuery>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let last = headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.parse().ok());
    let after = q.after.or(last).unwrap_or_else(|| engine.snapshot().audit_len);
    let feed = engine.subscribe_from(after);
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel();
    std::thread::spawn(move || loop {
        match feed.recv_timeout(Duration::from_millis(500)) {
            Ok(r) => {
                if tx.send(r).is_err() {
                    break;
                }
            }
            Err(RecvTimeoutError::Timeout) if tx.is_closed() => break,
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        let record = rx.recv().await?;
        let event = Event::default()
            .id(record.seq.to_string())
            .event("audit")
            .json_data(&record)
            .expect("audit record serializes");
        Some((Ok(event), rx))
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

pub fn router(engine: Arc<EngineHandle>) -> Router {
    Router::new()
        .route("/api/state", get(state))
        .route("/api/kpis", get(kpis))
        .route("/api/approvals", get(approvals))
        .route("/api/approvals/{id}", get(approval))
        .route("/api/approvals/{id}/decision", post(decide))
        .route("/api/alerts", get(alerts))
        .route("/api/alerts/{id}/ack", post(ack))
        .route("/api/plans/generate", post(generate_plan))
        .route("/api/plans/{id}", get(plan))
        .route("/api/sim/step", post(step))
        .route("/api/sim/pause", post(pause))
        .route("/api/sim/resume", post(resume))
        .route("/api/events", get(events))
        .with_state(engine)
}

#[cfg(test)]
mod tests {
    use replen_core::orchestrator::ApprovalState;

    use super::*;

    #[test]
    fn decision_body_accepts_decider_alongside_the_tag() {
        let b: DecisionBody = serde_json::from_str(r#"{"decision":"reject","reason":"too many","decider":"ana"}"#).unwrap();
        assert_eq!(b.decision, Decision::Reject { reason: Some("too many".into()) });
        assert_eq!(b.decider.as_deref(), Some("ana"));
        let b: DecisionBody = serde_json::from_str(r#"{"decision":"modify","delta":{"qty":12}}"#).unwrap();
        assert!(matches!(b.decision, Decision::Modify { .. }));
    }

    #[test]
    fn empty_body_means_defaults() {
        let b: DeciderBody = parse_body(&Bytes::new()).unwrap();
        assert_eq!(b.decider, None);
        let s: StepBody = parse_body(&Bytes::from_static(b" ")).unwrap();
        assert_eq!(s.days, 1);
        assert!(parse_body::<StepBody>(&Bytes::from_static(b"{\"days\":-1}")).is_err());
    }

    #[test]
    fn errors_map_to_statuses() {
        let cases = [
            (CommandError::Decision(DecisionError::UnknownItem("PO-1".into())), StatusCode::NOT_FOUND),
            (CommandError::Decision(DecisionError::NotPending("PO-1".into())), StatusCode::CONFLICT),
            (CommandError::Decision(DecisionError::InvalidDelta("qty".into())), StatusCode::UNPROCESSABLE_ENTITY),
            (CommandError::Alert(AlertError::NotOpen(AlertId(1))), StatusCode::CONFLICT),
            (CommandError::Stopped, StatusCode::SERVICE_UNAVAILABLE),
        ];
        for (e, status) in cases {
            assert_eq!(ApiError::from(e).status(), status);
        }
    }

    #[test]
    fn approval_state_filter() {
        let item = ApprovalItem {
            id: "PO-1".into(),
            kind: replen_core::orchestrator::ApprovalKind::PurchaseOrder,
            payload_ref: "PO-1".into(),
            created_tick: 0,
            state: ApprovalState::Pending,
            modification: None,
            decider: None,
            decided_tick: None,
            note: None,
            summary: String::new(),
            flags: vec![],
        };
        assert!(approval_matches(&item, None));
        assert!(approval_matches(&item, Some("pending")));
        assert!(!approval_matches(&item, Some("approved")));
    }
}
