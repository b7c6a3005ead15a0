// SPDX-License-Identifier: Apache-2.0

//! HTTP surface. Handlers never touch the engine: reads come from the
//! latest published snapshot, writes go through the writer's queue.

use std::convert::Infallible;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures_util::stream::{self, StreamExt};
use loopbench_core::canonical::canonical;
use loopbench_core::conflict::Decision;
use loopbench_core::engine::{CommandError, DecisionOutcome, SubmitOutcome};
use loopbench_core::events::EventRecord;
use loopbench_core::scenario::{builtin, ScenarioDoc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

use crate::writer::{Command, Handle, Live, Reply};

#[derive(Clone)]
pub struct AppState {
    pub handle: Handle,
    /// Manual stepping is refused while the loop ticks on its own.
    pub auto_tick: bool,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/intents", post(submit_intent).get(list_intents))
        .route("/policies", get(list_policies))
        .route("/verdicts", get(list_verdicts))
        .route("/escalations", get(list_escalations))
        .route("/escalations/{id}", post(resolve_escalation))
        .route("/plans", get(list_plans))
        .route("/plans/{id}/decision", post(decide_plan))
        .route("/scenario", post(load_scenario))
        .route("/tick", post(tick))
        .route("/events", get(events))
        .with_state(state)
}

fn doc<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], canonical(body)).into_response()
}

fn problem(status: StatusCode, detail: impl ToString) -> Response {
    doc(status, &json!({ "error": detail.to_string() }))
}

fn writer_gone() -> Response {
    problem(StatusCode::SERVICE_UNAVAILABLE, "control loop is not running")
}

fn command_error(e: CommandError) -> Response {
    match e {
        CommandError::BadRequest(m) => problem(StatusCode::BAD_REQUEST, m),
        CommandError::NotFound(m) => problem(StatusCode::NOT_FOUND, format!("not found: {m}")),
        CommandError::Conflict(m) => problem(StatusCode::CONFLICT, m),
        CommandError::Engine(e) => problem(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| problem(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

#[derive(Deserialize)]
struct SubmitBody {
    text: String,
}

async fn submit_intent(State(st): State<AppState>, body: Bytes) -> Response {
    let body: SubmitBody = match parse_body(&body) {
        Ok(b) => b,
        Err(r) => return r,
    };
    match st.handle.run(Command::Submit { text: body.text }).await {
        Some(Reply::Submit(Ok(out))) => {
            let status = match &out {
                SubmitOutcome::Applied { .. } => StatusCode::CREATED,
                SubmitOutcome::Escalated { .. } => StatusCode::ACCEPTED,
                SubmitOutcome::Rejected { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                SubmitOutcome::Unavailable { .. } => StatusCode::SERVICE_UNAVAILABLE,
            };
            doc(status, &out)
        }
        Some(Reply::Submit(Err(e))) => command_error(e),
        _ => writer_gone(),
    }
}

fn decision_reply(reply: Option<Reply>) -> Response {
    match reply {
        Some(Reply::Decision(Ok(out))) => {
            let status = match out {
                DecisionOutcome::Unavailable { .. } => StatusCode::SERVICE_UNAVAILABLE,
                _ => StatusCode::OK,
            };
            doc(status, &out)
        }
        Some(Reply::Decision(Err(e))) => command_error(e),
        _ => writer_gone(),
    }
}

#[derive(Deserialize)]
enum OperatorDecision {
    ActivateCandidate,
    RejectCandidate,
    SuspendExisting,
}

#[derive(Deserialize)]
struct EscalationBody {
    decision: OperatorDecision,
}

async fn resolve_escalation(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let body: EscalationBody = match parse_body(&body) {
        Ok(b) => b,
        Err(r) => return r,
    };
    let decision = match body.decision {
        OperatorDecision::ActivateCandidate => Decision::ActivateCandidate,
        OperatorDecision::RejectCandidate => Decision::RejectCandidate,
        // The engine works out which policies have to make way.
        OperatorDecision::SuspendExisting => Decision::SuspendExisting { policy_ids: vec![] },
    };
    decision_reply(st.handle.run(Command::Resolve { escalation_id: id, decision }).await)
}

#[derive(Deserialize)]
enum PlanDecision {
    Approve,
    Reject,
}

#[derive(Deserialize)]
struct PlanBody {
    decision: PlanDecision,
}

async fn decide_plan(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let body: PlanBody = match parse_body(&body) {
        Ok(b) => b,
        Err(r) => return r,
    };
    let approve = matches!(body.decision, PlanDecision::Approve);
    decision_reply(st.handle.run(Command::DecidePlan { plan_id: id, approve }).await)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioBody {
    Builtin { name: String },
    Document(Box<serde_json::Value>),
}

async fn load_scenario(State(st): State<AppState>, body: Bytes) -> Response {
    let parsed = match parse_body::<ScenarioBody>(&body) {
        Ok(ScenarioBody::Builtin { name }) => {
            builtin(&name).ok_or_else(|| problem(StatusCode::NOT_FOUND, format!("no built-in scenario `{name}`")))
        }
        Ok(ScenarioBody::Document(v)) => ScenarioDoc::parse(&v.to_string())
            .map_err(|e| doc(StatusCode::UNPROCESSABLE_ENTITY, &json!({ "path": e.path, "error": e.detail }))),
        Err(r) => Err(r),
    };
    let scenario = match parsed {
        Ok(d) => d,
        Err(r) => return r,
    };
    match st.handle.load(scenario).await {
        Some(Reply::Loaded(Ok(id))) => doc(StatusCode::OK, &json!({ "scenario_id": id })),
        Some(Reply::Loaded(Err(e))) => problem(StatusCode::INTERNAL_SERVER_ERROR, e),
        _ => writer_gone(),
    }
}

async fn tick(State(st): State<AppState>) -> Response {
    if st.auto_tick {
        return problem(StatusCode::CONFLICT, "auto-tick is enabled");
    }
    match st.handle.run(Command::Tick).await {
        Some(Reply::Tick(Ok(t))) => doc(StatusCode::OK, &json!({ "tick": t })),
        Some(Reply::Tick(Err(e))) => problem(StatusCode::INTERNAL_SERVER_ERROR, e),
        _ => writer_gone(),
    }
}

async fn list_intents(State(st): State<AppState>) -> Response {
    let view = st.handle.shared.view.borrow().clone();
    doc(StatusCode::OK, &view.store.intents.values().collect::<Vec<_>>())
}

#[derive(Serialize)]
struct PolicyRow<'a> {
    #[serde(flatten)]
    record: &'a loopbench_core::store::PolicyRecord,
    active: bool,
}

async fn list_policies(State(st): State<AppState>) -> Response {
    let view = st.handle.shared.view.borrow().clone();
    let rows: Vec<PolicyRow> = view
        .store
        .policies
        .iter()
        .map(|(id, r)| PolicyRow { record: r, active: view.store.active.contains(id) })
        .collect();
    doc(StatusCode::OK, &rows)
}

async fn list_verdicts(State(st): State<AppState>) -> Response {
    let view = st.handle.shared.view.borrow().clone();
    doc(StatusCode::OK, &view.store.verdicts.values().collect::<Vec<_>>())
}

async fn list_escalations(State(st): State<AppState>) -> Response {
    let view = st.handle.shared.view.borrow().clone();
    doc(StatusCode::OK, &view.store.escalations.values().collect::<Vec<_>>())
}

async fn list_plans(State(st): State<AppState>) -> Response {
    let view = st.handle.shared.view.borrow().clone();
    doc(StatusCode::OK, &view.store.plans.values().collect::<Vec<_>>())
}

#[derive(Deserialize)]
struct EventsQuery {
    from: Option<u64>,
}

fn sse(rec: &EventRecord) -> SseEvent {
    SseEvent::default().id(rec.seq.to_string()).event(rec.event.kind()).data(rec.to_line())
}

struct Tail {
    rx: broadcast::Receiver<Live>,
    last: u64,
}

/// Replays the log after `from`, then follows it live. `Last-Event-ID`
/// takes precedence so a reconnecting client resumes where it stopped.
async fn events(State(st): State<AppState>, Query(q): Query<EventsQuery>, headers: HeaderMap) -> Response {
    let resume = headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse::<u64>().ok());
    let from = resume.or(q.from).unwrap_or(0);
    let shared = st.handle.shared.clone();
    // Subscribe before reading the backlog so nothing falls in between.
    let rx = shared.live.subscribe();
    let head = shared.head();
    if from > head {
        return problem(StatusCode::RANGE_NOT_SATISFIABLE, format!("from {from} is beyond head {head}"));
    }
    let backlog = shared.since(from);
    let last = backlog.last().map_or(from, |r| r.seq);
    let replay = stream::iter(backlog.iter().map(sse).map(Ok::<_, Infallible>).collect::<Vec<_>>());
    let live = stream::unfold(Tail { rx, last }, |mut t| async move {
        loop {
            match t.rx.recv().await {
                Ok(Live::Record(r)) if r.seq <= t.last => continue,
                Ok(Live::Record(r)) if r.seq == t.last + 1 => {
                    t.last = r.seq;
                    return Some((Ok::<_, Infallible>(sse(&r)), t));
                }
                // A gap, a reset, a lagging subscriber or shutdown: end the
                // stream and let the client resume from its last id.
                _ => return None,
            }
        }
    });
    Sse::new(replay.chain(live)).keep_alive(KeepAlive::default()).into_response()
}
