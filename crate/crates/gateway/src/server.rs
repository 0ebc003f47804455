//! HTTP endpoints and the per-session WebSocket.

use crate::replay::replay;
use crate::report::session_report;
use crate::session::{InputTrace, Phase};
use crate::store::{Gateway, SessionHandle};
use crate::{GatewayConfig, GatewayError};
use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use socbench_core::rosas::questionnaire;
use socbench_core::scenario::CartonEvent;
use socbench_core::sim::read_log;
use socbench_core::wire::{
    ErrorPayload, EventPayload, SeqCheck, SeqCounter, SeqValidator, WireBody, WireMessage,
};
use std::net::SocketAddr;
use std::sync::Arc;
use tokio::time::MissedTickBehavior;

type Shared = Arc<Gateway>;

/// Message types a client may send; the rest are server-only.
const KNOWN_TYPES: [&str; 7] = [
    "state",
    "input",
    "event",
    "questionnaire_request",
    "questionnaire_submit",
    "report",
    "error",
];

pub fn router(gateway: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/trials/{n}/trace", get(get_trace))
        .route("/sessions/{id}/trials/{n}/replay", post(post_replay))
        .route("/questionnaire", get(get_questionnaire))
        .route("/ws/{id}", get(ws_upgrade))
        .with_state(gateway)
}

/// Opens the data directory and serves until the process is stopped.
pub async fn serve(config: GatewayConfig, addr: SocketAddr) -> Result<(), GatewayError> {
    let gateway = Arc::new(Gateway::open(config)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(GatewayError::Bind)?;
    log::info!(
        "listening on {}",
        listener.local_addr().map_err(GatewayError::Bind)?
    );
    serve_on(listener, gateway).await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    gateway: Shared,
) -> Result<(), GatewayError> {
    axum::serve(listener, router(gateway))
        .await
        .map_err(GatewayError::Bind)
}

fn error_payload(e: &GatewayError) -> ErrorPayload {
    ErrorPayload {
        code: e.code().to_string(),
        message: e.to_string(),
        details: e.details(),
    }
}

fn status(e: &GatewayError) -> StatusCode {
    match e {
        GatewayError::InvalidParticipant(_)
        | GatewayError::InvalidInput(_)
        | GatewayError::InvalidResponse(_)
        | GatewayError::InvalidConfig(_) => StatusCode::BAD_REQUEST,
        GatewayError::UnknownSession(_) => StatusCode::NOT_FOUND,
        GatewayError::DuplicateParticipant { .. }
        | GatewayError::WrongPhase { .. }
        | GatewayError::WrongMethod { .. }
        | GatewayError::Incomplete { .. }
        | GatewayError::AlreadyStored { .. } => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiError(GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if status(&self.0) == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        (status(&self.0), Json(error_payload(&self.0))).into_response()
    }
}

fn bad_body(r: JsonRejection) -> ApiError {
    ApiError(GatewayError::InvalidInput(r.body_text()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub participant_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub participant_id: String,
    pub current_phase: Phase,
}

/// Result of replaying an uploaded trace against a stored trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayCheck {
    pub matches: bool,
    pub stored_samples: usize,
    pub replayed_samples: Option<usize>,
    /// Index of the first sample that differs.
    pub first_difference: Option<usize>,
    /// Why the trace could not be replayed at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
}

async fn create_session(
    State(gw): State<Shared>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<crate::Session>), ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    let handle = gw.create_session(&req.participant_id)?;
    let session = handle.lock().await.live.session().clone();
    Ok((StatusCode::CREATED, Json(session)))
}

async fn list_sessions(State(gw): State<Shared>) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    let mut out = vec![];
    for id in gw.session_ids() {
        let handle = gw.session(&id)?;
        let h = handle.lock().await;
        let s = h.live.session();
        out.push(SessionSummary {
            session_id: s.session_id.clone(),
            participant_id: s.participant_id.clone(),
            current_phase: s.current_phase,
        });
    }
    Ok(Json(out))
}

async fn get_session(
    State(gw): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<crate::Session>, ApiError> {
    let handle = gw.session(&id)?;
    let session = handle.lock().await.live.session().clone();
    Ok(Json(session))
}

async fn get_report(
    State(gw): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<crate::SessionReport>, ApiError> {
    let handle = gw.session(&id)?;
    let h = handle.lock().await;
    Ok(Json(session_report(&h.live)?))
}

async fn get_questionnaire() -> Json<socbench_core::rosas::QuestionnaireDefinition> {
    Json(questionnaire())
}

fn read_trace(h: &SessionHandle, n: usize) -> Result<InputTrace, GatewayError> {
    let (_, path) = n
        .checked_sub(1)
        .and_then(|i| h.live.trial_paths(i))
        .ok_or_else(|| GatewayError::InvalidInput(format!("session has no completed trial {n}")))?;
    let bytes = std::fs::read(&path).map_err(|source| GatewayError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| GatewayError::Format {
        path,
        message: e.to_string(),
    })
}

async fn get_trace(
    State(gw): State<Shared>,
    Path((id, n)): Path<(String, usize)>,
) -> Result<Json<InputTrace>, ApiError> {
    let handle = gw.session(&id)?;
    let h = handle.lock().await;
    Ok(Json(read_trace(&h, n)?))
}

async fn post_replay(
    State(gw): State<Shared>,
    Path((id, n)): Path<(String, usize)>,
    body: Result<Json<InputTrace>, JsonRejection>,
) -> Result<Json<ReplayCheck>, ApiError> {
    let Json(trace) = body.map_err(bad_body)?;
    let handle = gw.session(&id)?;
    let h = handle.lock().await;
    read_trace(&h, n)?;
    let (paths, _) = h
        .live
        .trial_paths(n - 1)
        .expect("trace exists, so does the log");
    let stored = read_log(&paths).map_err(GatewayError::from)?;
    let replayed = match replay(&h.live.session().scenario, &trace) {
        Ok(log) => log,
        Err(e @ GatewayError::InvalidInput(_)) => {
            return Ok(Json(ReplayCheck {
                matches: false,
                stored_samples: stored.samples.len(),
                replayed_samples: None,
                first_difference: None,
                problem: Some(e.to_string()),
            }))
        }
        Err(e) => return Err(e.into()),
    };
    let first_difference = stored
        .samples
        .iter()
        .zip(&replayed.samples)
        .position(|(a, b)| a != b)
        .or_else(|| {
            (stored.samples.len() != replayed.samples.len())
                .then(|| stored.samples.len().min(replayed.samples.len()))
        });
    Ok(Json(ReplayCheck {
        matches: stored == replayed,
        stored_samples: stored.samples.len(),
        replayed_samples: Some(replayed.samples.len()),
        first_difference,
        problem: None,
    }))
}

async fn ws_upgrade(
    State(gw): State<Shared>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Response {
    match gw.session(&id) {
        Ok(handle) => ws.on_upgrade(move |socket| run_socket(gw, handle, socket)),
        Err(e) => ApiError(e).into_response(),
    }
}

struct Outbound {
    socket: WebSocket,
    seq: SeqCounter,
}

impl Outbound {
    async fn send(&mut self, body: WireBody) -> bool {
        let text = serde_json::to_string(&self.seq.wrap(body)).expect("messages serialize");
        self.socket.send(Message::Text(text.into())).await.is_ok()
    }
}

fn error_body(code: &str, message: impl Into<String>) -> WireBody {
    WireBody::Error(ErrorPayload {
        code: code.into(),
        message: message.into(),
        details: vec![],
    })
}

fn event(kind: &str, detail: impl Into<String>, t: Option<f64>) -> WireBody {
    WireBody::Event(EventPayload {
        kind: kind.into(),
        detail: detail.into(),
        t,
    })
}

fn gateway_error(e: &GatewayError) -> WireBody {
    WireBody::Error(error_payload(e))
}

fn report_body(h: &SessionHandle) -> WireBody {
    match session_report(&h.live) {
        Ok(r) => WireBody::Report(serde_json::to_value(r).expect("report serializes")),
        Err(e) => gateway_error(&e),
    }
}

/// What a freshly attached client needs to catch up.
fn greeting(h: &mut SessionHandle) -> Vec<WireBody> {
    let mut out = vec![event("phase", h.live.phase().to_string(), None)];
    match h.live.state() {
        Ok(Some(s)) => out.push(WireBody::State(s)),
        Ok(None) => {}
        Err(e) => out.push(gateway_error(&e)),
    }
    if let Some(q) = h.live.questionnaire_request() {
        out.push(WireBody::QuestionnaireRequest(q));
    }
    if h.live.phase() == Phase::Done {
        out.push(report_body(h));
    }
    out
}

fn on_tick(h: &mut SessionHandle) -> Vec<WireBody> {
    if h.live.phase() != Phase::Trial {
        return vec![];
    }
    let outcome = match h.live.tick() {
        Ok(o) => o,
        Err(e) => return vec![gateway_error(&e)],
    };
    let t = outcome.state.t;
    let mut out = vec![WireBody::State(outcome.state)];
    match outcome.carton_event {
        Some(CartonEvent::Pick) => out.push(event("pick", "", Some(t))),
        Some(CartonEvent::Drop) => out.push(event("drop", "", Some(t))),
        None => {}
    }
    if let Some(done) = outcome.finished {
        out.push(event("trial_completed", done.method.to_string(), Some(t)));
        out.extend(
            h.live
                .questionnaire_request()
                .map(WireBody::QuestionnaireRequest),
        );
    }
    out
}

fn on_text(
    gw: &Gateway,
    h: &mut SessionHandle,
    inbound: &mut SeqValidator,
    text: &str,
) -> Vec<WireBody> {
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return vec![error_body("bad_message", format!("not JSON: {e}"))],
    };
    let msg: WireMessage = match serde_json::from_value(value.clone()) {
        Ok(m) => m,
        Err(e) => {
            let kind = value.get("type").and_then(|t| t.as_str());
            return vec![match kind {
                Some(k) if !KNOWN_TYPES.contains(&k) => {
                    error_body("unknown_type", format!("unknown message type `{k}`"))
                }
                _ => error_body("bad_message", e.to_string()),
            }];
        }
    };
    match inbound.accept(msg.seq) {
        Ok(SeqCheck::InOrder) => {}
        Ok(SeqCheck::Gap { missing }) => log::debug!("client skipped {missing} seq value(s)"),
        Err(e) => return vec![error_body("bad_seq", e)],
    }
    match msg.body {
        WireBody::Input(p) => match h.live.input(p.velocity()) {
            Ok(true) => {
                let method = h
                    .live
                    .session()
                    .current_method()
                    .map(ToString::to_string)
                    .unwrap_or_default();
                vec![
                    event("phase", Phase::Trial.to_string(), None),
                    event("trial_started", method, Some(0.0)),
                ]
            }
            Ok(false) => vec![],
            // Inputs still in flight when a trial ends are dropped quietly.
            Err(GatewayError::WrongPhase {
                actual: Phase::Questionnaire | Phase::Done,
                ..
            }) => vec![],
            Err(e) => vec![gateway_error(&e)],
        },
        WireBody::QuestionnaireSubmit(p) => match gw.submit(h, &p.method, p.items) {
            Ok(phase) => {
                let mut out = vec![event("questionnaire_accepted", p.method.to_string(), None)];
                out.push(event("phase", phase.to_string(), None));
                match phase {
                    Phase::Trial => {
                        let method = h
                            .live
                            .session()
                            .current_method()
                            .map(ToString::to_string)
                            .unwrap_or_default();
                        out.push(event("trial_started", method, Some(0.0)));
                        if let Ok(Some(s)) = h.live.state() {
                            out.push(WireBody::State(s));
                        }
                    }
                    Phase::Done => out.push(report_body(h)),
                    _ => {}
                }
                out
            }
            Err(e) => vec![gateway_error(&e)],
        },
        other => vec![error_body(
            "unexpected_type",
            format!("`{}` messages are sent by the server only", other.kind()),
        )],
    }
}

async fn run_socket(gw: Shared, handle: crate::store::SharedSession, socket: WebSocket) {
    let mut out = Outbound {
        socket,
        seq: SeqCounter::default(),
    };
    let hello = {
        let mut h = handle.lock().await;
        if h.connected {
            None
        } else {
            h.connected = true;
            Some(greeting(&mut h))
        }
    };
    let Some(hello) = hello else {
        out.send(error_body(
            "already_connected",
            "another client is driving this session",
        ))
        .await;
        return;
    };
    let mut open = true;
    for b in hello {
        open &= out.send(b).await;
    }
    let mut inbound = SeqValidator::default();
    let mut ticker = tokio::time::interval(gw.tick_interval());
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    while open {
        let bodies = tokio::select! {
            _ = ticker.tick() => on_tick(&mut *handle.lock().await),
            msg = out.socket.recv() => match msg {
                Some(Ok(Message::Text(t))) => on_text(&gw, &mut *handle.lock().await, &mut inbound, t.as_str()),
                Some(Ok(Message::Binary(_))) => vec![error_body("bad_message", "binary frames are not accepted")],
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => vec![],
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            },
        };
        for b in bodies {
            if !out.send(b).await {
                open = false;
                break;
            }
        }
    }
    handle.lock().await.connected = false;
}
