//! Interactive sessions over HTTP and WebSocket.
//!
//! A participant steers the pedestrian live against each method in a
//! counterbalanced order and rates every method right after its trial.
//! Message schemas are described in `PROTOCOL.md` next to this crate.

pub mod replay;
pub mod report;
pub mod server;
pub mod session;
pub mod store;

use socbench_core::metrics::MetricError;
use socbench_core::planners::PolicyError;
use socbench_core::rosas::RosasError;
use socbench_core::scenario::ScenarioError;
use socbench_core::sim::SimError;
use socbench_core::{Layout, MethodId, ScenarioOverrides};
use std::path::PathBuf;
use std::time::Duration;
use thiserror::Error;

pub use replay::replay;
pub use report::{session_report, SessionRecord, SessionReport};
pub use server::{router, serve};
pub use session::{
    CompletedTrial, InputRecord, InputTrace, LiveSession, Phase, Session, TickOutcome,
};
pub use store::{Gateway, SessionHandle, RESPONSES_FILE, SESSIONS_DIR};

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    /// Sessions, live logs and the response store live here.
    pub data_dir: PathBuf,
    pub scenario: ScenarioOverrides,
    /// Layout used when the overrides do not name one.
    pub layout: Layout,
    /// Methods every participant runs, before counterbalancing.
    pub methods: Vec<MethodId>,
    /// Wall-clock time between ticks; `None` runs in real time.
    pub tick_interval: Option<Duration>,
}

impl GatewayConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            data_dir: data_dir.into(),
            scenario: ScenarioOverrides::default(),
            layout: Layout::Coinciding,
            methods: MethodId::BUILTIN.to_vec(),
            tick_interval: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid participant id `{0}`")]
    InvalidParticipant(String),
    #[error("participant `{participant}` already has session {session}")]
    DuplicateParticipant {
        participant: String,
        session: String,
    },
    #[error("no session `{0}`")]
    UnknownSession(String),
    #[error("session is in phase {actual}, expected {expected}")]
    WrongPhase {
        expected: session::Phase,
        actual: session::Phase,
    },
    #[error("questionnaire is for {expected}, not {got}")]
    WrongMethod { expected: MethodId, got: MethodId },
    #[error("response rejected: {}", .0.join("; "))]
    InvalidResponse(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid gateway configuration: {0}")]
    InvalidConfig(String),
    #[error("session incomplete, missing: {}", missing.join(", "))]
    Incomplete { missing: Vec<String> },
    #[error("a different response from `{participant}` for {method} is already stored")]
    AlreadyStored {
        participant: String,
        method: MethodId,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Rosas(#[from] RosasError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("cannot listen: {0}")]
    Bind(std::io::Error),
}

impl GatewayError {
    /// Stable code carried by error messages and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::InvalidParticipant(_) => "invalid_participant",
            GatewayError::DuplicateParticipant { .. } => "duplicate_participant",
            GatewayError::UnknownSession(_) => "unknown_session",
            GatewayError::WrongPhase { .. } | GatewayError::WrongMethod { .. } => "phase",
            GatewayError::InvalidResponse(_) => "invalid_response",
            GatewayError::InvalidInput(_) => "invalid_input",
            GatewayError::Incomplete { .. } => "incomplete",
            GatewayError::AlreadyStored { .. } => "already_stored",
            GatewayError::InvalidConfig(_) | GatewayError::Scenario(_) => "invalid_config",
            _ => "internal",
        }
    }

    /// Item-level or phase-level detail lines.
    pub fn details(&self) -> Vec<String> {
        match self {
            GatewayError::InvalidResponse(items) => items.clone(),
            GatewayError::Incomplete { missing } => missing.clone(),
            _ => vec![],
        }
    }
}
