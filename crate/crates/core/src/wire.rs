//! JSON message schema shared by the session gateway and out-of-process
//! policies. Units: meters, m/s, seconds, radians.
//!
//! Every message is an object `{"seq": n, "type": "...", "payload": {...}}`.
//! `seq` is strictly increasing per direction; unknown types are rejected.

use crate::geometry::Vec2;
use crate::scenario::MethodId;
use crate::sim::AgentState;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub seq: u64,
    #[serde(flatten)]
    pub body: WireBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum WireBody {
    /// World state, broadcast every tick; also the observation sent to external policies.
    State(StatePayload),
    /// Desired velocity: pedestrian steering from a client, or a policy's command.
    Input(InputPayload),
    Event(EventPayload),
    QuestionnaireRequest(QuestionnaireRequestPayload),
    QuestionnaireSubmit(QuestionnaireSubmitPayload),
    Report(serde_json::Value),
    Error(ErrorPayload),
}

impl WireBody {
    pub fn kind(&self) -> &'static str {
        match self {
            WireBody::State(_) => "state",
            WireBody::Input(_) => "input",
            WireBody::Event(_) => "event",
            WireBody::QuestionnaireRequest(_) => "questionnaire_request",
            WireBody::QuestionnaireSubmit(_) => "questionnaire_submit",
            WireBody::Report(_) => "report",
            WireBody::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub t: f64,
    pub tick: u64,
    pub robot: AgentState,
    pub humans: Vec<AgentState>,
    /// Current robot goal, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Vec2>,
    #[serde(default)]
    pub cartons_delivered: u32,
    #[serde(default)]
    pub carrying: bool,
    #[serde(default)]
    pub completed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputPayload {
    pub vx: f64,
    pub vy: f64,
}

impl InputPayload {
    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPayload {
    /// `pick`, `drop`, `trial_started`, `trial_completed`, `phase`, ...
    pub kind: String,
    #[serde(default)]
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRequestPayload {
    pub method: MethodId,
    pub scale_min: u8,
    pub scale_max: u8,
    /// Items in the order shown to this participant.
    pub items: Vec<QuestionnaireItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireSubmitPayload {
    pub method: MethodId,
    pub items: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
    /// One entry per problem, e.g. per rejected questionnaire item.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

/// Tracks `seq` on one direction of a stream.
#[derive(Debug, Default, Clone)]
pub struct SeqCounter {
    next: u64,
}

impl SeqCounter {
    pub fn take(&mut self) -> u64 {
        let s = self.next;
        self.next += 1;
        s
    }

    pub fn wrap(&mut self, body: WireBody) -> WireMessage {
        WireMessage {
            seq: self.take(),
            body,
        }
    }
}

/// Checks that incoming `seq` values strictly increase; reports gaps.
#[derive(Debug, Default, Clone)]
pub struct SeqValidator {
    last: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqCheck {
    InOrder,
    Gap { missing: u64 },
}

impl SeqValidator {
    pub fn accept(&mut self, seq: u64) -> Result<SeqCheck, String> {
        let check = match self.last {
            Some(last) if seq <= last => return Err(format!("seq {seq} does not follow {last}")),
            Some(last) if seq > last + 1 => SeqCheck::Gap {
                missing: seq - last - 1,
            },
            _ => SeqCheck::InOrder,
        };
        self.last = Some(seq);
        Ok(check)
    }
}
