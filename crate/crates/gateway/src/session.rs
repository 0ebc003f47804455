//! Session state machine, independent of the transport.
//!
//! A session walks one participant through every method in its assigned
//! order: a live trial, then the questionnaire for that method, then the
//! next trial. `session.json` is rewritten at every phase boundary, so a
//! restart loses at most the trial in flight.

use crate::GatewayError;
use serde::{Deserialize, Serialize};
use socbench_core::planners::{make_policy, PolicyRegistry};
use socbench_core::rosas::{
    presentation_order, questionnaire, RosasResponse, SCALE_MAX, SCALE_MIN,
};
use socbench_core::scenario::{latin_square_order, CartonEvent};
use socbench_core::sim::{
    log_stem, write_atomic, write_log, LogPaths, PedestrianMode, Simulation, TrialKind, TrialLog,
};
use socbench_core::wire::{QuestionnaireItem, QuestionnaireRequestPayload, StatePayload};
use socbench_core::{Layout, MethodId, ScenarioConfig, Vec2};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

pub const SESSION_FILE: &str = "session.json";
pub const LOG_DIR: &str = "logs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Briefing,
    Trial,
    Questionnaire,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Briefing => "briefing",
            Phase::Trial => "trial",
            Phase::Questionnaire => "questionnaire",
            Phase::Done => "done",
        })
    }
}

/// A steering input as applied: before simulation step `tick`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub tick: u64,
    pub vx: f64,
    pub vy: f64,
}

/// Everything needed to re-run a live trial offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTrace {
    pub method: MethodId,
    pub layout: Layout,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<InputRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedTrial {
    pub method: MethodId,
    /// File stem of the log and trace under the session's `logs/`.
    pub log_stem: String,
    pub ticks: u64,
    /// Whether the task finished before the timeout.
    pub completed: bool,
}

/// The persisted part of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub participant_id: String,
    /// Creation rank; selects the Latin square row and the item order.
    pub participant_index: u64,
    pub method_order: Vec<MethodId>,
    pub current_phase: Phase,
    /// Position in `method_order` of the method being run or rated.
    pub current: usize,
    /// Seed recorded in every live log of this session.
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub trials: Vec<CompletedTrial>,
    pub responses: Vec<RosasResponse>,
}

impl Session {
    pub fn current_method(&self) -> Option<&MethodId> {
        (self.current_phase != Phase::Done).then(|| &self.method_order[self.current])
    }

    /// Phases not yet completed, e.g. `questionnaire 2 (SNL)`.
    pub fn missing_phases(&self) -> Vec<String> {
        let mut missing = vec![];
        for (i, m) in self.method_order.iter().enumerate() {
            if self.trials.len() <= i {
                missing.push(format!("trial {} ({m})", i + 1));
            }
            if self.responses.len() <= i {
                missing.push(format!("questionnaire {} ({m})", i + 1));
            }
        }
        missing
    }
}

/// What one simulation tick produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub state: StatePayload,
    pub carton_event: Option<CartonEvent>,
    /// Set on the tick that ended the trial.
    pub finished: Option<CompletedTrial>,
}

struct LiveTrial {
    sim: Simulation,
    trace: InputTrace,
}

/// A session plus its in-memory trial.
pub struct LiveSession {
    dir: PathBuf,
    session: Session,
    live: Option<LiveTrial>,
}

/// Validates a participant id: 1 to 64 printable characters.
pub fn check_participant_id(id: &str) -> Result<(), GatewayError> {
    if id.is_empty()
        || id.chars().count() > 64
        || id.chars().any(char::is_control)
        || id.trim() != id
    {
        return Err(GatewayError::InvalidParticipant(id.to_string()));
    }
    Ok(())
}

impl LiveSession {
    /// Creates and persists a session. The method order is row
    /// `participant_index` of the cyclic Latin square over `methods`.
    pub fn create(
        dir: PathBuf,
        session_id: String,
        participant_id: String,
        participant_index: u64,
        scenario: ScenarioConfig,
        methods: &[MethodId],
    ) -> Result<Self, GatewayError> {
        check_participant_id(&participant_id)?;
        scenario.validate()?;
        if methods.is_empty() {
            return Err(GatewayError::InvalidConfig("no methods to run".into()));
        }
        for m in methods {
            make_policy(m, &scenario, &PolicyRegistry::new())?;
        }
        let rows = latin_square_order(methods.len(), participant_index as usize + 1)?;
        let order = rows[participant_index as usize]
            .iter()
            .map(|&i| methods[i].clone())
            .collect();
        let session = Session {
            session_id,
            participant_id,
            participant_index,
            method_order: order,
            current_phase: Phase::Briefing,
            current: 0,
            seed: participant_index,
            scenario,
            trials: vec![],
            responses: vec![],
        };
        let s = LiveSession {
            dir,
            session,
            live: None,
        };
        s.persist()?;
        Ok(s)
    }

    /// Reloads a persisted session. A trial that was running when the
    /// session was last saved starts over.
    pub fn load(dir: PathBuf) -> Result<Self, GatewayError> {
        let path = dir.join(SESSION_FILE);
        let bytes = std::fs::read(&path).map_err(|source| GatewayError::Io {
            path: path.clone(),
            source,
        })?;
        let session: Session =
            serde_json::from_slice(&bytes).map_err(|e| GatewayError::Format {
                path,
                message: e.to_string(),
            })?;
        Ok(LiveSession {
            dir,
            session,
            live: None,
        })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn phase(&self) -> Phase {
        self.session.current_phase
    }

    fn persist(&self) -> Result<(), GatewayError> {
        let bytes = serde_json::to_vec_pretty(&self.session).expect("session serializes");
        write_atomic(&self.dir.join(SESSION_FILE), &bytes)?;
        Ok(())
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), GatewayError> {
        if self.phase() != expected {
            return Err(GatewayError::WrongPhase {
                expected,
                actual: self.phase(),
            });
        }
        Ok(())
    }

    fn start_trial(&mut self) -> Result<(), GatewayError> {
        let s = &self.session;
        let method = s.method_order[s.current].clone();
        let sim = Simulation::new(
            &s.scenario,
            TrialKind::Trial,
            Some(&method),
            PedestrianMode::Live,
            s.seed,
            &PolicyRegistry::new(),
        )?;
        let trace = InputTrace {
            method,
            layout: s.scenario.layout,
            seed: s.seed,
            config_hash: s.scenario.config_hash(),
            inputs: vec![],
        };
        self.live = Some(LiveTrial { sim, trace });
        Ok(())
    }

    fn live_trial(&mut self) -> Result<&mut LiveTrial, GatewayError> {
        if self.live.is_none() {
            self.start_trial()?;
        }
        Ok(self.live.as_mut().expect("trial just started"))
    }

    /// Latest steering input. The first input ends the briefing.
    /// Returns true if this input started the first trial.
    pub fn input(&mut self, velocity: Vec2) -> Result<bool, GatewayError> {
        if !velocity.is_finite() {
            return Err(GatewayError::InvalidInput("velocity must be finite".into()));
        }
        let started = self.phase() == Phase::Briefing;
        if started {
            self.session.current_phase = Phase::Trial;
            self.persist()?;
        }
        self.expect_phase(Phase::Trial)?;
        let live = self.live_trial()?;
        let tick = live.sim.tick();
        live.sim.set_live_input(velocity);
        live.trace.inputs.push(InputRecord {
            tick,
            vx: velocity.x,
            vy: velocity.y,
        });
        Ok(started)
    }

    /// Advances the live trial one control step. The tick that ends the
    /// trial writes its log and input trace and opens the questionnaire.
    pub fn tick(&mut self) -> Result<TickOutcome, GatewayError> {
        self.expect_phase(Phase::Trial)?;
        let live = self.live_trial()?;
        let carton_event = live.sim.step()?.carton_event;
        let state = live.sim.state_payload();
        if !live.sim.is_finished() {
            return Ok(TickOutcome {
                state,
                carton_event,
                finished: None,
            });
        }
        let live = self.live.take().expect("trial is running");
        let done = self.store_trial(live.sim.finish(), &live.trace)?;
        self.session.trials.push(done.clone());
        self.session.current_phase = Phase::Questionnaire;
        self.persist()?;
        Ok(TickOutcome {
            state,
            carton_event,
            finished: Some(done),
        })
    }

    fn store_trial(
        &self,
        log: TrialLog,
        trace: &InputTrace,
    ) -> Result<CompletedTrial, GatewayError> {
        let dir = self.dir.join(LOG_DIR);
        write_log(&dir, &log)?;
        let stem = log_stem(&log.meta);
        let bytes = serde_json::to_vec_pretty(trace).expect("trace serializes");
        write_atomic(&dir.join(format!("{stem}.inputs.json")), &bytes)?;
        Ok(CompletedTrial {
            method: trace.method.clone(),
            log_stem: stem,
            ticks: log.samples.len() as u64 - 1,
            completed: log.completed,
        })
    }

    /// Current world state: the running trial, or the room before it starts.
    pub fn state(&mut self) -> Result<Option<StatePayload>, GatewayError> {
        match self.phase() {
            Phase::Trial | Phase::Briefing => {
                let live = self.live_trial()?;
                Ok(Some(live.sim.state_payload()))
            }
            _ => Ok(None),
        }
    }

    /// The questionnaire for the method just run, items in this
    /// participant's presentation order.
    pub fn questionnaire_request(&self) -> Option<QuestionnaireRequestPayload> {
        if self.phase() != Phase::Questionnaire {
            return None;
        }
        let texts: BTreeMap<String, String> = questionnaire()
            .items
            .into_iter()
            .map(|i| (i.id, i.text))
            .collect();
        let items = presentation_order(self.session.participant_index)
            .into_iter()
            .map(|id| QuestionnaireItem {
                id: id.to_string(),
                text: texts.get(id).cloned().unwrap_or_default(),
            })
            .collect();
        Some(QuestionnaireRequestPayload {
            method: self.session.method_order[self.session.current].clone(),
            scale_min: SCALE_MIN as u8,
            scale_max: SCALE_MAX as u8,
            items,
        })
    }

    /// Checks a submission without changing anything.
    pub fn check_response(
        &self,
        method: &MethodId,
        items: BTreeMap<String, i64>,
    ) -> Result<RosasResponse, GatewayError> {
        self.expect_phase(Phase::Questionnaire)?;
        let expected = &self.session.method_order[self.session.current];
        if method != expected {
            return Err(GatewayError::WrongMethod {
                expected: expected.clone(),
                got: method.clone(),
            });
        }
        let response = RosasResponse {
            participant_id: self.session.participant_id.clone(),
            method: method.clone(),
            items,
        };
        let errors = response.item_errors();
        if !errors.is_empty() {
            return Err(GatewayError::InvalidResponse(
                errors.iter().map(ToString::to_string).collect(),
            ));
        }
        Ok(response)
    }

    /// Records a response that passed [`check_response`](Self::check_response)
    /// and moves on to the next trial, or to done.
    pub fn accept_response(&mut self, response: RosasResponse) -> Result<Phase, GatewayError> {
        self.expect_phase(Phase::Questionnaire)?;
        self.session.responses.push(response);
        self.session.current += 1;
        if self.session.current == self.session.method_order.len() {
            self.session.current -= 1;
            self.session.current_phase = Phase::Done;
        } else {
            self.session.current_phase = Phase::Trial;
        }
        self.persist()?;
        if self.phase() == Phase::Trial {
            self.start_trial()?;
        }
        Ok(self.phase())
    }

    /// Log and trace locations of completed trial `index`.
    pub fn trial_paths(&self, index: usize) -> Option<(LogPaths, PathBuf)> {
        let t = self.session.trials.get(index)?;
        let dir = self.dir.join(LOG_DIR);
        Some((
            LogPaths::in_dir(&dir, &t.log_stem),
            dir.join(format!("{}.inputs.json", t.log_stem)),
        ))
    }
}
