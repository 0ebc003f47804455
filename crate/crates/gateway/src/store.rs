//! All sessions of one data directory plus the shared response store.

use crate::session::{check_participant_id, LiveSession, Phase, SESSION_FILE};
use crate::{GatewayConfig, GatewayError};
use socbench_core::rosas::RosasResponse;
use socbench_core::sim::write_atomic;
use socbench_core::{build_scenario, ScenarioConfig};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

pub const SESSIONS_DIR: &str = "sessions";
/// JSON array of every accepted questionnaire response, readable by
/// `bench report --responses`.
pub const RESPONSES_FILE: &str = "responses.json";

/// One session behind its own lock; holding the lock serializes the
/// session's events.
pub struct SessionHandle {
    pub live: LiveSession,
    /// A socket is attached. Only one may drive a session at a time.
    pub connected: bool,
}

pub type SharedSession = Arc<tokio::sync::Mutex<SessionHandle>>;

#[derive(Default)]
struct Registry {
    sessions: BTreeMap<String, SharedSession>,
    /// participant id -> session id
    participants: BTreeMap<String, String>,
}

pub struct Gateway {
    config: GatewayConfig,
    scenario: ScenarioConfig,
    registry: Mutex<Registry>,
    responses: Mutex<()>,
}

impl Gateway {
    /// Opens `config.data_dir`, reloading every session stored there.
    pub fn open(config: GatewayConfig) -> Result<Self, GatewayError> {
        let layout = config.scenario.layout.unwrap_or(config.layout);
        let scenario = build_scenario(layout, &config.scenario)?;
        if config.methods.is_empty() {
            return Err(GatewayError::InvalidConfig("no methods to run".into()));
        }
        let dir = config.data_dir.join(SESSIONS_DIR);
        std::fs::create_dir_all(&dir).map_err(|source| GatewayError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut registry = Registry::default();
        let entries = std::fs::read_dir(&dir).map_err(|source| GatewayError::Io {
            path: dir.clone(),
            source,
        })?;
        for entry in entries {
            let path = entry
                .map_err(|source| GatewayError::Io {
                    path: dir.clone(),
                    source,
                })?
                .path();
            if !path.join(SESSION_FILE).is_file() {
                continue;
            }
            let live = LiveSession::load(path)?;
            let s = live.session();
            registry
                .participants
                .insert(s.participant_id.clone(), s.session_id.clone());
            let id = s.session_id.clone();
            if live.phase() == Phase::Trial {
                log::info!("session {id}: restarting the interrupted trial");
            }
            registry.sessions.insert(
                id,
                Arc::new(tokio::sync::Mutex::new(SessionHandle {
                    live,
                    connected: false,
                })),
            );
        }
        log::info!(
            "{} session(s) loaded from {}",
            registry.sessions.len(),
            dir.display()
        );
        Ok(Gateway {
            config,
            scenario,
            registry: Mutex::new(registry),
            responses: Mutex::new(()),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    /// Wall-clock time between simulation ticks.
    pub fn tick_interval(&self) -> Duration {
        self.config
            .tick_interval
            .unwrap_or_else(|| Duration::from_secs_f64(self.scenario.control_dt))
    }

    pub fn responses_path(&self) -> PathBuf {
        self.config.data_dir.join(RESPONSES_FILE)
    }

    /// Creates a session for a new participant. Participants are indexed in
    /// creation order; each id may hold only one session.
    pub fn create_session(&self, participant_id: &str) -> Result<SharedSession, GatewayError> {
        check_participant_id(participant_id)?;
        let mut reg = self.registry.lock().expect("registry lock");
        if let Some(existing) = reg.participants.get(participant_id) {
            return Err(GatewayError::DuplicateParticipant {
                participant: participant_id.to_string(),
                session: existing.clone(),
            });
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let index = reg.sessions.len() as u64;
        let dir = self.config.data_dir.join(SESSIONS_DIR).join(&id);
        let live = LiveSession::create(
            dir,
            id.clone(),
            participant_id.to_string(),
            index,
            self.scenario.clone(),
            &self.config.methods,
        )?;
        log::info!("session {id} created for participant `{participant_id}` (index {index})");
        let handle = Arc::new(tokio::sync::Mutex::new(SessionHandle {
            live,
            connected: false,
        }));
        reg.sessions.insert(id.clone(), handle.clone());
        reg.participants.insert(participant_id.to_string(), id);
        Ok(handle)
    }

    pub fn session(&self, id: &str) -> Result<SharedSession, GatewayError> {
        let reg = self.registry.lock().expect("registry lock");
        reg.sessions
            .get(id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.registry
            .lock()
            .expect("registry lock")
            .sessions
            .keys()
            .cloned()
            .collect()
    }

    /// Validates and stores a questionnaire response, then advances the
    /// session. The shared store is written before the session so a crash
    /// in between is repaired by resubmitting.
    pub fn submit(
        &self,
        handle: &mut SessionHandle,
        method: &socbench_core::MethodId,
        items: BTreeMap<String, i64>,
    ) -> Result<Phase, GatewayError> {
        let response = handle.live.check_response(method, items)?;
        self.append_response(&response)?;
        handle.live.accept_response(response)
    }

    /// Appends to the response store. Appends are serialized and a stored
    /// (participant, method) pair is never overwritten; resubmitting the
    /// identical response is a no-op.
    fn append_response(&self, response: &RosasResponse) -> Result<(), GatewayError> {
        let _guard = self.responses.lock().expect("response store lock");
        let path = self.responses_path();
        let mut all = read_store(&path)?;
        if let Some(prev) = all
            .iter()
            .find(|r| r.participant_id == response.participant_id && r.method == response.method)
        {
            if prev == response {
                return Ok(());
            }
            return Err(GatewayError::AlreadyStored {
                participant: response.participant_id.clone(),
                method: response.method.clone(),
            });
        }
        all.push(response.clone());
        let bytes = serde_json::to_vec_pretty(&all).expect("responses serialize");
        write_atomic(&path, &bytes)?;
        Ok(())
    }

    pub fn stored_responses(&self) -> Result<Vec<RosasResponse>, GatewayError> {
        let _guard = self.responses.lock().expect("response store lock");
        read_store(&self.responses_path())
    }
}

fn read_store(path: &Path) -> Result<Vec<RosasResponse>, GatewayError> {
    match std::fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| GatewayError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(vec![]),
        Err(source) => Err(GatewayError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}
