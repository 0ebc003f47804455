//! Per-session report: robot metrics from each persisted live log joined
//! with the questionnaire scores for the same method.

use crate::session::{LiveSession, Phase};
use crate::GatewayError;
use serde::{Deserialize, Serialize};
use socbench_core::metrics::{compute_rcm, RcmReport};
use socbench_core::planners::PolicyRegistry;
use socbench_core::rosas::{score_response, FactorScores};
use socbench_core::sim::{read_log, run_baseline, run_human_baseline};
use socbench_core::stats::{HcmRecord, RcmRecord};
use socbench_core::{Layout, MethodId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub method: MethodId,
    /// 1-based position in the participant's method order.
    pub position: usize,
    pub log_stem: String,
    pub rcm: RcmReport,
    /// Factor means on the 1 to 9 scale.
    pub scores: FactorScores,
    /// The same means mapped to [0, 1].
    pub normalized: FactorScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub participant_id: String,
    pub layout: Layout,
    pub records: Vec<SessionRecord>,
}

impl SessionReport {
    pub fn rcm_records(&self) -> Vec<RcmRecord> {
        self.records
            .iter()
            .map(|r| RcmRecord {
                participant_id: self.participant_id.clone(),
                method: r.method.clone(),
                values: r.rcm.values(),
            })
            .collect()
    }

    pub fn hcm_records(&self) -> Vec<HcmRecord> {
        self.records
            .iter()
            .map(|r| HcmRecord {
                participant_id: self.participant_id.clone(),
                method: r.method.clone(),
                scores: r.scores,
            })
            .collect()
    }
}

/// Builds the report of a finished session. Robot metrics come from the
/// logs on disk against freshly simulated baselines for the same seed.
pub fn session_report(live: &LiveSession) -> Result<SessionReport, GatewayError> {
    let s = live.session();
    if live.phase() != Phase::Done {
        return Err(GatewayError::Incomplete {
            missing: s.missing_phases(),
        });
    }
    let cfg = &s.scenario;
    let human = run_human_baseline(cfg, s.seed)?;
    let t_h = human.human_task_time.ok_or_else(|| {
        GatewayError::InvalidConfig("the pedestrian baseline does not finish its task".into())
    })?;
    let registry = PolicyRegistry::new();
    let mut records = vec![];
    for (i, (trial, response)) in s.trials.iter().zip(&s.responses).enumerate() {
        let (paths, _) = live.trial_paths(i).expect("trial index in range");
        let log = read_log(&paths)?;
        let baseline = run_baseline(cfg, &trial.method, s.seed, &registry)?;
        let rcm = compute_rcm(std::slice::from_ref(&log), &baseline, t_h, cfg)?;
        let scores = score_response(response)?;
        records.push(SessionRecord {
            method: trial.method.clone(),
            position: i + 1,
            log_stem: trial.log_stem.clone(),
            rcm,
            normalized: scores.normalized()?,
            scores,
        });
    }
    Ok(SessionReport {
        session_id: s.session_id.clone(),
        participant_id: s.participant_id.clone(),
        layout: cfg.layout,
        records,
    })
}
