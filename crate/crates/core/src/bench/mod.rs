//! Benchmark orchestration: method x layout x seed grids, persisted logs,
//! aggregation into reports, response import and report export.

mod aggregate;
mod export;
mod import;
mod run;

use crate::metrics::{MetricError, RcmReport, RcmValues};
use crate::rosas::{Factor, HcmAggregate, ImportError, RosasError};
use crate::scenario::{
    build_scenario, Layout, MethodId, ScenarioConfig, ScenarioError, ScenarioOverrides,
};
use crate::sim::{PedestrianMode, SimError};
use crate::stats::{AnovaResult, CorrelationTable};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

pub use aggregate::{aggregate_from_dir, aggregate_logs, CellLogs};
pub use export::{export_report, ExportFormat};
pub use import::{import_responses, ImportedResponses};
pub use run::{run_benchmark, run_benchmark_with, Manifest, MANIFEST_FILE, REPORT_FILE};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Rosas(#[from] RosasError),
    #[error(transparent)]
    Import(#[from] ImportError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("no cell produced a report")]
    NoSuccessfulCells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPlan {
    /// Scenario settings shared by every layout.
    pub scenario: ScenarioOverrides,
    pub methods: Vec<MethodId>,
    pub layouts: Vec<Layout>,
    pub trials_per_cell: usize,
    pub seeds: Vec<u64>,
    pub ped_mode: PedestrianMode,
    pub output_dir: PathBuf,
}

pub const DEFAULT_TRIALS: usize = 20;

impl BenchmarkPlan {
    /// All built-in methods on both layouts, 20 trials with seeds 0-19.
    pub fn default_plan(output_dir: impl Into<PathBuf>) -> Self {
        BenchmarkPlan {
            scenario: ScenarioOverrides::default(),
            methods: MethodId::BUILTIN.to_vec(),
            layouts: Layout::ALL.to_vec(),
            trials_per_cell: DEFAULT_TRIALS,
            seeds: (0..DEFAULT_TRIALS as u64).collect(),
            ped_mode: PedestrianMode::default(),
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.methods.is_empty() {
            return Err(BenchError::InvalidPlan("no methods".into()));
        }
        if self.layouts.is_empty() {
            return Err(BenchError::InvalidPlan("no layouts".into()));
        }
        if self.trials_per_cell == 0 {
            return Err(BenchError::InvalidPlan(
                "trials_per_cell must be at least 1".into(),
            ));
        }
        if self.seeds.len() < self.trials_per_cell {
            return Err(BenchError::InvalidPlan(format!(
                "{} seeds for {} trials per cell",
                self.seeds.len(),
                self.trials_per_cell
            )));
        }
        let mut unique = self.seeds[..self.trials_per_cell].to_vec();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != self.trials_per_cell {
            return Err(BenchError::InvalidPlan("seeds must be distinct".into()));
        }
        self.ped_mode.validate().map_err(BenchError::InvalidPlan)?;
        for l in &self.layouts {
            self.config_for(*l)?;
        }
        Ok(())
    }

    /// Seeds actually run, one per trial.
    pub fn trial_seeds(&self) -> &[u64] {
        &self.seeds[..self.trials_per_cell.min(self.seeds.len())]
    }

    pub fn config_for(&self, layout: Layout) -> Result<ScenarioConfig, ScenarioError> {
        let overrides = ScenarioOverrides {
            layout: None,
            ..self.scenario.clone()
        };
        build_scenario(layout, &overrides)
    }

    /// Hash over every plan field except the output directory.
    pub fn provenance_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("plan serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub plan_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    /// Resolved scenario hash per layout.
    pub config_hashes: BTreeMap<Layout, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: MethodId,
    pub layout: Layout,
    pub report: Option<RcmReport>,
    /// Why the cell has no report (baseline failed, every trial failed, ...).
    pub failure: Option<String>,
    pub trial_failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodId,
    /// Mean of per-trial values over every layout.
    pub rcm: RcmValues,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub measure: String,
    pub result: Option<AnovaResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub alpha: f64,
    pub high_ic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcmSection {
    pub aggregates: BTreeMap<MethodId, HcmAggregate>,
    pub alphas: BTreeMap<Factor, Option<AlphaEntry>>,
    pub anova: Vec<AnovaRow>,
    pub correlation: Option<CorrelationTable>,
    pub correlation_error: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub provenance: Provenance,
    pub cells: Vec<CellReport>,
    pub methods: Vec<MethodSummary>,
    pub anova: Vec<AnovaRow>,
    pub hcm: Option<HcmSection>,
    /// Expected qualitative orderings; informational only.
    pub trends: Vec<TrendCheck>,
}

impl BenchmarkReport {
    pub fn has_failures(&self) -> bool {
        self.cells
            .iter()
            .any(|c| c.report.is_none() || !c.trial_failures.is_empty())
    }

    pub fn cell(&self, method: &MethodId, layout: Layout) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| &c.method == method && c.layout == layout)
    }

    pub fn method(&self, method: &MethodId) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| &m.method == method)
    }
}
