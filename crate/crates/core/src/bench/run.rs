use super::aggregate::aggregate_from_dir;
use super::{BenchError, BenchmarkPlan, BenchmarkReport};
use crate::planners::PolicyRegistry;
use crate::scenario::{Layout, MethodId, ScenarioConfig};
use crate::sim::{
    log_stem, run_baseline, run_human_baseline, run_trial_with, write_atomic, write_log, LogPaths,
    TrialKind, TrialLog, TrialMeta,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub(crate) const LOG_DIR: &str = "logs";
pub(crate) const HUMAN_DIR: &str = "human";

/// One simulation of the plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub kind: TrialKind,
    pub method: Option<MethodId>,
    pub layout: Layout,
    pub seed: u64,
}

impl Job {
    fn meta(&self) -> TrialMeta {
        TrialMeta {
            kind: self.kind,
            method: self.method.clone(),
            layout: self.layout,
            seed: self.seed,
            ped_mode: None,
            config_hash: String::new(),
        }
    }

    pub(crate) fn paths(&self, out: &Path) -> LogPaths {
        LogPaths::in_dir(&self.dir(out), &log_stem(&self.meta()))
    }

    fn dir(&self, out: &Path) -> PathBuf {
        match self.kind {
            TrialKind::HumanBaseline => out.join(LOG_DIR).join(HUMAN_DIR),
            _ => out.join(LOG_DIR),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFailure {
    pub job: Job,
    pub reason: String,
}

/// Written next to the logs so a report can be rebuilt without re-simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub plan: BenchmarkPlan,
    pub failures: Vec<JobFailure>,
}

impl Manifest {
    pub(crate) fn failure(&self, job: &Job) -> Option<&str> {
        self.failures
            .iter()
            .find(|f| &f.job == job)
            .map(|f| f.reason.as_str())
    }
}

/// Every simulation of the plan, in a fixed order.
pub(crate) fn plan_jobs(plan: &BenchmarkPlan) -> Vec<Job> {
    let base_seed = plan.trial_seeds()[0];
    let mut jobs = vec![];
    for &layout in &plan.layouts {
        jobs.push(Job {
            kind: TrialKind::HumanBaseline,
            method: None,
            layout,
            seed: base_seed,
        });
        for m in &plan.methods {
            jobs.push(Job {
                kind: TrialKind::Baseline,
                method: Some(m.clone()),
                layout,
                seed: base_seed,
            });
            for &seed in plan.trial_seeds() {
                jobs.push(Job {
                    kind: TrialKind::Trial,
                    method: Some(m.clone()),
                    layout,
                    seed,
                });
            }
        }
    }
    jobs
}

fn simulate(
    job: &Job,
    plan: &BenchmarkPlan,
    cfg: &ScenarioConfig,
    registry: &PolicyRegistry,
) -> Result<TrialLog, String> {
    let method = job.method.as_ref();
    let r = match (job.kind, method) {
        (TrialKind::HumanBaseline, _) => run_human_baseline(cfg, job.seed),
        (TrialKind::Baseline, Some(m)) => run_baseline(cfg, m, job.seed, registry),
        (TrialKind::Trial, Some(m)) => run_trial_with(cfg, m, plan.ped_mode, job.seed, registry),
        (_, None) => return Err("robot job without a method".into()),
    };
    r.map_err(|e| e.to_string())
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".into()
    }
}

fn run_job(
    job: &Job,
    plan: &BenchmarkPlan,
    configs: &BTreeMap<Layout, ScenarioConfig>,
    registry: &PolicyRegistry,
) -> Result<(), String> {
    let paths = job.paths(&plan.output_dir);
    for p in [&paths.csv, &paths.summary] {
        if p.exists() {
            std::fs::remove_file(p).map_err(|e| format!("{}: {e}", p.display()))?;
        }
    }
    let cfg = &configs[&job.layout];
    let log = catch_unwind(AssertUnwindSafe(|| simulate(job, plan, cfg, registry)))
        .map_err(panic_message)??;
    write_log(&job.dir(&plan.output_dir), &log).map_err(|e| e.to_string())?;
    Ok(())
}

pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkReport, BenchError> {
    run_benchmark_with(plan, &PolicyRegistry::new())
}

/// Runs every simulation of the plan (concurrently), persists each log as
/// soon as it finishes, then aggregates the persisted logs.
///
/// Failing or panicking simulations are recorded and the rest continue.
pub fn run_benchmark_with(
    plan: &BenchmarkPlan,
    registry: &PolicyRegistry,
) -> Result<BenchmarkReport, BenchError> {
    plan.validate()?;
    for m in &plan.methods {
        if let MethodId::External(name) = m {
            if !registry.contains(name) {
                return Err(BenchError::InvalidPlan(format!(
                    "no external policy registered as `{name}`"
                )));
            }
        }
    }
    let configs: BTreeMap<Layout, ScenarioConfig> = plan
        .layouts
        .iter()
        .map(|&l| plan.config_for(l).map(|c| (l, c)))
        .collect::<Result<_, _>>()?;
    let out = &plan.output_dir;
    let human_dir = out.join(LOG_DIR).join(HUMAN_DIR);
    std::fs::create_dir_all(&human_dir).map_err(|source| BenchError::Io {
        path: human_dir.clone(),
        source,
    })?;

    let jobs = plan_jobs(plan);
    log::info!("running {} simulations into {}", jobs.len(), out.display());
    let failures: Vec<JobFailure> = jobs
        .par_iter()
        .filter_map(|job| {
            run_job(job, plan, &configs, registry).err().map(|reason| {
                log::warn!(
                    "{:?} {:?} {} seed {} failed: {reason}",
                    job.kind,
                    job.method,
                    job.layout,
                    job.seed
                );
                JobFailure {
                    job: job.clone(),
                    reason,
                }
            })
        })
        .collect();

    let manifest = Manifest {
        plan: plan.clone(),
        failures,
    };
    let path = out.join(MANIFEST_FILE);
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, &bytes)?;

    let report = aggregate_from_dir(out, None)?;
    let path = out.join(REPORT_FILE);
    let bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    write_atomic(&path, &bytes)?;
    Ok(report)
}
