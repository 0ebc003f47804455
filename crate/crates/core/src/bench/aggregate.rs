use super::import::ImportedResponses;
use super::run::{plan_jobs, Job, Manifest, MANIFEST_FILE};
use super::{
    AlphaEntry, AnovaRow, BenchError, BenchmarkPlan, BenchmarkReport, CellReport, HcmSection,
    MethodSummary, Provenance, TrendCheck, TrialFailure,
};
use crate::metrics::{compute_rcm, RcmValues};
use crate::rosas::{
    aggregate_hcm, cronbach_alpha, is_high_ic, score_response, Factor, RosasResponse,
};
use crate::scenario::{Layout, MethodId};
use crate::sim::{read_log, TrialKind, TrialLog};
use crate::stats::{correlation_table, one_way_anova, HcmRecord, RcmRecord};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Logs of one (method, layout) cell. `Err` holds why a run has no log.
#[derive(Debug, Clone)]
pub struct CellLogs {
    pub method: MethodId,
    pub layout: Layout,
    pub baseline: Result<TrialLog, String>,
    pub trials: Vec<(u64, Result<TrialLog, String>)>,
}

fn load(dir: &Path, manifest: &Manifest, job: &Job) -> Result<TrialLog, String> {
    if let Some(reason) = manifest.failure(job) {
        return Err(reason.to_string());
    }
    read_log(&job.paths(dir)).map_err(|e| e.to_string())
}

/// Rebuilds the report of a finished run from its manifest and logs.
pub fn aggregate_from_dir(
    dir: &Path,
    responses: Option<&ImportedResponses>,
) -> Result<BenchmarkReport, BenchError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| BenchError::Io {
        path: path.clone(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| BenchError::Format {
        path,
        message: e.to_string(),
    })?;
    let plan = &manifest.plan;

    let mut human = BTreeMap::new();
    let mut cells: Vec<CellLogs> = vec![];
    for job in plan_jobs(plan) {
        let log = load(dir, &manifest, &job);
        match (job.kind, &job.method) {
            (TrialKind::HumanBaseline, _) => {
                human.insert(job.layout, log);
            }
            (TrialKind::Baseline, Some(m)) => cells.push(CellLogs {
                method: m.clone(),
                layout: job.layout,
                baseline: log,
                trials: vec![],
            }),
            (TrialKind::Trial, Some(_)) => {
                cells
                    .last_mut()
                    .expect("baseline precedes trials")
                    .trials
                    .push((job.seed, log));
            }
            _ => unreachable!("plan jobs always carry a method"),
        }
    }
    aggregate_logs(plan, &human, &cells, responses)
}

fn human_time(log: &Result<TrialLog, String>) -> Result<f64, String> {
    match log {
        Ok(l) => l
            .human_task_time
            .ok_or_else(|| "human baseline did not finish its task".to_string()),
        Err(e) => Err(format!("human baseline failed: {e}")),
    }
}

struct CellOutcome {
    report: CellReport,
    per_trial: Vec<(u64, RcmValues)>,
}

fn cell_outcome(
    plan: &BenchmarkPlan,
    human: &BTreeMap<Layout, Result<TrialLog, String>>,
    cell: &CellLogs,
) -> CellOutcome {
    let trial_failures: Vec<TrialFailure> = cell
        .trials
        .iter()
        .filter_map(|(seed, r)| {
            r.as_ref().err().map(|e| TrialFailure {
                seed: *seed,
                reason: e.clone(),
            })
        })
        .collect();
    let logs: Vec<TrialLog> = cell
        .trials
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().cloned())
        .collect();
    let mut report = CellReport {
        method: cell.method.clone(),
        layout: cell.layout,
        report: None,
        failure: None,
        trial_failures,
    };

    let computed = (|| -> Result<_, String> {
        let t_h = human_time(human.get(&cell.layout).unwrap_or(&Err("not run".into())))?;
        let baseline = cell
            .baseline
            .as_ref()
            .map_err(|e| format!("robot baseline failed: {e}"))?;
        if logs.is_empty() {
            return Err("every trial failed".into());
        }
        let cfg = plan.config_for(cell.layout).map_err(|e| e.to_string())?;
        let rcm = compute_rcm(&logs, baseline, t_h, &cfg).map_err(|e| e.to_string())?;
        let per_trial = rcm.per_trial().map_err(|e| e.to_string())?;
        Ok((rcm, per_trial))
    })();
    match computed {
        Ok((rcm, per_trial)) => {
            let seeds = rcm.ingredients.trials.iter().map(|t| t.seed);
            let per_trial = seeds.zip(per_trial).collect();
            report.report = Some(rcm);
            CellOutcome { report, per_trial }
        }
        Err(e) => {
            log::warn!("{} on {}: {e}", cell.method, cell.layout);
            report.failure = Some(e);
            CellOutcome {
                report,
                per_trial: vec![],
            }
        }
    }
}

fn mean_values(v: &[RcmValues]) -> RcmValues {
    let n = v.len() as f64;
    let mean = |f: fn(&RcmValues) -> f64| v.iter().map(f).sum::<f64>() / n;
    RcmValues {
        r_extra_robot: mean(|x| x.r_extra_robot),
        r_extra_human: mean(|x| x.r_extra_human),
        r_dist: mean(|x| x.r_dist),
        r_succ: mean(|x| x.r_succ),
        r_haza: mean(|x| x.r_haza),
        r_dec: mean(|x| x.r_dec),
    }
}

fn anova_row(measure: &str, groups: &[Vec<f64>]) -> AnovaRow {
    match one_way_anova(groups) {
        Ok(r) => AnovaRow {
            measure: measure.into(),
            result: Some(r),
            error: None,
        },
        Err(e) => AnovaRow {
            measure: measure.into(),
            result: None,
            error: Some(e.to_string()),
        },
    }
}

fn trends(methods: &[MethodSummary]) -> Vec<TrendCheck> {
    let get = |m: MethodId| methods.iter().find(|s| s.method == m).map(|s| s.rcm);
    let (Some(snl), Some(tdp), Some(mb)) =
        (get(MethodId::Snl), get(MethodId::Tdp), get(MethodId::Mb))
    else {
        return vec![];
    };
    let checks = [
        TrendCheck {
            name: "tdp_highest_r_dist".into(),
            holds: tdp.r_dist >= snl.r_dist && tdp.r_dist >= mb.r_dist,
            detail: format!(
                "TDP {:.3}, SNL {:.3}, MB {:.3}",
                tdp.r_dist, snl.r_dist, mb.r_dist
            ),
        },
        TrendCheck {
            name: "tdp_lowest_r_extra_robot".into(),
            holds: tdp.r_extra_robot <= snl.r_extra_robot && tdp.r_extra_robot <= mb.r_extra_robot,
            detail: format!(
                "TDP {:.3}, SNL {:.3}, MB {:.3}",
                tdp.r_extra_robot, snl.r_extra_robot, mb.r_extra_robot
            ),
        },
    ];
    for c in checks.iter().filter(|c| !c.holds) {
        log::warn!("expected ordering `{}` does not hold: {}", c.name, c.detail);
    }
    checks.to_vec()
}

/// Builds the report from in-memory logs.
pub fn aggregate_logs(
    plan: &BenchmarkPlan,
    human: &BTreeMap<Layout, Result<TrialLog, String>>,
    cells: &[CellLogs],
    responses: Option<&ImportedResponses>,
) -> Result<BenchmarkReport, BenchError> {
    let outcomes: Vec<CellOutcome> = cells.iter().map(|c| cell_outcome(plan, human, c)).collect();
    if outcomes.iter().all(|o| o.report.report.is_none()) {
        return Err(BenchError::NoSuccessfulCells);
    }

    let mut by_method: BTreeMap<&MethodId, Vec<(Layout, u64, RcmValues)>> = BTreeMap::new();
    for (cell, o) in cells.iter().zip(&outcomes) {
        let e = by_method.entry(&cell.method).or_default();
        e.extend(o.per_trial.iter().map(|(s, v)| (cell.layout, *s, *v)));
    }
    let methods: Vec<MethodSummary> = plan
        .methods
        .iter()
        .filter_map(|m| {
            let v: Vec<RcmValues> = by_method.get(m)?.iter().map(|x| x.2).collect();
            (!v.is_empty()).then(|| MethodSummary {
                method: m.clone(),
                rcm: mean_values(&v),
                n_trials: v.len(),
            })
        })
        .collect();

    let anova = RcmValues::NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let groups: Vec<Vec<f64>> = plan
                .methods
                .iter()
                .filter_map(|m| by_method.get(m))
                .filter(|v| !v.is_empty())
                .map(|v| v.iter().map(|x| x.2.in_table_order()[j]).collect())
                .collect();
            anova_row(name, &groups)
        })
        .collect();

    let hcm = responses
        .map(|r| hcm_section(plan, &by_method, r))
        .transpose()?;

    let mut config_hashes = BTreeMap::new();
    for &l in &plan.layouts {
        config_hashes.insert(l, plan.config_for(l)?.config_hash());
    }
    let trends = trends(&methods);
    Ok(BenchmarkReport {
        provenance: Provenance {
            plan_hash: plan.provenance_hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: plan.trial_seeds().to_vec(),
            config_hashes,
        },
        cells: outcomes.into_iter().map(|o| o.report).collect(),
        methods,
        anova,
        hcm,
        trends,
    })
}

/// Participants, sorted by id, take the trial seeds in order: participant
/// `i` is paired with the trials run under seed `i` for every method.
fn rcm_records(
    plan: &BenchmarkPlan,
    by_method: &BTreeMap<&MethodId, Vec<(Layout, u64, RcmValues)>>,
    responses: &[RosasResponse],
    warnings: &mut Vec<String>,
) -> Vec<RcmRecord> {
    let participants: BTreeSet<&str> = responses
        .iter()
        .map(|r| r.participant_id.as_str())
        .collect();
    let seeds = plan.trial_seeds();
    if participants.len() > seeds.len() {
        warnings.push(format!(
            "{} participants but only {} trial seeds; the extra participants are not correlated",
            participants.len(),
            seeds.len()
        ));
    }
    let mut out = vec![];
    for (p, &seed) in participants.iter().zip(seeds) {
        for (m, rows) in by_method {
            let v: Vec<RcmValues> = rows.iter().filter(|r| r.1 == seed).map(|r| r.2).collect();
            if !v.is_empty() {
                out.push(RcmRecord {
                    participant_id: p.to_string(),
                    method: (*m).clone(),
                    values: mean_values(&v),
                });
            }
        }
    }
    out
}

fn hcm_section(
    plan: &BenchmarkPlan,
    by_method: &BTreeMap<&MethodId, Vec<(Layout, u64, RcmValues)>>,
    imported: &ImportedResponses,
) -> Result<HcmSection, BenchError> {
    let responses = &imported.responses;
    let mut warnings = imported.warnings.clone();
    let aggregates = aggregate_hcm(responses)?;

    let alphas = Factor::ALL
        .iter()
        .map(|&f| {
            let rows: Vec<Vec<f64>> = responses
                .iter()
                .map(|r| f.items().iter().map(|i| r.items[*i] as f64).collect())
                .collect();
            let entry = match cronbach_alpha(&rows) {
                Ok(alpha) => Some(AlphaEntry {
                    alpha,
                    high_ic: is_high_ic(alpha),
                }),
                Err(e) => {
                    warnings.push(format!("{} alpha: {e}", f.as_str()));
                    None
                }
            };
            (f, entry)
        })
        .collect();

    let scored: Vec<HcmRecord> = responses
        .iter()
        .map(|r| {
            score_response(r).map(|scores| HcmRecord {
                participant_id: r.participant_id.clone(),
                method: r.method.clone(),
                scores,
            })
        })
        .collect::<Result<_, _>>()?;

    let methods: BTreeSet<&MethodId> = scored.iter().map(|h| &h.method).collect();
    let anova = Factor::ALL
        .iter()
        .map(|&f| {
            let groups: Vec<Vec<f64>> = methods
                .iter()
                .map(|m| {
                    scored
                        .iter()
                        .filter(|h| &h.method == *m)
                        .map(|h| h.scores.get(f))
                        .collect()
                })
                .collect();
            anova_row(f.as_str(), &groups)
        })
        .collect();

    let rcm = rcm_records(plan, by_method, responses, &mut warnings);
    let (correlation, correlation_error) = match correlation_table(&rcm, &scored) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(HcmSection {
        aggregates,
        alphas,
        anova,
        correlation,
        correlation_error,
        warnings,
    })
}
