//! Robot-centered metrics computed from trial logs.
//!
//! Distances are footprint clearances: centroid distance minus both radii.

use crate::scenario::ScenarioConfig;
use crate::sim::TrialLog;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("d_safe ({d_safe}) must be below d_social ({d_social})")]
    Thresholds { d_safe: f64, d_social: f64 },
    #[error("baseline did not complete; its task time is undefined")]
    IncompleteBaseline,
}

fn positive(what: &'static str, value: f64) -> Result<f64, MetricError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(MetricError::NonPositive { what, value })
    }
}

/// Task time alone over task time with people present.
pub fn robot_extra_time_ratio(t_r: f64, t_rh: f64) -> Result<f64, MetricError> {
    Ok(positive("T_r", t_r)? / positive("T_rh", t_rh)?)
}

/// Human task time alone over task time with the robot present.
pub fn human_extra_time_ratio(t_h: f64, t_hr: f64) -> Result<f64, MetricError> {
    Ok(positive("T_h", t_h)? / positive("T_hr", t_hr)?)
}

pub fn extra_distance_ratio(d_r: f64, d_rh: f64) -> Result<f64, MetricError> {
    Ok(positive("D_r", d_r)? / positive("D_rh", d_rh)?)
}

/// A trial succeeds when it completed without any contact.
pub fn trial_succeeded(log: &TrialLog) -> bool {
    log.completed && log.collision_count == 0
}

pub fn success_ratio(logs: &[TrialLog]) -> Result<f64, MetricError> {
    if logs.is_empty() {
        return Err(MetricError::Empty("trial list"));
    }
    let n_succ = logs.iter().filter(|l| trial_succeeded(l)).count();
    Ok(n_succ as f64 / logs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonExposure {
    /// Seconds spent closer than `d_safe`.
    pub t_hazard: f64,
    /// Seconds spent closer than `d_social`.
    pub t_social: f64,
}

pub fn person_exposure(
    log: &TrialLog,
    d_safe: f64,
    d_social: f64,
) -> Result<Vec<PersonExposure>, MetricError> {
    if !(d_safe < d_social) {
        return Err(MetricError::Thresholds { d_safe, d_social });
    }
    let n = log.samples.first().map_or(0, |s| s.humans.len());
    let mut counts = vec![(0u64, 0u64); n];
    for k in 0..log.samples.len() {
        for (i, d) in log.clearances(k).enumerate() {
            counts[i].0 += u64::from(d < d_safe);
            counts[i].1 += u64::from(d < d_social);
        }
    }
    Ok(counts
        .into_iter()
        .map(|(h, s)| PersonExposure {
            t_hazard: log.dt * h as f64,
            t_social: log.dt * s as f64,
        })
        .collect())
}

/// Mean over people ever within `d_social` of time within `d_safe` over time
/// within `d_social`; 0 when nobody came that close.
pub fn hazard_ratio_from(per_person: &[PersonExposure]) -> f64 {
    let near: Vec<f64> = per_person
        .iter()
        .filter(|p| p.t_social > 0.0)
        .map(|p| p.t_hazard / p.t_social)
        .collect();
    if near.is_empty() {
        0.0
    } else {
        near.iter().sum::<f64>() / near.len() as f64
    }
}

pub fn hazard_ratio(log: &TrialLog, d_safe: f64, d_social: f64) -> Result<f64, MetricError> {
    Ok(hazard_ratio_from(&person_exposure(log, d_safe, d_social)?))
}

/// Near-person samples and the sum of their speed fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecelerationSums {
    pub samples: usize,
    pub speed_fraction_sum: f64,
}

impl DecelerationSums {
    pub fn ratio(&self) -> f64 {
        if self.samples == 0 {
            1.0
        } else {
            self.speed_fraction_sum / self.samples as f64
        }
    }
}

pub fn deceleration_sums(
    log: &TrialLog,
    d_social: f64,
    v_max: f64,
) -> Result<DecelerationSums, MetricError> {
    positive("v_max", v_max)?;
    let mut sums = DecelerationSums {
        samples: 0,
        speed_fraction_sum: 0.0,
    };
    for (k, s) in log.samples.iter().enumerate() {
        if log.clearances(k).any(|d| d < d_social) {
            sums.samples += 1;
            sums.speed_fraction_sum += s.robot.speed / v_max;
        }
    }
    Ok(sums)
}

/// Mean robot speed, as a fraction of `v_max`, over samples where someone is
/// within `d_social`; 1.0 when no such sample exists.
pub fn deceleration_ratio(log: &TrialLog, d_social: f64, v_max: f64) -> Result<f64, MetricError> {
    Ok(deceleration_sums(log, d_social, v_max)?.ratio())
}

/// Everything one trial contributes to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialIngredients {
    pub seed: u64,
    /// Robot task time; the last sample time if the robot never finished.
    pub t_rh: f64,
    /// Human task time; the last sample time if the person never finished.
    pub t_hr: f64,
    pub d_rh: f64,
    pub succeeded: bool,
    pub per_person: Vec<PersonExposure>,
    pub dec: DecelerationSums,
}

/// Per-trial values of the six metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcmValues {
    pub r_extra_robot: f64,
    pub r_extra_human: f64,
    pub r_dist: f64,
    pub r_succ: f64,
    pub r_haza: f64,
    pub r_dec: f64,
}

impl RcmValues {
    /// Column order used by the analysis tables.
    pub const NAMES: [&'static str; 6] = [
        "r_haza",
        "r_extra_human",
        "r_dist",
        "r_dec",
        "r_extra_robot",
        "r_succ",
    ];

    pub fn in_table_order(&self) -> [f64; 6] {
        [
            self.r_haza,
            self.r_extra_human,
            self.r_dist,
            self.r_dec,
            self.r_extra_robot,
            self.r_succ,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Ingredients {
    pub T_r: f64,
    /// Mean over trials.
    pub T_rh: f64,
    pub T_h: f64,
    /// Mean over trials.
    pub T_hr: f64,
    pub D_r: f64,
    /// Mean over trials.
    pub D_rh: f64,
    pub N_succ: usize,
    pub N: usize,
    /// All trials' people, trial by trial.
    pub per_person: Vec<PersonExposure>,
    pub dec_samples: usize,
    pub v_max: f64,
    pub trials: Vec<TrialIngredients>,
}

/// The six ratios, each the mean of its per-trial values (success is the
/// fraction of successful trials), with the raw ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcmReport {
    pub r_extra_robot: f64,
    pub r_extra_human: f64,
    pub r_dist: f64,
    pub r_succ: f64,
    pub r_haza: f64,
    pub r_dec: f64,
    pub ingredients: Ingredients,
}

impl RcmReport {
    pub fn values(&self) -> RcmValues {
        RcmValues {
            r_extra_robot: self.r_extra_robot,
            r_extra_human: self.r_extra_human,
            r_dist: self.r_dist,
            r_succ: self.r_succ,
            r_haza: self.r_haza,
            r_dec: self.r_dec,
        }
    }

    /// Per-trial metric values, in trial order.
    pub fn per_trial(&self) -> Result<Vec<RcmValues>, MetricError> {
        let ing = &self.ingredients;
        ing.trials
            .iter()
            .map(|t| trial_values(ing.T_r, ing.T_h, ing.D_r, t))
            .collect()
    }

    /// Recomputes all six ratios from the stored ingredients.
    pub fn recompute(&self) -> Result<RcmValues, MetricError> {
        mean_values(&self.per_trial()?)
    }
}

fn trial_values(
    t_r: f64,
    t_h: f64,
    d_r: f64,
    t: &TrialIngredients,
) -> Result<RcmValues, MetricError> {
    Ok(RcmValues {
        r_extra_robot: robot_extra_time_ratio(t_r, t.t_rh)?,
        r_extra_human: human_extra_time_ratio(t_h, t.t_hr)?,
        r_dist: extra_distance_ratio(d_r, t.d_rh)?,
        r_succ: if t.succeeded { 1.0 } else { 0.0 },
        r_haza: hazard_ratio_from(&t.per_person),
        r_dec: t.dec.ratio(),
    })
}

fn mean_values(v: &[RcmValues]) -> Result<RcmValues, MetricError> {
    if v.is_empty() {
        return Err(MetricError::Empty("trial list"));
    }
    let n = v.len() as f64;
    let mean = |f: fn(&RcmValues) -> f64| v.iter().map(f).sum::<f64>() / n;
    Ok(RcmValues {
        r_extra_robot: mean(|x| x.r_extra_robot),
        r_extra_human: mean(|x| x.r_extra_human),
        r_dist: mean(|x| x.r_dist),
        r_succ: mean(|x| x.r_succ),
        r_haza: mean(|x| x.r_haza),
        r_dec: mean(|x| x.r_dec),
    })
}

pub fn trial_ingredients(
    log: &TrialLog,
    cfg: &ScenarioConfig,
) -> Result<TrialIngredients, MetricError> {
    let last = log.last_time();
    Ok(TrialIngredients {
        seed: log.meta.seed,
        t_rh: log.robot_task_time.unwrap_or(last),
        t_hr: log.human_task_time.unwrap_or(last),
        d_rh: log.robot_path_length,
        succeeded: trial_succeeded(log),
        per_person: person_exposure(log, cfg.d_safe, cfg.d_social)?,
        dec: deceleration_sums(log, cfg.d_social, cfg.v_max_robot)?,
    })
}

pub fn compute_rcm(
    trials: &[TrialLog],
    baseline: &TrialLog,
    human_baseline_time: f64,
    cfg: &ScenarioConfig,
) -> Result<RcmReport, MetricError> {
    if trials.is_empty() {
        return Err(MetricError::Empty("trial list"));
    }
    let t_r = baseline
        .robot_task_time
        .ok_or(MetricError::IncompleteBaseline)?;
    let d_r = baseline.robot_path_length;
    let per_trial = trials
        .iter()
        .map(|l| trial_ingredients(l, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let values = per_trial
        .iter()
        .map(|t| trial_values(t_r, human_baseline_time, d_r, t))
        .collect::<Result<Vec<_>, _>>()?;
    let m = mean_values(&values)?;
    let n = per_trial.len() as f64;
    let ingredients = Ingredients {
        T_r: t_r,
        T_rh: per_trial.iter().map(|t| t.t_rh).sum::<f64>() / n,
        T_h: human_baseline_time,
        T_hr: per_trial.iter().map(|t| t.t_hr).sum::<f64>() / n,
        D_r: d_r,
        D_rh: per_trial.iter().map(|t| t.d_rh).sum::<f64>() / n,
        N_succ: per_trial.iter().filter(|t| t.succeeded).count(),
        N: per_trial.len(),
        per_person: per_trial
            .iter()
            .flat_map(|t| t.per_person.iter().copied())
            .collect(),
        dec_samples: per_trial.iter().map(|t| t.dec.samples).sum(),
        v_max: cfg.v_max_robot,
        trials: per_trial,
    };
    Ok(RcmReport {
        r_extra_robot: m.r_extra_robot,
        r_extra_human: m.r_extra_human,
        r_dist: m.r_dist,
        r_succ: m.r_succ,
        r_haza: m.r_haza,
        r_dec: m.r_dec,
        ingredients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_and_distance_ratios() {
        assert_eq!(robot_extra_time_ratio(24.0, 32.0).unwrap(), 0.75);
        assert_eq!(robot_extra_time_ratio(30.0, 30.0).unwrap(), 1.0);
        assert_eq!(human_extra_time_ratio(45.0, 50.0).unwrap(), 0.9);
        assert_eq!(human_extra_time_ratio(50.0, 50.0).unwrap(), 1.0);
        assert_eq!(extra_distance_ratio(18.0, 20.0).unwrap(), 0.9);
        assert!(matches!(
            robot_extra_time_ratio(0.0, 1.0),
            Err(MetricError::NonPositive { what: "T_r", .. })
        ));
        assert!(extra_distance_ratio(1.0, -1.0).is_err());
    }

    #[test]
    fn hazard_from_counts() {
        let p = [PersonExposure {
            t_hazard: 1.5,
            t_social: 3.0,
        }];
        assert_eq!(hazard_ratio_from(&p), 0.5);
        assert_eq!(
            hazard_ratio_from(&[PersonExposure {
                t_hazard: 0.0,
                t_social: 0.0
            }]),
            0.0
        );
        let mixed = [
            p[0],
            PersonExposure {
                t_hazard: 0.0,
                t_social: 0.0,
            },
        ];
        assert_eq!(hazard_ratio_from(&mixed), 0.5);
    }

    #[test]
    fn deceleration_degenerate_case() {
        assert_eq!(
            DecelerationSums {
                samples: 0,
                speed_fraction_sum: 0.0
            }
            .ratio(),
            1.0
        );
    }
}
