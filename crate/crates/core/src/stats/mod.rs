//! One-way ANOVA, Pearson correlation, and the metric-by-factor
//! correlation table.

pub mod special;

use crate::metrics::RcmValues;
use crate::rosas::{Factor, FactorScores};
use crate::scenario::MethodId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("all groups are constant and equal; F is undefined")]
    Degenerate,
    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite sample")]
    NonFinite,
    #[error("duplicate record for participant `{participant}`, method {method}")]
    DuplicateRecord { participant: String, method: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub ss_between: f64,
    pub ss_within: f64,
    pub df_between: usize,
    pub df_within: usize,
    /// `None` when the within-group sum of squares is zero (F is infinite).
    pub f_value: Option<f64>,
    pub p_value: f64,
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew {
            what: "groups",
            need: 2,
            got: groups.len(),
        });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(StatsError::TooFew {
            what: "samples per group",
            need: 2,
            got: g.len(),
        });
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let (f_value, p_value) = if ss_within > 0.0 {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        (
            Some(f),
            special::f_survival(f, df_between as f64, df_within as f64),
        )
    } else if ss_between > 0.0 {
        (None, 0.0)
    } else {
        return Err(StatsError::Degenerate);
    };
    Ok(AnovaResult {
        ss_between,
        ss_within,
        df_between,
        df_within,
        f_value,
        p_value,
    })
}

/// Sample Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew {
            what: "pairs",
            need: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatsError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Trial-level robot metrics for one (participant, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcmRecord {
    pub participant_id: String,
    pub method: MethodId,
    pub values: RcmValues,
}

/// Questionnaire factors for one (participant, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcmRecord {
    pub participant_id: String,
    pub method: MethodId,
    pub scores: FactorScores,
}

/// Pearson r of each factor (rows) against each metric (columns);
/// `None` where a variance is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<Factor>,
    pub columns: Vec<String>,
    pub entries: Vec<Vec<Option<f64>>>,
    pub n_pairs: usize,
}

impl CorrelationTable {
    pub fn get(&self, factor: Factor, metric: &str) -> Option<f64> {
        let r = self.rows.iter().position(|f| *f == factor)?;
        let c = self.columns.iter().position(|m| m == metric)?;
        self.entries[r][c]
    }
}

/// Joins the records on (participant, method) and correlates every factor
/// with every metric over the joined pairs.
pub fn correlation_table(
    rcm: &[RcmRecord],
    hcm: &[HcmRecord],
) -> Result<CorrelationTable, StatsError> {
    let mut by_key: BTreeMap<(&str, &MethodId), &RcmValues> = BTreeMap::new();
    for r in rcm {
        if by_key
            .insert((r.participant_id.as_str(), &r.method), &r.values)
            .is_some()
        {
            return Err(StatsError::DuplicateRecord {
                participant: r.participant_id.clone(),
                method: r.method.to_string(),
            });
        }
    }
    let mut seen = BTreeMap::new();
    let mut pairs: Vec<(&RcmValues, &FactorScores)> = vec![];
    for h in hcm {
        if seen
            .insert((h.participant_id.as_str(), &h.method), ())
            .is_some()
        {
            return Err(StatsError::DuplicateRecord {
                participant: h.participant_id.clone(),
                method: h.method.to_string(),
            });
        }
        if let Some(v) = by_key.get(&(h.participant_id.as_str(), &h.method)) {
            pairs.push((v, &h.scores));
        }
    }
    if pairs.len() < 2 {
        return Err(StatsError::TooFew {
            what: "joined pairs",
            need: 2,
            got: pairs.len(),
        });
    }
    let metric_cols: Vec<[f64; 6]> = pairs.iter().map(|(v, _)| v.in_table_order()).collect();
    let entries = Factor::ALL
        .iter()
        .map(|&f| {
            let ys: Vec<f64> = pairs.iter().map(|(_, s)| s.get(f)).collect();
            (0..6)
                .map(|j| {
                    let xs: Vec<f64> = metric_cols.iter().map(|m| m[j]).collect();
                    pearson(&xs, &ys).ok()
                })
                .collect()
        })
        .collect();
    Ok(CorrelationTable {
        rows: Factor::ALL.to_vec(),
        columns: RcmValues::NAMES.iter().map(|s| s.to_string()).collect(),
        entries,
        n_pairs: pairs.len(),
    })
}
