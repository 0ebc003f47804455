//! RoSAS questionnaire: item roster, factor scoring, normalization,
//! internal consistency, per-method aggregation, and response files.

use crate::scenario::MethodId;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub const SCALE_MIN: i64 = 1;
pub const SCALE_MAX: i64 = 9;
/// Alpha strictly above this marks high internal consistency.
pub const HIGH_IC_THRESHOLD: f64 = 0.90;

pub const WARMTH: [&str; 6] = [
    "happy",
    "feeling",
    "social",
    "organic",
    "compassionate",
    "emotional",
];
pub const COMPETENCE: [&str; 6] = [
    "capable",
    "responsive",
    "interactive",
    "reliable",
    "competent",
    "knowledgeable",
];
pub const DISCOMFORT: [&str; 6] = [
    "scary",
    "strange",
    "awkward",
    "dangerous",
    "awful",
    "aggressive",
];

/// All 18 items in roster order.
pub const ITEMS: [&str; 18] = [
    "happy",
    "feeling",
    "social",
    "organic",
    "compassionate",
    "emotional",
    "capable",
    "responsive",
    "interactive",
    "reliable",
    "competent",
    "knowledgeable",
    "scary",
    "strange",
    "awkward",
    "dangerous",
    "awful",
    "aggressive",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    Warmth,
    Competence,
    Discomfort,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Warmth, Factor::Competence, Factor::Discomfort];

    pub fn items(self) -> &'static [&'static str; 6] {
        match self {
            Factor::Warmth => &WARMTH,
            Factor::Competence => &COMPETENCE,
            Factor::Discomfort => &DISCOMFORT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Warmth => "warmth",
            Factor::Competence => "competence",
            Factor::Discomfort => "discomfort",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RosasError {
    #[error("missing item `{0}`")]
    MissingItem(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{item}` scored {value}, outside 1-9")]
    ItemOutOfRange { item: String, value: i64 },
    #[error("factor score {0} outside [1, 9]")]
    ScoreOutOfRange(f64),
    #[error("alpha is undefined: total score variance is zero")]
    UndefinedAlpha,
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("row {row} has {got} items, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("no responses for method {0}")]
    EmptyGroup(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosasResponse {
    pub participant_id: String,
    pub method: MethodId,
    pub items: BTreeMap<String, i64>,
}

impl RosasResponse {
    /// Every problem with the item set, in roster order then unknown names.
    pub fn item_errors(&self) -> Vec<RosasError> {
        let mut errs = vec![];
        for item in ITEMS {
            match self.items.get(item) {
                None => errs.push(RosasError::MissingItem(item.into())),
                Some(&v) if !(SCALE_MIN..=SCALE_MAX).contains(&v) => {
                    errs.push(RosasError::ItemOutOfRange {
                        item: item.into(),
                        value: v,
                    })
                }
                _ => {}
            }
        }
        for name in self.items.keys() {
            if !ITEMS.contains(&name.as_str()) {
                errs.push(RosasError::UnknownItem(name.clone()));
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<(), RosasError> {
        self.item_errors().into_iter().next().map_or(Ok(()), Err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    pub warmth: f64,
    pub competence: f64,
    pub discomfort: f64,
}

impl FactorScores {
    pub fn get(&self, f: Factor) -> f64 {
        match f {
            Factor::Warmth => self.warmth,
            Factor::Competence => self.competence,
            Factor::Discomfort => self.discomfort,
        }
    }

    pub fn normalized(&self) -> Result<FactorScores, RosasError> {
        Ok(FactorScores {
            warmth: normalize_factor(self.warmth)?,
            competence: normalize_factor(self.competence)?,
            discomfort: normalize_factor(self.discomfort)?,
        })
    }
}

/// Mean of each factor's six items.
pub fn score_response(resp: &RosasResponse) -> Result<FactorScores, RosasError> {
    resp.validate()?;
    let mean = |f: Factor| f.items().iter().map(|i| resp.items[*i] as f64).sum::<f64>() / 6.0;
    Ok(FactorScores {
        warmth: mean(Factor::Warmth),
        competence: mean(Factor::Competence),
        discomfort: mean(Factor::Discomfort),
    })
}

/// Maps the 1-9 scale onto [0, 1].
pub fn normalize_factor(score: f64) -> Result<f64, RosasError> {
    if !(SCALE_MIN as f64..=SCALE_MAX as f64).contains(&score) {
        return Err(RosasError::ScoreOutOfRange(score));
    }
    Ok((score - 1.0) / 8.0)
}

fn sample_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Cronbach's alpha over a respondents-by-items matrix (sample variances).
pub fn cronbach_alpha(rows: &[Vec<f64>]) -> Result<f64, RosasError> {
    if rows.len() < 2 {
        return Err(RosasError::TooFew {
            what: "respondents",
            need: 2,
            got: rows.len(),
        });
    }
    let k = rows[0].len();
    if k < 2 {
        return Err(RosasError::TooFew {
            what: "items",
            need: 2,
            got: k,
        });
    }
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(RosasError::Ragged {
            row,
            got: r.len(),
            expected: k,
        });
    }
    let item_var: f64 = (0..k)
        .map(|j| sample_variance(rows.iter().map(move |r| r[j])))
        .sum();
    let total_var = sample_variance(rows.iter().map(|r| r.iter().sum::<f64>()));
    if total_var <= 0.0 {
        return Err(RosasError::UndefinedAlpha);
    }
    Ok(k as f64 / (k as f64 - 1.0) * (1.0 - item_var / total_var))
}

pub fn is_high_ic(alpha: f64) -> bool {
    alpha > HIGH_IC_THRESHOLD
}

/// Alpha of each factor's six items across `responses`.
pub fn factor_alphas(responses: &[RosasResponse]) -> Result<BTreeMap<Factor, f64>, RosasError> {
    for r in responses {
        r.validate()?;
    }
    Factor::ALL
        .iter()
        .map(|&f| {
            let rows: Vec<Vec<f64>> = responses
                .iter()
                .map(|r| f.items().iter().map(|i| r.items[*i] as f64).collect())
                .collect();
            cronbach_alpha(&rows).map(|a| (f, a))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorStat {
    /// Mean normalized score.
    pub mean: f64,
    /// Sample standard deviation over sqrt(n); 0 when n = 1.
    pub se: f64,
    pub n: usize,
    /// False when n = 1, where the sample variance does not exist.
    pub se_defined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcmAggregate {
    pub warmth: FactorStat,
    pub competence: FactorStat,
    pub discomfort: FactorStat,
}

impl HcmAggregate {
    pub fn get(&self, f: Factor) -> &FactorStat {
        match f {
            Factor::Warmth => &self.warmth,
            Factor::Competence => &self.competence,
            Factor::Discomfort => &self.discomfort,
        }
    }
}

fn factor_stat(xs: &[f64]) -> FactorStat {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return FactorStat {
            mean,
            se: 0.0,
            n,
            se_defined: false,
        };
    }
    let sd = sample_variance(xs.iter().copied()).sqrt();
    FactorStat {
        mean,
        se: sd / (n as f64).sqrt(),
        n,
        se_defined: true,
    }
}

/// Normalized factor means and standard errors, grouped by method.
pub fn aggregate_hcm(
    responses: &[RosasResponse],
) -> Result<BTreeMap<MethodId, HcmAggregate>, RosasError> {
    let mut groups: BTreeMap<MethodId, Vec<FactorScores>> = BTreeMap::new();
    for r in responses {
        groups
            .entry(r.method.clone())
            .or_default()
            .push(score_response(r)?.normalized()?);
    }
    if groups.is_empty() {
        return Err(RosasError::EmptyGroup("any".into()));
    }
    Ok(groups
        .into_iter()
        .map(|(m, scores)| {
            let col = |f: Factor| scores.iter().map(|s| s.get(f)).collect::<Vec<_>>();
            let agg = HcmAggregate {
                warmth: factor_stat(&col(Factor::Warmth)),
                competence: factor_stat(&col(Factor::Competence)),
                discomfort: factor_stat(&col(Factor::Discomfort)),
            };
            (m, agg)
        })
        .collect())
}

/// Per-method aggregates for exactly the requested methods; a method with
/// no responses is an error.
pub fn aggregate_hcm_for(
    responses: &[RosasResponse],
    methods: &[MethodId],
) -> Result<BTreeMap<MethodId, HcmAggregate>, RosasError> {
    let all = aggregate_hcm(responses)?;
    methods
        .iter()
        .map(|m| {
            all.get(m)
                .map(|a| (m.clone(), *a))
                .ok_or_else(|| RosasError::EmptyGroup(m.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDefinition {
    pub id: String,
    pub factor: Factor,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireDefinition {
    pub instrument: String,
    pub scale_min: u8,
    pub scale_max: u8,
    pub prompt: String,
    pub anchors: BTreeMap<String, String>,
    pub items: Vec<ItemDefinition>,
}

const BUNDLED_DEFINITION: &str = include_str!("../data/rosas_items.json");

/// The bundled questionnaire shown to participants.
pub fn questionnaire() -> QuestionnaireDefinition {
    serde_json::from_str(BUNDLED_DEFINITION).expect("bundled questionnaire definition is valid")
}

/// Roster items in the order shown to participant `participant_index`:
/// a shuffle seeded by the index, so it is fixed per participant.
pub fn presentation_order(participant_index: u64) -> Vec<&'static str> {
    let mut items = ITEMS.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000_0000_0000 ^ participant_index);
    items.shuffle(&mut rng);
    items
}

/// A response-file problem, with the 1-based line (CSV) or element (JSON) number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("{} error(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Rows(Vec<RowError>),
}

fn check(row: usize, resp: RosasResponse, errors: &mut Vec<RowError>) -> Option<RosasResponse> {
    let errs = resp.item_errors();
    if errs.is_empty() {
        return Some(resp);
    }
    errors.extend(errs.into_iter().map(|e| RowError {
        row,
        message: e.to_string(),
    }));
    None
}

/// CSV with `participant_id`, `method`, then one column per item (any order).
pub fn parse_responses_csv(text: &str) -> Result<Vec<RosasResponse>, ImportError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = match r.headers() {
        Ok(h) => h.iter().map(String::from).collect(),
        Err(e) => {
            return Err(ImportError::Rows(vec![RowError {
                row: 1,
                message: e.to_string(),
            }]))
        }
    };
    let mut errors = vec![];
    for required in ["participant_id", "method"] {
        if !headers.iter().any(|h| h == required) {
            errors.push(RowError {
                row: 1,
                message: format!("missing column `{required}`"),
            });
        }
    }
    if !errors.is_empty() {
        return Err(ImportError::Rows(errors));
    }
    let mut out = vec![];
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                errors.push(RowError {
                    row,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let mut participant = String::new();
        let mut method = None;
        let mut items = BTreeMap::new();
        let mut bad = false;
        for (h, v) in headers.iter().zip(rec.iter()) {
            match h.as_str() {
                "participant_id" => participant = v.to_string(),
                "method" => match v.parse::<MethodId>() {
                    Ok(m) => method = Some(m),
                    Err(e) => {
                        errors.push(RowError {
                            row,
                            message: e.to_string(),
                        });
                        bad = true;
                    }
                },
                item => match v.parse::<i64>() {
                    Ok(x) => {
                        items.insert(item.to_string(), x);
                    }
                    Err(_) => {
                        errors.push(RowError {
                            row,
                            message: format!("item `{item}`: `{v}` is not an integer"),
                        });
                        bad = true;
                    }
                },
            }
        }
        if participant.is_empty() {
            errors.push(RowError {
                row,
                message: "empty participant_id".into(),
            });
            bad = true;
        }
        if let (Some(method), false) = (method, bad) {
            out.extend(check(
                row,
                RosasResponse {
                    participant_id: participant,
                    method,
                    items,
                },
                &mut errors,
            ));
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(ImportError::Rows(errors))
    }
}

/// JSON array of response objects.
pub fn parse_responses_json(text: &str) -> Result<Vec<RosasResponse>, ImportError> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| {
        ImportError::Rows(vec![RowError {
            row: e.line(),
            message: e.to_string(),
        }])
    })?;
    let mut errors = vec![];
    let mut out = vec![];
    for (i, v) in values.into_iter().enumerate() {
        let row = i + 1;
        match serde_json::from_value::<RosasResponse>(v) {
            Ok(resp) => out.extend(check(row, resp, &mut errors)),
            Err(e) => errors.push(RowError {
                row,
                message: e.to_string(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(ImportError::Rows(errors))
    }
}

/// Reads a CSV or JSON response file, chosen by extension.
pub fn read_responses(path: &Path) -> Result<Vec<RosasResponse>, ImportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ImportError::Io {
        path: path.into(),
        source,
    })?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        parse_responses_json(&text)
    } else {
        parse_responses_csv(&text)
    }
}

/// CSV in the import format, roster column order.
pub fn responses_to_csv(responses: &[RosasResponse]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["participant_id", "method"];
    header.extend(ITEMS);
    w.write_record(&header).expect("in-memory write");
    for r in responses {
        let mut row = vec![r.participant_id.clone(), r.method.to_string()];
        row.extend(
            ITEMS
                .iter()
                .map(|i| r.items.get(*i).map_or(String::new(), |v| v.to_string())),
        );
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
