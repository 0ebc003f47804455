use super::BenchError;
use crate::rosas::{read_responses, ImportError, RosasResponse, RowError};
use crate::scenario::MethodId;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedResponses {
    pub responses: Vec<RosasResponse>,
    /// Non-fatal findings, such as an unbalanced presentation order.
    pub warnings: Vec<String>,
}

/// Reads a CSV or JSON response file, rejecting malformed rows and
/// duplicate (participant, method) pairs with their row numbers.
pub fn import_responses(path: &Path) -> Result<ImportedResponses, BenchError> {
    let responses = read_responses(path)?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let first_row = if is_json { 1 } else { 2 };
    let mut seen = BTreeMap::new();
    let mut errors = vec![];
    for (i, r) in responses.iter().enumerate() {
        let row = first_row + i;
        if let Some(prev) = seen.insert((r.participant_id.as_str(), &r.method), row) {
            errors.push(RowError {
                row,
                message: format!(
                    "duplicate response for participant `{}` and method {} (first at row {prev})",
                    r.participant_id, r.method
                ),
            });
        }
    }
    if !errors.is_empty() {
        return Err(ImportError::Rows(errors).into());
    }
    let warnings = order_warnings(&responses);
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(ImportedResponses {
        responses,
        warnings,
    })
}

/// Checks that, taking each participant's responses in file order as their
/// presentation order, every method occupies every position equally often.
pub fn order_warnings(responses: &[RosasResponse]) -> Vec<String> {
    let mut sequences: BTreeMap<&str, Vec<&MethodId>> = BTreeMap::new();
    for r in responses {
        sequences
            .entry(r.participant_id.as_str())
            .or_default()
            .push(&r.method);
    }
    let methods: BTreeSet<&MethodId> = responses.iter().map(|r| &r.method).collect();
    let mut warnings = vec![];
    let incomplete: Vec<&str> = sequences
        .iter()
        .filter(|(_, s)| s.len() != methods.len())
        .map(|(p, _)| *p)
        .collect();
    if !incomplete.is_empty() {
        warnings.push(format!(
            "{} participant(s) did not rate all {} methods: {}",
            incomplete.len(),
            methods.len(),
            incomplete.join(", ")
        ));
    }
    let positions = sequences.values().map(Vec::len).max().unwrap_or(0);
    for pos in 0..positions {
        let mut counts: BTreeMap<&MethodId, usize> = methods.iter().map(|m| (*m, 0)).collect();
        for seq in sequences.values() {
            if let Some(m) = seq.get(pos) {
                *counts.get_mut(m).expect("method is known") += 1;
            }
        }
        let lo = counts.values().min().copied().unwrap_or(0);
        let hi = counts.values().max().copied().unwrap_or(0);
        if lo != hi {
            let detail: Vec<String> = counts.iter().map(|(m, c)| format!("{m}={c}")).collect();
            warnings.push(format!(
                "position {} is unbalanced: {}",
                pos + 1,
                detail.join(" ")
            ));
        }
    }
    warnings
}
