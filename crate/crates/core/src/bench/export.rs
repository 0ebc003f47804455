use super::{AnovaRow, BenchError, BenchmarkReport, REPORT_FILE};
use crate::metrics::RcmValues;
use crate::rosas::Factor;
use crate::sim::write_atomic;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            "markdown" | "md" => Ok(ExportFormat::Markdown),
            other => Err(format!(
                "unknown format `{other}` (expected json, csv or markdown)"
            )),
        }
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, BenchError> {
    let mut w = csv::Writer::from_writer(vec![]);
    let fail = |e: csv::Error| BenchError::Format {
        path: PathBuf::from("<csv>"),
        message: e.to_string(),
    };
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| BenchError::Format {
        path: PathBuf::from("<csv>"),
        message: e.to_string(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn values_row(v: &RcmValues) -> Vec<String> {
    v.in_table_order().iter().map(|x| x.to_string()).collect()
}

fn anova_rows(rows: &[AnovaRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|a| {
            let r = a.result.as_ref();
            vec![
                a.measure.clone(),
                opt(r.and_then(|r| r.f_value)),
                opt(r.map(|r| r.p_value)),
                r.map(|r| r.df_between.to_string()).unwrap_or_default(),
                r.map(|r| r.df_within.to_string()).unwrap_or_default(),
                a.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

/// Writes the report into `dir` in the requested format and returns the
/// files written.
pub fn export_report(
    report: &BenchmarkReport,
    format: ExportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let files: Vec<(&str, Vec<u8>)> = match format {
        ExportFormat::Json => vec![(
            REPORT_FILE,
            serde_json::to_vec_pretty(report).expect("report serializes"),
        )],
        ExportFormat::Csv => csv_files(report)?,
        ExportFormat::Markdown => vec![("report.md", markdown(report).into_bytes())],
    };
    let mut written = vec![];
    for (name, bytes) in files {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn csv_files(report: &BenchmarkReport) -> Result<Vec<(&'static str, Vec<u8>)>, BenchError> {
    let mut header = vec!["method", "layout", "n_trials", "n_failed"];
    header.extend(RcmValues::NAMES);
    header.push("failure");
    let cells = report
        .cells
        .iter()
        .map(|c| {
            let mut row = vec![c.method.to_string(), c.layout.to_string()];
            match &c.report {
                Some(r) => {
                    row.push(r.ingredients.N.to_string());
                    row.push(c.trial_failures.len().to_string());
                    row.extend(values_row(&r.values()));
                }
                None => {
                    row.push("0".into());
                    row.push(c.trial_failures.len().to_string());
                    row.extend(std::iter::repeat_n(String::new(), 6));
                }
            }
            row.push(c.failure.clone().unwrap_or_default());
            row
        })
        .collect();
    let mut files = vec![("rcm_cells.csv", csv_bytes(&header, cells)?)];

    let mut header = vec!["method", "n_trials"];
    header.extend(RcmValues::NAMES);
    let methods = report
        .methods
        .iter()
        .map(|m| {
            let mut row = vec![m.method.to_string(), m.n_trials.to_string()];
            row.extend(values_row(&m.rcm));
            row
        })
        .collect();
    files.push(("rcm_methods.csv", csv_bytes(&header, methods)?));

    let anova_header = [
        "measure",
        "f_value",
        "p_value",
        "df_between",
        "df_within",
        "error",
    ];
    let mut rows = anova_rows(&report.anova);
    if let Some(h) = &report.hcm {
        rows.extend(anova_rows(&h.anova));
    }
    files.push(("anova.csv", csv_bytes(&anova_header, rows)?));

    if let Some(h) = &report.hcm {
        let header = ["method", "factor", "mean", "se", "n", "se_defined"];
        let rows = h
            .aggregates
            .iter()
            .flat_map(|(m, a)| {
                Factor::ALL.iter().map(move |&f| {
                    let s = a.get(f);
                    vec![
                        m.to_string(),
                        f.as_str().to_string(),
                        s.mean.to_string(),
                        s.se.to_string(),
                        s.n.to_string(),
                        s.se_defined.to_string(),
                    ]
                })
            })
            .collect();
        files.push(("hcm.csv", csv_bytes(&header, rows)?));
        if let Some(t) = &h.correlation {
            let mut header = vec!["factor"];
            header.extend(t.columns.iter().map(String::as_str));
            let rows = t
                .rows
                .iter()
                .zip(&t.entries)
                .map(|(f, es)| {
                    std::iter::once(f.as_str().to_string())
                        .chain(es.iter().map(|e| opt(*e)))
                        .collect()
                })
                .collect();
            files.push(("correlation.csv", csv_bytes(&header, rows)?));
        }
    }
    Ok(files)
}

fn bar(x: f64) -> String {
    let n = (x.clamp(0.0, 1.0) * 20.0).round() as usize;
    format!("{}{}", "#".repeat(n), ".".repeat(20 - n))
}

fn markdown(report: &BenchmarkReport) -> String {
    let mut s = String::from("# Benchmark report\n\n");
    let p = &report.provenance;
    let _ = writeln!(
        s,
        "Plan hash `{}`, version {}, {} seeds.\n",
        p.plan_hash,
        p.code_version,
        p.seeds.len()
    );

    s.push_str("## Robot metrics by method\n\n| method | trials |");
    for n in RcmValues::NAMES {
        let _ = write!(s, " {n} |");
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(6));
    s.push('\n');
    for m in &report.methods {
        let _ = write!(s, "| {} | {} |", m.method, m.n_trials);
        for v in m.rcm.in_table_order() {
            let _ = write!(s, " {v:.3} |");
        }
        s.push('\n');
    }

    let failed: Vec<_> = report
        .cells
        .iter()
        .filter(|c| c.failure.is_some() || !c.trial_failures.is_empty())
        .collect();
    if !failed.is_empty() {
        s.push_str("\n## Failures\n\n");
        for c in failed {
            if let Some(f) = &c.failure {
                let _ = writeln!(s, "- {} on {}: {f}", c.method, c.layout);
            }
            for t in &c.trial_failures {
                let _ = writeln!(
                    s,
                    "- {} on {}, seed {}: {}",
                    c.method, c.layout, t.seed, t.reason
                );
            }
        }
    }

    s.push_str("\n## ANOVA\n\n| measure | F | p |\n|---|---|---|\n");
    let hcm_anova = report.hcm.iter().flat_map(|h| h.anova.iter());
    for a in report.anova.iter().chain(hcm_anova) {
        match &a.result {
            Some(r) => {
                let f = r
                    .f_value
                    .map(|f| format!("{f:.3}"))
                    .unwrap_or_else(|| "inf".into());
                let _ = writeln!(s, "| {} | {f} | {:.4} |", a.measure, r.p_value);
            }
            None => {
                let _ = writeln!(
                    s,
                    "| {} | - | {} |",
                    a.measure,
                    a.error.as_deref().unwrap_or("")
                );
            }
        }
    }

    if let Some(h) = &report.hcm {
        s.push_str("\n## Questionnaire scores (normalized)\n\n| method | warmth | competence | discomfort |\n|---|---|---|---|\n");
        for (m, a) in &h.aggregates {
            let _ = write!(s, "| {m} |");
            for f in Factor::ALL {
                let st = a.get(f);
                let _ = write!(s, " `{}` {:.2} ± {:.2} |", bar(st.mean), st.mean, st.se);
            }
            s.push('\n');
        }
        s.push_str("\nCronbach's alpha:");
        for (f, a) in &h.alphas {
            match a {
                Some(a) => {
                    let flag = if a.high_ic { " (high)" } else { "" };
                    let _ = write!(s, " {} {:.3}{flag};", f.as_str(), a.alpha);
                }
                None => {
                    let _ = write!(s, " {} undefined;", f.as_str());
                }
            }
        }
        s.push('\n');
        if let Some(t) = &h.correlation {
            let _ = write!(s, "\n## Correlation ({} pairs)\n\n| factor |", t.n_pairs);
            for c in &t.columns {
                let _ = write!(s, " {c} |");
            }
            s.push_str("\n|---|");
            s.push_str(&"---|".repeat(t.columns.len()));
            s.push('\n');
            for (f, es) in t.rows.iter().zip(&t.entries) {
                let _ = write!(s, "| {} |", f.as_str());
                for e in es {
                    match e {
                        Some(r) => {
                            let _ = write!(s, " {r:.3} |");
                        }
                        None => s.push_str(" - |"),
                    }
                }
                s.push('\n');
            }
        } else if let Some(e) = &h.correlation_error {
            let _ = writeln!(s, "\nCorrelation not computed: {e}");
        }
        for w in &h.warnings {
            let _ = writeln!(s, "\n> warning: {w}");
        }
    }

    if !report.trends.is_empty() {
        s.push_str("\n## Expected orderings\n\n");
        for t in &report.trends {
            let mark = if t.holds { "holds" } else { "does not hold" };
            let _ = writeln!(s, "- {} {mark}: {}", t.name, t.detail);
        }
    }
    s
}
