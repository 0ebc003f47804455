//! Trial logs on disk: one CSV row per tick plus a JSON summary.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a log
//! read back is bit-identical to the one written.

use super::trial::{Sample, TrialKind, TrialLog, TrialMeta};
use super::{AgentState, SimError};
use crate::geometry::Vec2;
use crate::scenario::CartonEvent;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub meta: TrialMeta,
    pub dt: f64,
    pub r_robot: f64,
    pub r_human: f64,
    pub n_samples: usize,
    pub n_humans: usize,
    pub collision_count: u32,
    pub completed: bool,
    pub robot_task_time: Option<f64>,
    pub human_task_time: Option<f64>,
    pub robot_path_length: f64,
    pub min_distance: Option<f64>,
    pub cartons_delivered: u32,
}

impl TrialSummary {
    pub fn of(log: &TrialLog) -> Self {
        TrialSummary {
            meta: log.meta.clone(),
            dt: log.dt,
            r_robot: log.r_robot,
            r_human: log.r_human,
            n_samples: log.samples.len(),
            n_humans: log.samples.first().map_or(0, |s| s.humans.len()),
            collision_count: log.collision_count,
            completed: log.completed,
            robot_task_time: log.robot_task_time,
            human_task_time: log.human_task_time,
            robot_path_length: log.robot_path_length,
            min_distance: log.min_distance,
            cartons_delivered: log.cartons_delivered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

impl LogPaths {
    pub fn in_dir(dir: &Path, stem: &str) -> Self {
        LogPaths {
            csv: dir.join(format!("{stem}.csv")),
            summary: dir.join(format!("{stem}.json")),
        }
    }
}

/// File stem encoding method, layout and seed.
pub fn log_stem(meta: &TrialMeta) -> String {
    let method = meta
        .method
        .as_ref()
        .map_or("human".to_string(), |m| m.to_string());
    let layout = meta.layout.as_str();
    match meta.kind {
        TrialKind::Trial => format!("{method}_{layout}_seed{}", meta.seed),
        TrialKind::Baseline => format!("{method}_{layout}_baseline"),
        TrialKind::HumanBaseline => format!("human_{layout}_baseline"),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> SimError {
    SimError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn header(n_humans: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t",
        "robot_x",
        "robot_y",
        "robot_heading",
        "robot_speed",
        "robot_vx",
        "robot_vy",
    ]
    .map(String::from)
    .to_vec();
    for i in 0..n_humans {
        for f in ["x", "y", "heading", "speed", "vx", "vy"] {
            h.push(format!("human{i}_{f}"));
        }
    }
    h.extend(["min_distance", "contact", "carton_event"].map(String::from));
    h
}

fn push_agent(row: &mut Vec<String>, a: &AgentState) {
    for v in [
        a.position.x,
        a.position.y,
        a.heading,
        a.speed,
        a.velocity.x,
        a.velocity.y,
    ] {
        row.push(v.to_string());
    }
}

pub fn log_to_csv(log: &TrialLog) -> Result<Vec<u8>, csv::Error> {
    let n_humans = log.samples.first().map_or(0, |s| s.humans.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(n_humans))?;
    for (k, s) in log.samples.iter().enumerate() {
        let mut row = vec![s.t.to_string()];
        push_agent(&mut row, &s.robot);
        for h in &s.humans {
            push_agent(&mut row, h);
        }
        let min = log.clearances(k).reduce(f64::min);
        row.push(min.map_or(String::new(), |m| m.to_string()));
        let contact = log.meta.kind == TrialKind::Trial && min.is_some_and(|m| m < 0.0);
        row.push(u8::from(contact).to_string());
        row.push(match s.carton_event {
            Some(CartonEvent::Pick) => "pick".into(),
            Some(CartonEvent::Drop) => "drop".into(),
            None => String::new(),
        });
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.json` atomically.
pub fn write_log(dir: &Path, log: &TrialLog) -> Result<LogPaths, SimError> {
    let paths = LogPaths::in_dir(dir, &log_stem(&log.meta));
    let csv = log_to_csv(log).map_err(|e| format_err(&paths.csv, e.to_string()))?;
    write_atomic(&paths.csv, &csv)?;
    let summary = serde_json::to_vec_pretty(&TrialSummary::of(log))
        .map_err(|e| format_err(&paths.summary, e.to_string()))?;
    write_atomic(&paths.summary, &summary)?;
    Ok(paths)
}

/// Reads a log written by [`write_log`].
pub fn read_log(paths: &LogPaths) -> Result<TrialLog, SimError> {
    let text = std::fs::read(&paths.summary).map_err(io_err(&paths.summary))?;
    let summary: TrialSummary =
        serde_json::from_slice(&text).map_err(|e| format_err(&paths.summary, e.to_string()))?;

    let path = &paths.csv;
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let expected = header(summary.n_humans);
    let got: Vec<String> = r
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if got != expected {
        return Err(format_err(path, "unexpected columns"));
    }
    let mut samples = Vec::with_capacity(summary.n_samples);
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format_err(path, e.to_string()))?;
        let row = i + 2;
        let num = |j: usize| -> Result<f64, SimError> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| format_err(path, format!("row {row}: bad number `{}`", &rec[j])))
        };
        let agent = |j: usize| -> Result<AgentState, SimError> {
            Ok(AgentState {
                position: Vec2::new(num(j)?, num(j + 1)?),
                heading: num(j + 2)?,
                speed: num(j + 3)?,
                velocity: Vec2::new(num(j + 4)?, num(j + 5)?),
            })
        };
        let robot = agent(1)?;
        let humans = (0..summary.n_humans)
            .map(|h| agent(7 + 6 * h))
            .collect::<Result<Vec<_>, _>>()?;
        let carton_event = match &rec[expected.len() - 1] {
            "" => None,
            "pick" => Some(CartonEvent::Pick),
            "drop" => Some(CartonEvent::Drop),
            other => {
                return Err(format_err(
                    path,
                    format!("row {row}: unknown carton event `{other}`"),
                ))
            }
        };
        samples.push(Sample {
            t: num(0)?,
            robot,
            humans,
            carton_event,
        });
    }
    if samples.len() != summary.n_samples {
        return Err(format_err(
            path,
            format!("{} rows, summary says {}", samples.len(), summary.n_samples),
        ));
    }
    Ok(TrialLog {
        meta: summary.meta,
        dt: summary.dt,
        r_robot: summary.r_robot,
        r_human: summary.r_human,
        samples,
        collision_count: summary.collision_count,
        completed: summary.completed,
        robot_task_time: summary.robot_task_time,
        human_task_time: summary.human_task_time,
        robot_path_length: summary.robot_path_length,
        min_distance: summary.min_distance,
        cartons_delivered: summary.cartons_delivered,
    })
}
