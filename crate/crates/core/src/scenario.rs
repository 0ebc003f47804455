//! Trial protocol as data: room, waypoints, agent task scripts, layout
//! variants and counterbalanced method orderings.

use crate::geometry::Vec2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("failed to read scenario file {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("failed to parse scenario file: {0}")]
    Parse(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Robot shuttles along the human's H1-H2 line (R1 = H2, R2 = H1).
    Coinciding,
    /// Robot shuttles across the human's line.
    Perpendicular,
}

impl Layout {
    pub const ALL: [Layout; 2] = [Layout::Coinciding, Layout::Perpendicular];

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Coinciding => "coinciding",
            Layout::Perpendicular => "perpendicular",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coinciding" => Ok(Layout::Coinciding),
            "perpendicular" => Ok(Layout::Perpendicular),
            other => Err(invalid("layout", format!("unknown layout `{other}`"))),
        }
    }
}

/// Navigation method under evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    /// Plain costmap planning, humans as current obstacles.
    Mb,
    /// Costmap planning with a Gaussian social layer.
    Snl,
    /// Time-expanded planning with constant-velocity prediction.
    Tdp,
    /// Scripted human-like agent in the robot's role.
    Hh,
    /// Plug-in policy registered under a name.
    External(String),
}

impl MethodId {
    pub const BUILTIN: [MethodId; 4] = [MethodId::Mb, MethodId::Snl, MethodId::Tdp, MethodId::Hh];

    pub fn as_str(&self) -> &str {
        match self {
            MethodId::Mb => "MB",
            MethodId::Snl => "SNL",
            MethodId::Tdp => "TDP",
            MethodId::Hh => "HH",
            MethodId::External(name) => name,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Ok(match t.to_ascii_uppercase().as_str() {
            "MB" => MethodId::Mb,
            "SNL" => MethodId::Snl,
            "TDP" => MethodId::Tdp,
            "HH" => MethodId::Hh,
            _ if t.is_empty() => return Err(invalid("method", "empty method name")),
            _ => MethodId::External(t.to_string()),
        })
    }
}

impl Serialize for MethodId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for MethodId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoints {
    #[serde(rename = "HS")]
    pub hs: Vec2,
    #[serde(rename = "H1")]
    pub h1: Vec2,
    #[serde(rename = "H2")]
    pub h2: Vec2,
    #[serde(rename = "RS")]
    pub rs: Vec2,
    #[serde(rename = "R1")]
    pub r1: Vec2,
    #[serde(rename = "R2")]
    pub r2: Vec2,
}

impl Waypoints {
    pub fn defaults(layout: Layout) -> Self {
        let h1 = Vec2::new(1.25, 1.0);
        let h2 = Vec2::new(1.25, 3.0);
        let (r1, r2) = match layout {
            Layout::Coinciding => (h2, h1),
            Layout::Perpendicular => (Vec2::new(0.5, 2.0), Vec2::new(2.0, 2.0)),
        };
        Waypoints {
            hs: Vec2::new(0.5, 0.3),
            h1,
            h2,
            rs: Vec2::new(2.2, 3.7),
            r1,
            r2,
        }
    }

    fn labeled(&self) -> [(&'static str, Vec2); 6] {
        [
            ("HS", self.hs),
            ("H1", self.h1),
            ("H2", self.h2),
            ("RS", self.rs),
            ("R1", self.r1),
            ("R2", self.r2),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointOverrides {
    #[serde(rename = "HS", default, skip_serializing_if = "Option::is_none")]
    pub hs: Option<Vec2>,
    #[serde(rename = "H1", default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<Vec2>,
    #[serde(rename = "H2", default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<Vec2>,
    #[serde(rename = "RS", default, skip_serializing_if = "Option::is_none")]
    pub rs: Option<Vec2>,
    #[serde(rename = "R1", default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<Vec2>,
    #[serde(rename = "R2", default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<Vec2>,
}

/// Complete description of one experimental setup. Lengths in meters,
/// speeds in m/s, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub room_width: f64,
    pub room_length: f64,
    pub layout: Layout,
    pub waypoints: Waypoints,
    pub robot_loops: u32,
    pub cartons: u32,
    pub v_max_robot: f64,
    pub a_max_robot: f64,
    pub v_human: f64,
    pub pick_drop_pause: f64,
    pub d_safe: f64,
    pub d_social: f64,
    pub control_dt: f64,
    pub seed: u64,
    pub r_robot: f64,
    pub r_human: f64,
    /// Simulated seconds before a trial is declared incomplete.
    pub timeout: f64,
    /// Upper bound of the seeded pedestrian start delay.
    pub human_start_jitter: f64,
}

/// Partial configuration; every `Some` field replaces the default.
/// This is also the schema of scenario files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<WaypointOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_loops: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cartons: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max_robot: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_max_robot: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_human: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pick_drop_pause: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_safe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_social: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_robot: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_human: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_start_jitter: Option<f64>,
}

impl From<&ScenarioConfig> for ScenarioOverrides {
    fn from(c: &ScenarioConfig) -> Self {
        let w = c.waypoints;
        ScenarioOverrides {
            layout: Some(c.layout),
            room_width: Some(c.room_width),
            room_length: Some(c.room_length),
            waypoints: Some(WaypointOverrides {
                hs: Some(w.hs),
                h1: Some(w.h1),
                h2: Some(w.h2),
                rs: Some(w.rs),
                r1: Some(w.r1),
                r2: Some(w.r2),
            }),
            robot_loops: Some(c.robot_loops),
            cartons: Some(c.cartons),
            v_max_robot: Some(c.v_max_robot),
            a_max_robot: Some(c.a_max_robot),
            v_human: Some(c.v_human),
            pick_drop_pause: Some(c.pick_drop_pause),
            d_safe: Some(c.d_safe),
            d_social: Some(c.d_social),
            control_dt: Some(c.control_dt),
            seed: Some(c.seed),
            r_robot: Some(c.r_robot),
            r_human: Some(c.r_human),
            timeout: Some(c.timeout),
            human_start_jitter: Some(c.human_start_jitter),
        }
    }
}

impl ScenarioConfig {
    pub fn defaults(layout: Layout) -> Self {
        ScenarioConfig {
            room_width: 2.5,
            room_length: 4.0,
            layout,
            waypoints: Waypoints::defaults(layout),
            robot_loops: 4,
            cartons: 3,
            v_max_robot: 0.3,
            a_max_robot: 0.3,
            v_human: 1.0,
            pick_drop_pause: 1.5,
            d_safe: 0.2,
            d_social: 0.4,
            control_dt: 0.1,
            seed: 0,
            r_robot: 0.25,
            r_human: 0.25,
            timeout: 300.0,
            human_start_jitter: 8.0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("room_width", self.room_width)?;
        positive("room_length", self.room_length)?;
        for (label, p) in self.waypoints.labeled() {
            if !p.is_finite()
                || p.x < 0.0
                || p.x > self.room_width
                || p.y < 0.0
                || p.y > self.room_length
            {
                return Err(invalid(
                    &format!("waypoints.{label}"),
                    format!(
                        "({}, {}) lies outside the {}x{} m room",
                        p.x, p.y, self.room_width, self.room_length
                    ),
                ));
            }
        }
        if self.layout == Layout::Coinciding {
            let w = &self.waypoints;
            if !same_point(w.r1, w.h2) {
                return Err(invalid(
                    "waypoints.R1",
                    "coinciding layout requires R1 = H2",
                ));
            }
            if !same_point(w.r2, w.h1) {
                return Err(invalid(
                    "waypoints.R2",
                    "coinciding layout requires R2 = H1",
                ));
            }
        }
        positive("v_max_robot", self.v_max_robot)?;
        positive("a_max_robot", self.a_max_robot)?;
        positive("v_human", self.v_human)?;
        positive("control_dt", self.control_dt)?;
        positive("d_safe", self.d_safe)?;
        positive("d_social", self.d_social)?;
        positive("r_robot", self.r_robot)?;
        positive("r_human", self.r_human)?;
        positive("timeout", self.timeout)?;
        if !(self.d_safe < self.d_social) {
            return Err(invalid(
                "d_safe",
                format!(
                    "d_safe ({}) must be smaller than d_social ({})",
                    self.d_safe, self.d_social
                ),
            ));
        }
        if !(self.pick_drop_pause >= 0.0 && self.pick_drop_pause.is_finite()) {
            return Err(invalid(
                "pick_drop_pause",
                "must be a finite non-negative duration",
            ));
        }
        if !(self.human_start_jitter >= 0.0 && self.human_start_jitter.is_finite()) {
            return Err(invalid(
                "human_start_jitter",
                "must be a finite non-negative duration",
            ));
        }
        if self.cartons < 1 {
            return Err(invalid("cartons", "at least one carton is required"));
        }
        if self.robot_loops < 1 {
            return Err(invalid("robot_loops", "at least one loop is required"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn same_point(a: Vec2, b: Vec2) -> bool {
    (a.x - b.x).abs() <= 1e-9 && (a.y - b.y).abs() <= 1e-9
}

/// Merges `overrides` into the defaults for `layout` and validates the result.
///
/// In the coinciding layout R1/R2 follow H2/H1; explicitly overriding them to
/// anything else is rejected.
pub fn build_scenario(
    layout: Layout,
    overrides: &ScenarioOverrides,
) -> Result<ScenarioConfig, ScenarioError> {
    if let Some(l) = overrides.layout {
        if l != layout {
            return Err(invalid(
                "layout",
                format!("override `{l}` conflicts with requested `{layout}`"),
            ));
        }
    }
    let mut c = ScenarioConfig::defaults(layout);
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = overrides.$f { c.$f = v; } )* };
    }
    take!(
        room_width,
        room_length,
        robot_loops,
        cartons,
        v_max_robot,
        a_max_robot,
        v_human,
        pick_drop_pause,
        d_safe,
        d_social,
        control_dt,
        seed,
        r_robot,
        r_human,
        timeout,
        human_start_jitter
    );
    if let Some(w) = overrides.waypoints {
        let wp = &mut c.waypoints;
        wp.hs = w.hs.unwrap_or(wp.hs);
        wp.h1 = w.h1.unwrap_or(wp.h1);
        wp.h2 = w.h2.unwrap_or(wp.h2);
        wp.rs = w.rs.unwrap_or(wp.rs);
        match layout {
            Layout::Coinciding => {
                if let Some(r1) = w.r1.filter(|r1| !same_point(*r1, wp.h2)) {
                    return Err(invalid(
                        "waypoints.R1",
                        format!(
                            "({}, {}) differs from H2 in the coinciding layout",
                            r1.x, r1.y
                        ),
                    ));
                }
                if let Some(r2) = w.r2.filter(|r2| !same_point(*r2, wp.h1)) {
                    return Err(invalid(
                        "waypoints.R2",
                        format!(
                            "({}, {}) differs from H1 in the coinciding layout",
                            r2.x, r2.y
                        ),
                    ));
                }
            }
            Layout::Perpendicular => {
                wp.r1 = w.r1.unwrap_or(wp.r1);
                wp.r2 = w.r2.unwrap_or(wp.r2);
            }
        }
    }
    if layout == Layout::Coinciding {
        c.waypoints.r1 = c.waypoints.h2;
        c.waypoints.r2 = c.waypoints.h1;
    }
    c.validate()?;
    Ok(c)
}

/// Parses a TOML scenario file. Unknown keys are rejected.
pub fn parse_scenario_toml(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let overrides = parse_overrides_toml(text)?;
    build_scenario(overrides.layout.unwrap_or(Layout::Coinciding), &overrides)
}

/// Parses a TOML scenario file without resolving it against a layout.
pub fn parse_overrides_toml(text: &str) -> Result<ScenarioOverrides, ScenarioError> {
    toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
}

pub fn load_overrides_file(path: &Path) -> Result<ScenarioOverrides, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_overrides_toml(&text)
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_scenario_toml(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CartonEvent {
    Pick,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub label: String,
    pub position: Vec2,
    /// Dwell time after arrival.
    pub pause: f64,
    /// Fired once the dwell completes.
    pub event: Option<CartonEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScript {
    pub steps: Vec<ScriptStep>,
    pub speed: f64,
}

impl AgentScript {
    pub fn visits(&self, label: &str) -> usize {
        self.steps.iter().filter(|s| s.label == label).count()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.label.as_str()).collect()
    }
}

fn step(label: &str, position: Vec2, pause: f64, event: Option<CartonEvent>) -> ScriptStep {
    ScriptStep {
        label: label.to_string(),
        position,
        pause,
        event,
    }
}

/// HS -> H1, then one H2 (pick) -> H1 (drop) round per carton.
pub fn human_script(cfg: &ScenarioConfig) -> AgentScript {
    let w = &cfg.waypoints;
    let mut steps = vec![step("HS", w.hs, 0.0, None), step("H1", w.h1, 0.0, None)];
    for _ in 0..cfg.cartons {
        steps.push(step(
            "H2",
            w.h2,
            cfg.pick_drop_pause,
            Some(CartonEvent::Pick),
        ));
        steps.push(step(
            "H1",
            w.h1,
            cfg.pick_drop_pause,
            Some(CartonEvent::Drop),
        ));
    }
    AgentScript {
        steps,
        speed: cfg.v_human,
    }
}

/// RS -> R1, then R1 -> R2 -> R1 once per loop.
pub fn robot_script(cfg: &ScenarioConfig) -> AgentScript {
    let w = &cfg.waypoints;
    let mut steps = vec![step("RS", w.rs, 0.0, None), step("R1", w.r1, 0.0, None)];
    for _ in 0..cfg.robot_loops {
        steps.push(step("R2", w.r2, 0.0, None));
        steps.push(step("R1", w.r1, 0.0, None));
    }
    AgentScript {
        steps,
        speed: cfg.v_max_robot,
    }
}

/// Cyclic Latin square: participant `i` receives row `i mod n_methods`,
/// where row `r` is `[r, r+1, ..., r+n-1] mod n`.
pub fn latin_square_order(
    n_methods: usize,
    n_participants: usize,
) -> Result<Vec<Vec<usize>>, ScenarioError> {
    if n_methods == 0 {
        return Err(invalid("n_methods", "must be at least 1"));
    }
    if n_participants == 0 {
        return Err(invalid("n_participants", "must be at least 1"));
    }
    Ok((0..n_participants)
        .map(|p| {
            let row = p % n_methods;
            (0..n_methods).map(|c| (row + c) % n_methods).collect()
        })
        .collect())
}
