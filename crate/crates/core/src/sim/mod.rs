//! Fixed-step 2D kinematic simulation of one trial.

mod pedestrian;
mod persist;
mod trial;

use crate::geometry::{wrap_angle, Vec2};
use crate::planners::PolicyError;
use crate::scenario::ScenarioError;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

pub use pedestrian::{pedestrian_command, Pedestrian, PedestrianMode, PedestrianParams};
pub use persist::write_atomic;
pub use persist::{log_stem, log_to_csv, read_log, write_log, LogPaths, TrialSummary};
pub use trial::{
    run_baseline, run_human_baseline, run_trial, run_trial_with, Sample, Simulation, TrialKind,
    TrialLog, TrialMeta, ROBOT_GOAL_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-finite velocity command")]
    NonFiniteCommand,
    #[error("invalid step: {0}")]
    InvalidStep(&'static str),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    /// Radians in (-pi, pi].
    pub heading: f64,
    pub speed: f64,
    pub velocity: Vec2,
}

/// Below this speed the heading is left unchanged.
const HEADING_SPEED_EPS: f64 = 1e-6;

impl AgentState {
    /// At rest at `position`, facing +x.
    pub fn at(position: Vec2) -> Self {
        AgentState {
            position,
            heading: 0.0,
            speed: 0.0,
            velocity: Vec2::ZERO,
        }
    }

    pub fn with_velocity(mut self, velocity: Vec2) -> Self {
        self.velocity = velocity;
        self.speed = velocity.norm();
        if self.speed > HEADING_SPEED_EPS {
            self.heading = wrap_angle(velocity.y.atan2(velocity.x));
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
}

/// Advances `state` by one tick under `cmd`, changing velocity by at most
/// `a_max * dt` and keeping speed at most `v_max`.
pub fn step(
    state: &AgentState,
    cmd: Vec2,
    dt: f64,
    limits: &Limits,
) -> Result<AgentState, SimError> {
    if !cmd.is_finite() {
        return Err(SimError::NonFiniteCommand);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidStep("dt must be positive"));
    }
    if !(limits.v_max > 0.0 && limits.a_max > 0.0) {
        return Err(SimError::InvalidStep("limits must be positive"));
    }
    let dv = (cmd - state.velocity).clamp_norm(limits.a_max * dt);
    // Projection onto the speed ball cannot lengthen dv: the ball is convex
    // and contains the previous velocity.
    let v = (state.velocity + dv).clamp_norm(limits.v_max);
    let mut next = state.with_velocity(v);
    next.position = state.position + v * dt;
    Ok(next)
}

/// Footprints overlap: centroid distance strictly below the radius sum.
pub fn detect_contact(robot: &AgentState, human: &AgentState, r_robot: f64, r_human: f64) -> bool {
    robot.position.distance(human.position) < r_robot + r_human
}

/// Surface-to-surface distance between two disc footprints (negative on overlap).
pub fn clearance(a: Vec2, b: Vec2, r_a: f64, r_b: f64) -> f64 {
    a.distance(b) - r_a - r_b
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIM: Limits = Limits {
        v_max: 0.3,
        a_max: 0.3,
    };

    #[test]
    fn accelerates_from_rest() {
        let s = step(&AgentState::at(Vec2::ZERO), Vec2::new(1.0, 0.0), 0.1, &LIM).unwrap();
        assert!((s.speed - 0.03).abs() < 1e-12);
        assert!((s.position.x - 0.003).abs() < 1e-12);
    }

    #[test]
    fn holds_cruise_speed() {
        let s0 = AgentState::at(Vec2::ZERO).with_velocity(Vec2::new(0.3, 0.0));
        let s = step(&s0, Vec2::new(0.3, 0.0), 0.1, &LIM).unwrap();
        assert_eq!(s.speed, 0.3);
    }

    #[test]
    fn decelerates_toward_zero() {
        let mut s = AgentState::at(Vec2::ZERO).with_velocity(Vec2::new(0.3, 0.0));
        let mut speeds = vec![];
        for _ in 0..12 {
            s = step(&s, Vec2::ZERO, 0.1, &LIM).unwrap();
            speeds.push(s.speed);
        }
        // closed form: v_k = max(0, 0.3 - 0.03 k)
        for (k, v) in speeds.iter().enumerate() {
            let expect = (0.3 - 0.03 * (k + 1) as f64).max(0.0);
            assert!((v - expect).abs() < 1e-12, "tick {k}: {v} vs {expect}");
        }
        assert_eq!(s.heading, 0.0, "heading kept when stopped");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            step(
                &AgentState::at(Vec2::ZERO),
                Vec2::new(f64::NAN, 0.0),
                0.1,
                &LIM
            ),
            Err(SimError::NonFiniteCommand)
        ));
    }

    #[test]
    fn heading_in_half_open_range() {
        let s = AgentState::at(Vec2::ZERO).with_velocity(Vec2::new(-1.0, -0.0));
        assert_eq!(s.heading, std::f64::consts::PI);
    }

    #[test]
    fn contact_is_strict() {
        let r = AgentState::at(Vec2::ZERO);
        let at = |d| AgentState::at(Vec2::new(d, 0.0));
        assert!(!detect_contact(&r, &at(0.6), 0.25, 0.25));
        assert!(detect_contact(&r, &at(0.49), 0.25, 0.25));
        assert!(!detect_contact(&r, &at(0.5), 0.25, 0.25));
    }
}
