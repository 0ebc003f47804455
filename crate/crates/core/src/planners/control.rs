//! Tracking of planned paths: pure pursuit for spatial paths, time-indexed
//! lookahead for timed plans.

use super::time_astar::TimedPlan;
use crate::geometry::Vec2;
use crate::sim::AgentState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLimits {
    pub v_max: f64,
    pub a_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingParams {
    /// Pure-pursuit lookahead along the path, meters.
    pub lookahead: f64,
    /// Lookahead into a timed plan, seconds.
    pub time_lookahead: f64,
    /// Beyond this distance from the plan the tracker asks for a new plan.
    pub replan_threshold: f64,
    pub goal_tolerance: f64,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            lookahead: 0.3,
            time_lookahead: 0.3,
            replan_threshold: 0.3,
            goal_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PlanRef<'a> {
    Path(&'a [Vec2]),
    /// `elapsed` is the time since the plan was made.
    Timed {
        plan: &'a TimedPlan,
        elapsed: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("plan is empty")]
    EmptyPlan,
    #[error("robot is {deviation:.3} m off the plan, replan needed")]
    ReplanNeeded { deviation: f64 },
}

/// Velocity command toward the lookahead point, norm at most `v_max` and
/// tapered near the goal so the robot can stop within `a_max`.
pub fn local_control(
    plan: PlanRef<'_>,
    robot: &AgentState,
    limits: &ControlLimits,
    params: &TrackingParams,
) -> Result<Vec2, ControlError> {
    match plan {
        PlanRef::Path(path) => follow_path(path, robot.position, limits, params),
        PlanRef::Timed { plan, elapsed } => {
            follow_timed(plan, elapsed, robot.position, limits, params)
        }
    }
}

fn stopping_speed(limits: &ControlLimits, dist: f64) -> f64 {
    limits
        .v_max
        .min((2.0 * limits.a_max * dist.max(0.0)).sqrt())
}

fn follow_path(
    path: &[Vec2],
    p: Vec2,
    limits: &ControlLimits,
    params: &TrackingParams,
) -> Result<Vec2, ControlError> {
    let (&goal, _) = path.split_last().ok_or(ControlError::EmptyPlan)?;
    let d_goal = p.distance(goal);
    if d_goal <= params.goal_tolerance {
        return Ok(Vec2::ZERO);
    }
    let (s0, deviation, total) = project(path, p);
    if deviation > params.replan_threshold {
        return Err(ControlError::ReplanNeeded { deviation });
    }
    let target = point_at(path, s0 + params.lookahead);
    let Some(dir) = (target - p).normalized() else {
        return Ok(Vec2::ZERO);
    };
    let remaining = (total - s0).max(d_goal);
    Ok(dir * stopping_speed(limits, remaining))
}

fn follow_timed(
    plan: &TimedPlan,
    elapsed: f64,
    p: Vec2,
    limits: &ControlLimits,
    params: &TrackingParams,
) -> Result<Vec2, ControlError> {
    if plan.states.is_empty() {
        return Err(ControlError::EmptyPlan);
    }
    let d_goal = p.distance(plan.goal_point);
    if d_goal <= params.goal_tolerance && elapsed >= plan.duration() {
        return Ok(Vec2::ZERO);
    }
    let deviation = p.distance(plan.position_at(elapsed));
    if deviation > params.replan_threshold {
        return Err(ControlError::ReplanNeeded { deviation });
    }
    let target = plan.position_at(elapsed + params.time_lookahead);
    let cmd = (target - p) * (1.0 / params.time_lookahead);
    Ok(cmd.clamp_norm(stopping_speed(limits, d_goal)))
}

/// Arc length of the closest point, distance to it, and total length.
fn project(path: &[Vec2], p: Vec2) -> (f64, f64, f64) {
    if path.len() == 1 {
        return (0.0, p.distance(path[0]), 0.0);
    }
    let mut best = (0.0, f64::INFINITY);
    let mut acc = 0.0;
    for w in path.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        let t = if len > 0.0 {
            ((p - w[0]).dot(seg) / (len * len)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = w[0] + seg * t;
        let d = p.distance(q);
        if d < best.1 {
            best = (acc + t * len, d);
        }
        acc += len;
    }
    (best.0, best.1, acc)
}

fn point_at(path: &[Vec2], s: f64) -> Vec2 {
    let mut acc = 0.0;
    for w in path.windows(2) {
        let len = w[0].distance(w[1]);
        if acc + len >= s && len > 0.0 {
            return w[0] + (w[1] - w[0]) * ((s - acc) / len);
        }
        acc += len;
    }
    *path.last().expect("non-empty path")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planners::costmap::Cell;
    use crate::planners::time_astar::TimedState;

    const LIMITS: ControlLimits = ControlLimits {
        v_max: 0.3,
        a_max: 0.3,
    };

    #[test]
    fn zero_at_goal() {
        let path = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let r = AgentState::at(Vec2::new(1.0, 0.0));
        let cmd = local_control(
            PlanRef::Path(&path),
            &r,
            &LIMITS,
            &TrackingParams::default(),
        )
        .unwrap();
        assert_eq!(cmd, Vec2::ZERO);
    }

    #[test]
    fn full_speed_along_straight_path() {
        let path = [Vec2::new(0.5, 1.0), Vec2::new(2.5, 1.0)];
        let r = AgentState::at(Vec2::new(0.9, 1.0));
        let cmd = local_control(
            PlanRef::Path(&path),
            &r,
            &LIMITS,
            &TrackingParams::default(),
        )
        .unwrap();
        assert!((cmd.norm() - 0.3).abs() < 1e-12);
        assert!(cmd.y.abs() < 1e-12 && cmd.x > 0.0);
    }

    #[test]
    fn slows_down_near_goal() {
        let path = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let r = AgentState::at(Vec2::new(0.96, 0.0));
        let cmd = local_control(
            PlanRef::Path(&path),
            &r,
            &LIMITS,
            &TrackingParams::default(),
        )
        .unwrap();
        assert!((cmd.norm() - (2.0f64 * 0.3 * 0.04).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn off_path_requests_replan() {
        let path = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)];
        let r = AgentState::at(Vec2::new(1.0, 0.5));
        let err = local_control(
            PlanRef::Path(&path),
            &r,
            &LIMITS,
            &TrackingParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ControlError::ReplanNeeded { .. }));
        assert_eq!(
            local_control(PlanRef::Path(&[]), &r, &LIMITS, &TrackingParams::default()),
            Err(ControlError::EmptyPlan)
        );
    }

    fn waiting_plan() -> TimedPlan {
        let c = Cell::new(3, 3);
        let p = Vec2::new(0.175, 0.175);
        let states: Vec<_> = (0..8)
            .map(|i| TimedState {
                t: i as f64 * 0.2,
                cell: c,
            })
            .collect();
        let mut waypoints = vec![p; 8];
        let mut states = states;
        states.push(TimedState {
            t: 1.8,
            cell: Cell::new(4, 3),
        });
        waypoints.push(Vec2::new(0.225, 0.175));
        TimedPlan {
            states,
            horizon: 5.0,
            cost: 0,
            start_point: p,
            goal_point: Vec2::new(0.225, 0.175),
            waypoints,
        }
    }

    #[test]
    fn timed_wait_gives_zero_command() {
        let plan = waiting_plan();
        let r = AgentState::at(Vec2::new(0.175, 0.175));
        let cmd = local_control(
            PlanRef::Timed {
                plan: &plan,
                elapsed: 0.2,
            },
            &r,
            &LIMITS,
            &TrackingParams::default(),
        )
        .unwrap();
        assert_eq!(cmd, Vec2::ZERO);
        // once the move begins the command points along it
        let cmd = local_control(
            PlanRef::Timed {
                plan: &plan,
                elapsed: 1.5,
            },
            &r,
            &LIMITS,
            &TrackingParams::default(),
        )
        .unwrap();
        assert!(cmd.x > 0.0 && cmd.norm() <= 0.3 + 1e-12);
    }
}
