//! Scripted and live pedestrians.

use super::{clearance, AgentState};
use crate::geometry::Vec2;
use crate::scenario::{AgentScript, CartonEvent, ScenarioConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PedestrianMode {
    /// Follows the script and ignores the robot.
    Oblivious,
    /// Follows the script, backing off and stepping right when the robot
    /// comes within the social distance.
    Reactive { gain: f64 },
    /// Steered by an external client.
    Live,
    /// No pedestrian at all; the trial runs human-free.
    Absent,
}

impl Default for PedestrianMode {
    fn default() -> Self {
        PedestrianMode::Reactive { gain: 1.0 }
    }
}

impl PedestrianMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PedestrianMode::Oblivious => "oblivious",
            PedestrianMode::Reactive { .. } => "reactive",
            PedestrianMode::Live => "live",
            PedestrianMode::Absent => "absent",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            PedestrianMode::Reactive { gain } if !(*gain > 0.0 && gain.is_finite()) => {
                Err(format!("reactive gain must be positive, got {gain}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PedestrianMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PedestrianMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oblivious" => Ok(PedestrianMode::Oblivious),
            "reactive" => Ok(PedestrianMode::default()),
            "live" => Ok(PedestrianMode::Live),
            "absent" => Ok(PedestrianMode::Absent),
            other => Err(format!("unknown pedestrian mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianParams {
    pub dt: f64,
    pub speed: f64,
    pub d_social: f64,
    pub r_robot: f64,
    pub r_human: f64,
    pub room: (f64, f64),
    pub arrival_tolerance: f64,
    /// Live input older than this (simulated seconds) is treated as zero.
    pub input_staleness: f64,
    /// Live pick/drop triggers within this distance of H2/H1.
    pub carton_radius: f64,
    pub cartons: u32,
    pub pick_at: Vec2,
    pub drop_at: Vec2,
}

impl PedestrianParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        PedestrianParams {
            dt: cfg.control_dt,
            speed: cfg.v_human,
            d_social: cfg.d_social,
            r_robot: cfg.r_robot,
            r_human: cfg.r_human,
            room: (cfg.room_width, cfg.room_length),
            arrival_tolerance: 0.05,
            input_staleness: 0.5,
            carton_radius: 0.3,
            cartons: cfg.cartons,
            pick_at: cfg.waypoints.h2,
            drop_at: cfg.waypoints.h1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Waiting {
        until: f64,
    },
    Walking,
    Dwelling {
        left: f64,
    },
    /// Script finished; heading back to the start point.
    Leaving,
}

#[derive(Debug, Clone)]
pub struct Pedestrian {
    pub state: AgentState,
    mode: PedestrianMode,
    params: PedestrianParams,
    script: AgentScript,
    index: usize,
    phase: Phase,
    start_time: f64,
    home: Vec2,
    live_input: Option<(Vec2, f64)>,
    /// Event fired during the command phase, reported by the next `advance`.
    pending: Option<CartonEvent>,
    carrying: bool,
    delivered: u32,
    task_time: Option<f64>,
}

impl Pedestrian {
    /// Starts at the first script point and sets off after `start_delay`.
    pub fn new(
        script: AgentScript,
        mode: PedestrianMode,
        params: PedestrianParams,
        start_delay: f64,
    ) -> Self {
        let home = script
            .steps
            .first()
            .map(|s| s.position)
            .unwrap_or(Vec2::ZERO);
        let (index, start_delay) = match mode {
            PedestrianMode::Live => (0, 0.0),
            _ => (1.min(script.steps.len()), start_delay),
        };
        Pedestrian {
            state: AgentState::at(home),
            mode,
            params,
            script,
            index,
            phase: Phase::Waiting { until: start_delay },
            start_time: start_delay,
            home,
            live_input: None,
            pending: None,
            carrying: false,
            delivered: 0,
            task_time: None,
        }
    }

    pub fn mode(&self) -> PedestrianMode {
        self.mode
    }

    /// Seconds from setting off to the last drop.
    pub fn task_time(&self) -> Option<f64> {
        self.task_time
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn delivered(&self) -> u32 {
        self.delivered
    }

    pub fn carrying(&self) -> bool {
        self.carrying
    }

    pub fn is_done(&self) -> bool {
        self.task_time.is_some()
    }

    /// Latest steering input for live mode, stamped with the simulated time it arrived.
    pub fn set_live_input(&mut self, velocity: Vec2, t: f64) {
        if velocity.is_finite() {
            self.live_input = Some((velocity, t));
        }
    }

    fn target(&self) -> Option<Vec2> {
        match self.phase {
            Phase::Walking => self.script.steps.get(self.index).map(|s| s.position),
            Phase::Leaving => Some(self.home),
            _ => None,
        }
    }

    fn toward(&self, target: Vec2) -> Vec2 {
        let d = target - self.state.position;
        let n = d.norm();
        if n <= self.params.arrival_tolerance {
            return Vec2::ZERO;
        }
        d * (self.params.speed.min(n / self.params.dt) / n)
    }

    /// Registers arrival at the current script point; true if it happened now.
    fn check_arrival(&mut self, t: f64) -> bool {
        if self.phase != Phase::Walking {
            return false;
        }
        let Some(target) = self.target() else {
            return false;
        };
        if self.state.position.distance(target) > self.params.arrival_tolerance {
            return false;
        }
        let pause = self.script.steps[self.index].pause;
        if pause > 0.0 {
            self.phase = Phase::Dwelling { left: pause };
        } else {
            self.pending = self.finish_step(t);
        }
        true
    }

    fn finish_step(&mut self, t: f64) -> Option<CartonEvent> {
        let event = self.script.steps[self.index].event;
        self.apply_event(event, t);
        self.index += 1;
        self.phase = if self.index < self.script.steps.len() {
            Phase::Walking
        } else {
            Phase::Leaving
        };
        event
    }

    fn apply_event(&mut self, event: Option<CartonEvent>, t: f64) {
        match event {
            Some(CartonEvent::Pick) => self.carrying = true,
            Some(CartonEvent::Drop) => {
                self.carrying = false;
                self.delivered += 1;
                if self.delivered >= self.params.cartons && self.task_time.is_none() {
                    self.task_time = Some(t - self.start_time);
                }
            }
            None => {}
        }
    }

    /// Moves the pedestrian one tick under `cmd` (first-order, no
    /// acceleration limit, kept inside the room) and returns any carton
    /// event completed at the new time `t_next`.
    pub fn advance(&mut self, cmd: Vec2, t_next: f64) -> Option<CartonEvent> {
        let p = &self.params;
        let v = cmd.clamp_norm(p.speed);
        let mut next = self.state.with_velocity(v);
        let raw = self.state.position + v * p.dt;
        next.position = Vec2::new(
            raw.x.clamp(p.r_human, p.room.0 - p.r_human),
            raw.y.clamp(p.r_human, p.room.1 - p.r_human),
        );
        self.state = next;

        if self.mode == PedestrianMode::Live {
            return self.live_carton(t_next);
        }
        if let Some(e) = self.pending.take() {
            return Some(e);
        }
        match self.phase {
            Phase::Dwelling { left } => {
                let left = left - p.dt;
                if left <= 1e-9 {
                    self.finish_step(t_next)
                } else {
                    self.phase = Phase::Dwelling { left };
                    None
                }
            }
            _ => None,
        }
    }

    fn live_carton(&mut self, t: f64) -> Option<CartonEvent> {
        let p = self.params;
        let pos = self.state.position;
        if !self.carrying
            && self.delivered < p.cartons
            && pos.distance(p.pick_at) <= p.carton_radius
        {
            self.apply_event(Some(CartonEvent::Pick), t);
            Some(CartonEvent::Pick)
        } else if self.carrying && pos.distance(p.drop_at) <= p.carton_radius {
            self.apply_event(Some(CartonEvent::Drop), t);
            Some(CartonEvent::Drop)
        } else {
            None
        }
    }
}

/// Desired velocity for this tick, given the robot's current state.
///
/// Scripted modes head for the current waypoint at script speed (zero while
/// waiting or dwelling; arrival zeroes the command and advances the script).
/// Reactive mode adds a push away from the robot plus a sidestep,
/// growing as the footprint clearance shrinks below `d_social`. Live mode
/// returns the latest fresh external input.
pub fn pedestrian_command(ped: &mut Pedestrian, robot: &AgentState, t: f64) -> Vec2 {
    let p = ped.params;
    if ped.mode == PedestrianMode::Live {
        return match ped.live_input {
            Some((v, at)) if t - at <= p.input_staleness + 1e-9 => v.clamp_norm(p.speed),
            _ => Vec2::ZERO,
        };
    }
    if let Phase::Waiting { until } = ped.phase {
        if t < until - 1e-9 {
            return Vec2::ZERO;
        }
        ped.start_time = t;
        ped.phase = if ped.index < ped.script.steps.len() {
            Phase::Walking
        } else {
            Phase::Leaving
        };
    }
    if ped.check_arrival(t) || matches!(ped.phase, Phase::Dwelling { .. }) {
        return Vec2::ZERO;
    }
    let Some(target) = ped.target() else {
        return Vec2::ZERO;
    };
    let base = ped.toward(target);
    let PedestrianMode::Reactive { gain } = ped.mode else {
        return base;
    };

    let c = clearance(ped.state.position, robot.position, p.r_human, p.r_robot);
    if c >= p.d_social {
        return base;
    }
    let Some(away) = (ped.state.position - robot.position).normalized() else {
        return base;
    };
    // Close to its own waypoint the pedestrian commits to it: the push
    // fades out over the last d_social before arrival.
    let commit = (ped.state.position.distance(target) / p.d_social).min(1.0);
    let strength = (gain * p.speed * (1.0 - c.max(0.0) / p.d_social)).min(p.speed) * commit;
    let heading = base.normalized().unwrap_or(-away);
    let right = Vec2::new(heading.y, -heading.x);
    // Step to whichever side the robot is not on, to the right when it is
    // roughly dead ahead. The lateral part never cancels, so a pedestrian
    // cannot stall against the robot.
    let dodge = if away.dot(right) < -0.2 {
        -right
    } else {
        right
    };
    (base + away * strength + dodge * (0.5 * strength)).clamp_norm(p.speed)
}
