//! Trial runner and the log it produces.

use super::pedestrian::{pedestrian_command, Pedestrian, PedestrianMode, PedestrianParams};
use super::{clearance, detect_contact, step, AgentState, Limits, SimError};
use crate::geometry::Vec2;
use crate::planners::{make_policy_with, NavParams, Observation, Policy, PolicyRegistry};
use crate::scenario::{
    human_script, robot_script, AgentScript, CartonEvent, Layout, MethodId, ScenarioConfig,
};
use crate::wire::StatePayload;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The robot counts as having reached a script waypoint within this distance.
pub const ROBOT_GOAL_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    /// Robot and pedestrian sharing the room.
    Trial,
    /// Robot alone.
    Baseline,
    /// Pedestrian alone; the robot slot stays parked at RS.
    HumanBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub kind: TrialKind,
    pub method: Option<MethodId>,
    pub layout: Layout,
    pub seed: u64,
    pub ped_mode: Option<PedestrianMode>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub robot: AgentState,
    pub humans: Vec<AgentState>,
    pub carton_event: Option<CartonEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub meta: TrialMeta,
    pub dt: f64,
    pub r_robot: f64,
    pub r_human: f64,
    pub samples: Vec<Sample>,
    /// Distinct contact episodes (rising edges of the contact flag).
    pub collision_count: u32,
    pub completed: bool,
    /// Time the robot reached R1 for the last time.
    pub robot_task_time: Option<f64>,
    /// Time from the pedestrian setting off to its last drop.
    pub human_task_time: Option<f64>,
    pub robot_path_length: f64,
    /// Smallest footprint clearance between the robot and any person.
    pub min_distance: Option<f64>,
    pub cartons_delivered: u32,
}

impl TrialLog {
    pub fn last_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Footprint clearance to each person at sample `k`.
    pub fn clearances(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        let s = &self.samples[k];
        s.humans
            .iter()
            .map(move |h| clearance(s.robot.position, h.position, self.r_robot, self.r_human))
    }
}

/// Steppable simulation. Batch runs drive it to completion; the session
/// gateway steps it one tick per client frame.
pub struct Simulation {
    cfg: ScenarioConfig,
    kind: TrialKind,
    limits: Limits,
    policy: Option<Box<dyn Policy>>,
    robot: AgentState,
    robot_script: AgentScript,
    robot_index: usize,
    peds: Vec<Pedestrian>,
    tick: u64,
    in_contact: bool,
    log: TrialLog,
}

impl Simulation {
    pub fn new(
        cfg: &ScenarioConfig,
        kind: TrialKind,
        method: Option<&MethodId>,
        ped_mode: PedestrianMode,
        seed: u64,
        registry: &PolicyRegistry,
    ) -> Result<Self, SimError> {
        Self::with_nav(
            cfg,
            kind,
            method,
            ped_mode,
            seed,
            registry,
            &NavParams::default(),
        )
    }

    pub fn with_nav(
        cfg: &ScenarioConfig,
        kind: TrialKind,
        method: Option<&MethodId>,
        ped_mode: PedestrianMode,
        seed: u64,
        registry: &PolicyRegistry,
        nav: &NavParams,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        ped_mode
            .validate()
            .map_err(|_| SimError::InvalidStep("reactive gain must be positive"))?;
        let policy = match (kind, method) {
            (TrialKind::HumanBaseline, _) => None,
            (_, Some(m)) => Some(make_policy_with(m, cfg, registry, nav)?),
            (_, None) => return Err(SimError::InvalidStep("robot trials need a method")),
        };
        let robot_script = robot_script(cfg);
        let robot = AgentState::at(robot_script.steps[0].position);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let peds = match kind {
            TrialKind::Baseline => vec![],
            TrialKind::Trial if ped_mode == PedestrianMode::Absent => vec![],
            _ => {
                let mode = if kind == TrialKind::HumanBaseline {
                    PedestrianMode::Oblivious
                } else {
                    ped_mode
                };
                let delay = if mode == PedestrianMode::Live {
                    0.0
                } else {
                    cfg.human_start_jitter * rng.random::<f64>()
                };
                vec![Pedestrian::new(
                    human_script(cfg),
                    mode,
                    PedestrianParams::from_config(cfg),
                    delay,
                )]
            }
        };
        let meta = TrialMeta {
            kind,
            method: if kind == TrialKind::HumanBaseline {
                None
            } else {
                method.cloned()
            },
            layout: cfg.layout,
            seed,
            ped_mode: (kind == TrialKind::Trial).then_some(ped_mode),
            config_hash: cfg.config_hash(),
        };
        let first = Sample {
            t: 0.0,
            robot,
            humans: peds.iter().map(|p| p.state).collect(),
            carton_event: None,
        };
        let in_contact = kind == TrialKind::Trial
            && first
                .humans
                .iter()
                .any(|h| detect_contact(&robot, h, cfg.r_robot, cfg.r_human));
        let min_distance = (kind == TrialKind::Trial)
            .then(|| {
                first
                    .humans
                    .iter()
                    .map(|h| clearance(robot.position, h.position, cfg.r_robot, cfg.r_human))
            })
            .and_then(|it| it.reduce(f64::min));
        let log = TrialLog {
            meta,
            dt: cfg.control_dt,
            r_robot: cfg.r_robot,
            r_human: cfg.r_human,
            samples: vec![first],
            collision_count: in_contact as u32,
            completed: false,
            robot_task_time: None,
            human_task_time: None,
            robot_path_length: 0.0,
            min_distance,
            cartons_delivered: 0,
        };
        Ok(Simulation {
            cfg: cfg.clone(),
            kind,
            limits: Limits {
                v_max: cfg.v_max_robot,
                a_max: cfg.a_max_robot,
            },
            policy,
            robot,
            robot_script,
            robot_index: 1,
            peds,
            tick: 0,
            in_contact,
            log,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.control_dt
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn robot(&self) -> &AgentState {
        &self.robot
    }

    pub fn pedestrians(&self) -> &[Pedestrian] {
        &self.peds
    }

    pub fn robot_goal(&self) -> Option<Vec2> {
        if self.kind == TrialKind::HumanBaseline {
            return None;
        }
        self.robot_script
            .steps
            .get(self.robot_index)
            .map(|s| s.position)
    }

    fn robot_done(&self) -> bool {
        self.kind == TrialKind::HumanBaseline || self.robot_index >= self.robot_script.steps.len()
    }

    fn peds_done(&self) -> bool {
        self.peds
            .iter()
            .all(|p| p.is_done() || p.mode() == PedestrianMode::Live)
    }

    /// Sets the live steering input of the first pedestrian.
    pub fn set_live_input(&mut self, velocity: Vec2) {
        let t = self.time();
        if let Some(p) = self.peds.first_mut() {
            p.set_live_input(velocity, t);
        }
    }

    pub fn is_finished(&self) -> bool {
        self.timed_out() || self.task_finished()
    }

    fn task_finished(&self) -> bool {
        match self.kind {
            TrialKind::HumanBaseline => self.peds_done(),
            _ => self.robot_done() && self.peds_done(),
        }
    }

    fn timed_out(&self) -> bool {
        self.time() >= self.cfg.timeout - 1e-9
    }

    /// Advances one control tick and returns the new sample.
    pub fn step(&mut self) -> Result<&Sample, SimError> {
        let dt = self.cfg.control_dt;
        let t = self.time();
        let humans: Vec<AgentState> = self.peds.iter().map(|p| p.state).collect();

        let goal = if self.robot_done() {
            None
        } else {
            self.robot_goal()
        };
        let cmd = match (&mut self.policy, goal) {
            (Some(policy), Some(goal)) => {
                let c = policy.command(&Observation {
                    t,
                    robot: self.robot,
                    humans: humans.clone(),
                    goal,
                })?;
                if !c.is_finite() {
                    return Err(SimError::NonFiniteCommand);
                }
                c
            }
            _ => Vec2::ZERO,
        };
        let next_robot = if self.kind == TrialKind::HumanBaseline {
            self.robot
        } else {
            step(&self.robot, cmd, dt, &self.limits)?
        };

        self.tick += 1;
        let t_next = self.time();
        let mut carton_event = None;
        for ped in &mut self.peds {
            let c = pedestrian_command(ped, &self.robot, t);
            if let Some(e) = ped.advance(c, t_next) {
                carton_event = Some(e);
            }
        }

        self.log.robot_path_length += self.robot.position.distance(next_robot.position);
        self.robot = next_robot;
        if let Some(goal) = self.robot_goal() {
            if self.robot.position.distance(goal) <= ROBOT_GOAL_TOLERANCE {
                self.robot_index += 1;
                if self.robot_index >= self.robot_script.steps.len() {
                    self.log.robot_task_time = Some(t_next);
                }
            }
        }
        let finished = self.task_finished();
        let log = &mut self.log;

        let humans: Vec<AgentState> = self.peds.iter().map(|p| p.state).collect();
        if self.kind == TrialKind::Trial {
            let (rr, rh) = (self.cfg.r_robot, self.cfg.r_human);
            let contact = humans
                .iter()
                .any(|h| detect_contact(&self.robot, h, rr, rh));
            if contact && !self.in_contact {
                log.collision_count += 1;
            }
            self.in_contact = contact;
            for h in &humans {
                let c = clearance(self.robot.position, h.position, rr, rh);
                log.min_distance = Some(log.min_distance.map_or(c, |m| m.min(c)));
            }
        }
        if let Some(p) = self.peds.first() {
            log.cartons_delivered = p.delivered();
            log.human_task_time = p.task_time();
        }
        log.samples.push(Sample {
            t: t_next,
            robot: self.robot,
            humans,
            carton_event,
        });
        if finished {
            log.completed = true;
        }
        Ok(log.samples.last().expect("sample just pushed"))
    }

    /// Runs until the task completes or the timeout is hit.
    pub fn run_to_end(mut self) -> Result<TrialLog, SimError> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrialLog {
        self.log
    }

    pub fn log(&self) -> &TrialLog {
        &self.log
    }

    pub fn state_payload(&self) -> StatePayload {
        let ped = self.peds.first();
        StatePayload {
            t: self.time(),
            tick: self.tick,
            robot: self.robot,
            humans: self.peds.iter().map(|p| p.state).collect(),
            goal: self.robot_goal(),
            cartons_delivered: ped.map_or(0, |p| p.delivered()),
            carrying: ped.is_some_and(|p| p.carrying()),
            completed: self.log.completed,
        }
    }
}

pub fn run_trial(
    cfg: &ScenarioConfig,
    method: &MethodId,
    ped_mode: PedestrianMode,
    seed: u64,
) -> Result<TrialLog, SimError> {
    run_trial_with(cfg, method, ped_mode, seed, &PolicyRegistry::new())
}

pub fn run_trial_with(
    cfg: &ScenarioConfig,
    method: &MethodId,
    ped_mode: PedestrianMode,
    seed: u64,
    registry: &PolicyRegistry,
) -> Result<TrialLog, SimError> {
    Simulation::new(
        cfg,
        TrialKind::Trial,
        Some(method),
        ped_mode,
        seed,
        registry,
    )?
    .run_to_end()
}

/// The same task with nobody else in the room.
pub fn run_baseline(
    cfg: &ScenarioConfig,
    method: &MethodId,
    seed: u64,
    registry: &PolicyRegistry,
) -> Result<TrialLog, SimError> {
    Simulation::new(
        cfg,
        TrialKind::Baseline,
        Some(method),
        PedestrianMode::Oblivious,
        seed,
        registry,
    )?
    .run_to_end()
}

/// The pedestrian's task with no robot, for the human-side time ratio.
pub fn run_human_baseline(cfg: &ScenarioConfig, seed: u64) -> Result<TrialLog, SimError> {
    Simulation::new(
        cfg,
        TrialKind::HumanBaseline,
        None,
        PedestrianMode::Oblivious,
        seed,
        &PolicyRegistry::new(),
    )?
    .run_to_end()
}
