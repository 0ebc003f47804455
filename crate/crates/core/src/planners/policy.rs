//! One policy per evaluated method, behind a common tick interface.

use super::control::{local_control, ControlError, ControlLimits, PlanRef, TrackingParams};
use super::costmap::{build_static_costmap, Costmap};
use super::grid_astar::{plan_grid, DEFAULT_COST_WEIGHT};
use super::social::{apply_social_layer, SocialLayerParams};
use super::time_astar::{plan_time_astar, TdpParams, TimedPlan};
use super::PlanError;
use crate::geometry::Vec2;
use crate::scenario::{MethodId, ScenarioConfig};
use crate::sim::AgentState;
use crate::wire::{SeqCounter, StatePayload, WireBody, WireMessage};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no external policy registered as `{0}`")]
    UnknownExternal(String),
    #[error("planner configuration: {0}")]
    Plan(#[from] PlanError),
    #[error("policy returned a non-finite command")]
    NonFinite,
    #[error("external policy transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub robot: AgentState,
    pub humans: Vec<AgentState>,
    pub goal: Vec2,
}

/// Produces a velocity command every control tick. Implementations must be
/// deterministic given their construction inputs.
pub trait Policy: Send {
    fn command(&mut self, obs: &Observation) -> Result<Vec2, PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavParams {
    pub resolution: f64,
    pub w_cost: f64,
    /// Seconds between scheduled replans.
    pub replan_period: f64,
    pub social: SocialLayerParams,
    pub horizon: f64,
    pub layer_dt: f64,
    pub tracking: TrackingParams,
}

impl Default for NavParams {
    fn default() -> Self {
        NavParams {
            resolution: 0.05,
            w_cost: DEFAULT_COST_WEIGHT,
            replan_period: 0.5,
            social: SocialLayerParams::default(),
            horizon: 5.0,
            layer_dt: 0.5,
            tracking: TrackingParams::default(),
        }
    }
}

pub type PolicyFactory =
    Arc<dyn Fn(&ScenarioConfig) -> Result<Box<dyn Policy>, PolicyError> + Send + Sync>;

/// Named plug-in policies for [`MethodId::External`].
#[derive(Clone, Default)]
pub struct PolicyRegistry {
    factories: BTreeMap<String, PolicyFactory>,
}

impl PolicyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&ScenarioConfig) -> Result<Box<dyn Policy>, PolicyError> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for PolicyRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

pub fn make_policy(
    method: &MethodId,
    cfg: &ScenarioConfig,
    registry: &PolicyRegistry,
) -> Result<Box<dyn Policy>, PolicyError> {
    make_policy_with(method, cfg, registry, &NavParams::default())
}

pub fn make_policy_with(
    method: &MethodId,
    cfg: &ScenarioConfig,
    registry: &PolicyRegistry,
    nav: &NavParams,
) -> Result<Box<dyn Policy>, PolicyError> {
    let limits = ControlLimits {
        v_max: cfg.v_max_robot,
        a_max: cfg.a_max_robot,
    };
    Ok(match method {
        MethodId::Mb => Box::new(CostmapPolicy::new(false, cfg, *nav)?),
        MethodId::Snl => {
            nav.social.validate()?;
            Box::new(CostmapPolicy::new(true, cfg, social_nav(nav, cfg))?)
        }
        MethodId::Tdp => Box::new(TdpPolicy::new(cfg, social_nav(nav, cfg))?),
        MethodId::Hh => Box::new(HhPolicy {
            speed: cfg.v_human,
            a_max: limits.a_max,
            contact_radius: cfg.r_robot + cfg.r_human,
            tolerance: nav.tracking.goal_tolerance,
        }),
        MethodId::External(name) => {
            let f = registry
                .factories
                .get(name)
                .ok_or_else(|| PolicyError::UnknownExternal(name.clone()))?;
            f(cfg)?
        }
    })
}

/// Social zones start at the edge of the person's lethal disc unless the
/// caller already placed them.
fn social_nav(nav: &NavParams, cfg: &ScenarioConfig) -> NavParams {
    let mut nav = *nav;
    if nav.social.inner_radius == 0.0 {
        nav.social.inner_radius = cfg.r_human + cfg.r_robot;
    }
    nav
}

/// Replan bookkeeping shared by the planning policies.
#[derive(Debug, Clone)]
struct Schedule {
    period: f64,
    planned_at: Option<f64>,
    goal: Option<Vec2>,
}

impl Schedule {
    fn due(&self, obs: &Observation) -> bool {
        self.goal != Some(obs.goal)
            || self
                .planned_at
                .is_none_or(|p| obs.t - p >= self.period - 1e-9)
    }

    fn mark(&mut self, obs: &Observation) {
        self.planned_at = Some(obs.t);
        self.goal = Some(obs.goal);
    }
}

/// Direction that takes the robot out of a person's way: sideways off their
/// walking line when they move, straight away when they stand still.
fn escape_direction(rel: Vec2, person_velocity: Vec2) -> Option<Vec2> {
    let Some(heading) = person_velocity
        .normalized()
        .filter(|_| person_velocity.norm() > 0.1)
    else {
        return rel.normalized();
    };
    let side = heading.perp();
    let side = if rel.dot(side) < 0.0 { -side } else { side };
    (side + rel.normalized().unwrap_or(side) * 0.5).normalized()
}

/// What a planning policy does when it has no plan, typically because a
/// person stands on or next to its goal: give way from the nearest person
/// whose footprint clearance is under `keep_clear`, at half speed, and
/// otherwise wait.
fn give_way(obs: &Observation, contact_radius: f64, keep_clear: f64, v_max: f64) -> Vec2 {
    let nearest = obs
        .humans
        .iter()
        .map(|h| (obs.robot.position - h.position, h.velocity))
        .filter(|(d, _)| d.norm() < contact_radius + keep_clear)
        .min_by(|a, b| a.0.norm().total_cmp(&b.0.norm()));
    nearest
        .and_then(|(d, v)| escape_direction(d, v))
        .map_or(Vec2::ZERO, |d| d * (0.5 * v_max))
}

/// The social variant's courtesy rule: someone inside the social distance
/// who is still closing in gets the right of way, whatever the plan says.
fn yield_to_approaching(
    obs: &Observation,
    contact_radius: f64,
    keep_clear: f64,
    v_max: f64,
) -> Option<Vec2> {
    obs.humans
        .iter()
        .filter_map(|h| {
            let rel = obs.robot.position - h.position;
            let closing = rel.dot(h.velocity - obs.robot.velocity) > 0.0;
            (closing && rel.norm() < contact_radius + keep_clear).then_some((rel, h.velocity))
        })
        .min_by(|a, b| a.0.norm().total_cmp(&b.0.norm()))
        .and_then(|(rel, v)| escape_direction(rel, v))
        .map(|d| d * v_max)
}

/// MB (people as lethal discs only) and SNL (plus a Gaussian social layer).
struct CostmapPolicy {
    social: bool,
    base: Costmap,
    nav: NavParams,
    limits: ControlLimits,
    /// People are lethal out to their radius plus the robot's.
    obstacle_radius: f64,
    /// Clearance kept from people while waiting for a plan.
    keep_clear: f64,
    path: Option<Vec<Vec2>>,
    schedule: Schedule,
}

impl CostmapPolicy {
    fn new(social: bool, cfg: &ScenarioConfig, nav: NavParams) -> Result<Self, PolicyError> {
        Ok(CostmapPolicy {
            social,
            base: build_static_costmap(cfg, nav.resolution)?,
            nav,
            limits: ControlLimits {
                v_max: cfg.v_max_robot,
                a_max: cfg.a_max_robot,
            },
            obstacle_radius: cfg.r_human + cfg.r_robot,
            // Only the social variant keeps its distance while waiting.
            keep_clear: if social { cfg.d_social } else { 0.0 },
            path: None,
            schedule: Schedule {
                period: nav.replan_period,
                planned_at: None,
                goal: None,
            },
        })
    }

    fn replan(&mut self, obs: &Observation) {
        let mut map = self.base.clone();
        for h in &obs.humans {
            map.stamp_lethal_disc(h.position, self.obstacle_radius);
        }
        if self.social {
            for h in &obs.humans {
                map = apply_social_layer(&map, h, &self.nav.social);
            }
        }
        self.path = plan_grid(&map, obs.robot.position, obs.goal, self.nav.w_cost)
            .map(|p| p.to_world(&map, obs.robot.position, obs.goal))
            .ok();
        self.schedule.mark(obs);
    }
}

impl Policy for CostmapPolicy {
    fn command(&mut self, obs: &Observation) -> Result<Vec2, PolicyError> {
        if self.schedule.due(obs) {
            self.replan(obs);
        }
        if self.social {
            if let Some(cmd) = yield_to_approaching(
                obs,
                self.obstacle_radius,
                self.keep_clear,
                self.limits.v_max,
            ) {
                return Ok(cmd);
            }
        }
        for attempt in 0..2 {
            let Some(path) = &self.path else {
                return Ok(give_way(
                    obs,
                    self.obstacle_radius,
                    self.keep_clear,
                    self.limits.v_max,
                ));
            };
            match local_control(
                PlanRef::Path(path),
                &obs.robot,
                &self.limits,
                &self.nav.tracking,
            ) {
                Ok(cmd) => return Ok(cmd),
                Err(ControlError::ReplanNeeded { .. }) if attempt == 0 => self.replan(obs),
                Err(_) => return Ok(Vec2::ZERO),
            }
        }
        Ok(Vec2::ZERO)
    }
}

/// Time-expanded planning against constant-velocity predictions.
struct TdpPolicy {
    base: Costmap,
    params: TdpParams,
    nav: NavParams,
    limits: ControlLimits,
    plan: Option<TimedPlan>,
    keep_clear: f64,
    schedule: Schedule,
}

impl TdpPolicy {
    fn new(cfg: &ScenarioConfig, nav: NavParams) -> Result<Self, PolicyError> {
        nav.social.validate()?;
        let params = TdpParams {
            horizon: nav.horizon,
            layer_dt: nav.layer_dt,
            v_max: cfg.v_max_robot,
            w_cost: nav.w_cost,
            obstacle_radius: cfg.r_human + cfg.r_robot,
            social: nav.social,
        };
        Ok(TdpPolicy {
            base: build_static_costmap(cfg, nav.resolution)?,
            params,
            nav,
            limits: ControlLimits {
                v_max: cfg.v_max_robot,
                a_max: cfg.a_max_robot,
            },
            plan: None,
            keep_clear: cfg.d_social,
            schedule: Schedule {
                period: nav.replan_period,
                planned_at: None,
                goal: None,
            },
        })
    }

    fn replan(&mut self, obs: &Observation) {
        self.plan = plan_time_astar(
            &self.base,
            &obs.humans,
            obs.robot.position,
            obs.goal,
            &self.params,
        )
        .ok();
        self.schedule.mark(obs);
    }
}

impl Policy for TdpPolicy {
    fn command(&mut self, obs: &Observation) -> Result<Vec2, PolicyError> {
        if self.schedule.due(obs) {
            self.replan(obs);
        }
        for attempt in 0..2 {
            let (Some(plan), Some(t0)) = (&self.plan, self.schedule.planned_at) else {
                return Ok(give_way(
                    obs,
                    self.params.obstacle_radius,
                    self.keep_clear,
                    self.limits.v_max,
                ));
            };
            let r = PlanRef::Timed {
                plan,
                elapsed: obs.t - t0,
            };
            match local_control(r, &obs.robot, &self.limits, &self.nav.tracking) {
                Ok(cmd) => return Ok(cmd),
                Err(ControlError::ReplanNeeded { .. }) if attempt == 0 => self.replan(obs),
                Err(_) => return Ok(Vec2::ZERO),
            }
        }
        Ok(Vec2::ZERO)
    }
}

/// A person doing the robot's job: straight to each waypoint at walking
/// speed, ignoring costmaps, stopping only to avoid walking into someone.
struct HhPolicy {
    speed: f64,
    a_max: f64,
    contact_radius: f64,
    tolerance: f64,
}

/// Extra clearance the HH agent keeps before it stops.
const HH_STOP_MARGIN: f64 = 0.05;

impl Policy for HhPolicy {
    fn command(&mut self, obs: &Observation) -> Result<Vec2, PolicyError> {
        let to_goal = obs.goal - obs.robot.position;
        let d = to_goal.norm();
        if d <= self.tolerance {
            return Ok(Vec2::ZERO);
        }
        let dir = to_goal * (1.0 / d);
        let blocked = obs.humans.iter().any(|h| {
            let rel = h.position - obs.robot.position;
            rel.norm() < self.contact_radius + HH_STOP_MARGIN && rel.dot(dir) > 0.0
        });
        if blocked {
            return Ok(Vec2::ZERO);
        }
        Ok(dir * self.speed.min((2.0 * self.a_max * d).sqrt()))
    }
}

/// External policy speaking the wire schema over a line-delimited JSON stream:
/// one `state` message out, one `input` message back, per tick.
pub struct StreamPolicy<R, W> {
    reader: R,
    writer: W,
    seq: SeqCounter,
    tick: u64,
}

impl<R: BufRead + Send, W: Write + Send> StreamPolicy<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamPolicy {
            reader,
            writer,
            seq: SeqCounter::default(),
            tick: 0,
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> Policy for StreamPolicy<R, W> {
    fn command(&mut self, obs: &Observation) -> Result<Vec2, PolicyError> {
        let transport = |e: std::io::Error| PolicyError::Transport(e.to_string());
        let msg = self.seq.wrap(WireBody::State(StatePayload {
            t: obs.t,
            tick: self.tick,
            robot: obs.robot,
            humans: obs.humans.clone(),
            goal: Some(obs.goal),
            cartons_delivered: 0,
            carrying: false,
            completed: false,
        }));
        self.tick += 1;
        let line =
            serde_json::to_string(&msg).map_err(|e| PolicyError::Transport(e.to_string()))?;
        writeln!(self.writer, "{line}").map_err(transport)?;
        self.writer.flush().map_err(transport)?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply).map_err(transport)? == 0 {
            return Err(PolicyError::Transport("policy closed its output".into()));
        }
        let reply: WireMessage = serde_json::from_str(reply.trim())
            .map_err(|e| PolicyError::Transport(e.to_string()))?;
        match reply.body {
            WireBody::Input(input) if input.velocity().is_finite() => Ok(input.velocity()),
            WireBody::Input(_) => Err(PolicyError::NonFinite),
            other => Err(PolicyError::Transport(format!(
                "expected an input message, got `{}`",
                other.kind()
            ))),
        }
    }
}

/// Child process speaking the stream protocol on stdin/stdout.
pub struct ProcessPolicy {
    inner: StreamPolicy<BufReader<ChildStdout>, ChildStdin>,
    child: Child,
}

impl ProcessPolicy {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, PolicyError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| PolicyError::Transport(format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ProcessPolicy {
            inner: StreamPolicy::new(BufReader::new(stdout), stdin),
            child,
        })
    }
}

impl Policy for ProcessPolicy {
    fn command(&mut self, obs: &Observation) -> Result<Vec2, PolicyError> {
        self.inner.command(obs)
    }
}

impl Drop for ProcessPolicy {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Layout;
    use crate::wire::InputPayload;
    use std::io::Cursor;

    fn obs(robot: Vec2, humans: Vec<AgentState>, goal: Vec2) -> Observation {
        Observation {
            t: 0.0,
            robot: AgentState::at(robot),
            humans,
            goal,
        }
    }

    #[test]
    fn hh_walks_at_human_speed() {
        let cfg = ScenarioConfig::defaults(Layout::Coinciding);
        let mut p = make_policy(&MethodId::Hh, &cfg, &PolicyRegistry::new()).unwrap();
        let cmd = p
            .command(&obs(Vec2::new(1.25, 1.0), vec![], Vec2::new(1.25, 3.0)))
            .unwrap();
        assert!((cmd.norm() - cfg.v_human).abs() < 1e-12);
        assert!(cmd.norm() > cfg.v_max_robot);
    }

    #[test]
    fn hh_stops_before_contact() {
        let cfg = ScenarioConfig::defaults(Layout::Coinciding);
        let mut p = make_policy(&MethodId::Hh, &cfg, &PolicyRegistry::new()).unwrap();
        let human = AgentState::at(Vec2::new(1.25, 1.5));
        let cmd = p
            .command(&obs(
                Vec2::new(1.25, 1.0),
                vec![human],
                Vec2::new(1.25, 3.0),
            ))
            .unwrap();
        assert_eq!(cmd, Vec2::ZERO);
    }

    #[test]
    fn unknown_external_rejected() {
        let cfg = ScenarioConfig::defaults(Layout::Coinciding);
        let err = make_policy(
            &MethodId::External("CADRL".into()),
            &cfg,
            &PolicyRegistry::new(),
        )
        .err()
        .unwrap();
        assert_eq!(err, PolicyError::UnknownExternal("CADRL".into()));
    }

    #[test]
    fn registered_external_is_used() {
        struct Constant;
        impl Policy for Constant {
            fn command(&mut self, _: &Observation) -> Result<Vec2, PolicyError> {
                Ok(Vec2::new(0.1, 0.0))
            }
        }
        let mut reg = PolicyRegistry::new();
        reg.register("CONST", |_| Ok(Box::new(Constant) as Box<dyn Policy>));
        let cfg = ScenarioConfig::defaults(Layout::Coinciding);
        let mut p = make_policy(&MethodId::External("CONST".into()), &cfg, &reg).unwrap();
        assert_eq!(
            p.command(&obs(Vec2::new(1.0, 1.0), vec![], Vec2::new(1.0, 2.0)))
                .unwrap(),
            Vec2::new(0.1, 0.0)
        );
    }

    #[test]
    fn stream_policy_round_trip() {
        let reply = WireMessage {
            seq: 0,
            body: WireBody::Input(InputPayload { vx: 0.2, vy: -0.1 }),
        };
        let input = format!("{}\n", serde_json::to_string(&reply).unwrap());
        let mut out = Vec::new();
        let cmd = {
            let mut p = StreamPolicy::new(Cursor::new(input.into_bytes()), &mut out);
            p.command(&obs(Vec2::new(1.0, 1.0), vec![], Vec2::new(1.0, 2.0)))
                .unwrap()
        };
        assert_eq!(cmd, Vec2::new(0.2, -0.1));
        let sent: WireMessage =
            serde_json::from_slice(out.split(|b| *b == b'\n').next().unwrap()).unwrap();
        match sent.body {
            WireBody::State(s) => assert_eq!(s.goal, Some(Vec2::new(1.0, 2.0))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stream_policy_rejects_wrong_reply() {
        let reply = WireMessage {
            seq: 0,
            body: WireBody::Error(crate::wire::ErrorPayload {
                code: "x".into(),
                message: "y".into(),
                details: vec![],
            }),
        };
        let input = format!("{}\n", serde_json::to_string(&reply).unwrap());
        let mut p = StreamPolicy::new(Cursor::new(input.into_bytes()), Vec::new());
        assert!(matches!(
            p.command(&obs(Vec2::new(1.0, 1.0), vec![], Vec2::new(1.0, 2.0))),
            Err(PolicyError::Transport(_))
        ));
    }

    #[test]
    fn snl_matches_mb_when_zone_is_far() {
        let cfg = ScenarioConfig::defaults(Layout::Coinciding);
        let reg = PolicyRegistry::new();
        // person 1.5 m off a straight path; zone cutoff is 1.2 m
        let human = AgentState::at(Vec2::new(2.0, 2.0));
        let o = obs(Vec2::new(0.5, 1.0), vec![human], Vec2::new(0.5, 3.0));
        let mut mb = make_policy(&MethodId::Mb, &cfg, &reg).unwrap();
        let mut snl = make_policy(&MethodId::Snl, &cfg, &reg).unwrap();
        assert_eq!(mb.command(&o).unwrap(), snl.command(&o).unwrap());
    }
}
