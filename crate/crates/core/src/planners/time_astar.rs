//! Time-expanded A* against constant-velocity pedestrian predictions.
//!
//! Time is counted in integer ticks. A straight move lasts two ticks, a
//! diagonal move three and a wait two, with one tick = `layer_dt / ticks_per_layer`
//! chosen so that a straight move never exceeds `v_max`. Layer `k` holds the
//! costmap predicted for `[k * layer_dt, (k + 1) * layer_dt)`; beyond the last
//! layer time is clamped and the last layer repeats, which keeps the graph finite.

use super::costmap::{Cell, Costmap};
use super::grid_astar::{self, octile, step_cost, successor, NEIGHBORS, STRAIGHT};
use super::social::{add_social_zone, SocialLayerParams};
use super::PlanError;
use crate::geometry::Vec2;
use crate::sim::AgentState;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;

pub const STRAIGHT_TICKS: u32 = 2;
pub const DIAGONAL_TICKS: u32 = 3;
pub const WAIT_TICKS: u32 = 2;
/// Base cost of one wait, in the same micro-cell units as moves.
pub const WAIT_UNITS: u64 = STRAIGHT / 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdpParams {
    pub horizon: f64,
    pub layer_dt: f64,
    pub v_max: f64,
    pub w_cost: f64,
    /// Radius of the lethal disc around each predicted person, in robot
    /// configuration space (person radius plus robot radius).
    pub obstacle_radius: f64,
    pub social: SocialLayerParams,
}

impl TdpParams {
    pub fn new(v_max: f64, obstacle_radius: f64) -> Self {
        TdpParams {
            horizon: 5.0,
            layer_dt: 0.5,
            v_max,
            w_cost: grid_astar::DEFAULT_COST_WEIGHT,
            obstacle_radius,
            social: SocialLayerParams::default(),
        }
    }

    pub fn layer_count(&self) -> usize {
        (self.horizon / self.layer_dt + 1e-9).floor() as usize + 1
    }
}

/// Discretization of time shared by the search and its callers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub ticks_per_layer: u32,
    pub tick: f64,
    pub layers: usize,
}

impl TimeGrid {
    /// Ticks short enough that a straight move (two ticks) respects `v_max`.
    pub fn for_speed(
        resolution: f64,
        v_max: f64,
        layer_dt: f64,
        layers: usize,
    ) -> Result<Self, PlanError> {
        if !(layer_dt > 0.0 && v_max > 0.0 && resolution > 0.0) || layers == 0 {
            return Err(PlanError::InvalidParameter(
                "time grid needs positive layer_dt, v_max and resolution".into(),
            ));
        }
        let straight_time = resolution / v_max;
        let ticks = (layer_dt * STRAIGHT_TICKS as f64 / straight_time + 1e-9).floor() as u32;
        if ticks == 0 {
            return Err(PlanError::InvalidParameter(format!(
                "layer_dt {layer_dt} s is shorter than half a straight move"
            )));
        }
        Ok(TimeGrid {
            ticks_per_layer: ticks,
            tick: layer_dt / ticks as f64,
            layers,
        })
    }

    pub fn cap(&self) -> u32 {
        (self.layers as u32 - 1) * self.ticks_per_layer
    }

    pub fn layer_of(&self, tick: u32) -> usize {
        ((tick / self.ticks_per_layer) as usize).min(self.layers - 1)
    }

    pub fn advance(&self, tick: u32, by: u32) -> u32 {
        (tick + by).min(self.cap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    /// Seconds since the plan was made.
    pub t: f64,
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedPlan {
    pub states: Vec<TimedState>,
    pub horizon: f64,
    pub cost: u64,
    pub start_point: Vec2,
    pub goal_point: Vec2,
    pub waypoints: Vec<Vec2>,
}

impl TimedPlan {
    pub fn wait_count(&self) -> usize {
        self.states
            .windows(2)
            .filter(|w| w[0].cell == w[1].cell)
            .count()
    }

    pub fn duration(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t)
    }

    /// Planned position at `t`, linearly interpolated; clamps to the ends.
    pub fn position_at(&self, t: f64) -> Vec2 {
        let n = self.states.len();
        if n == 0 {
            return self.goal_point;
        }
        if t <= self.states[0].t {
            return self.waypoints[0];
        }
        for i in 1..n {
            let (a, b) = (&self.states[i - 1], &self.states[i]);
            if t <= b.t {
                let span = b.t - a.t;
                let f = if span > 0.0 { (t - a.t) / span } else { 1.0 };
                return self.waypoints[i - 1] + (self.waypoints[i] - self.waypoints[i - 1]) * f;
            }
        }
        self.waypoints[n - 1]
    }
}

/// Search result in tick units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedPath {
    /// `(cell, uncapped tick)` along the path.
    pub nodes: Vec<(Cell, u32)>,
    pub cost: u64,
}

/// A* over `(cell, tick)` states with a wait action. `layers[k]` is the costmap
/// for layer `k`; all layers share dimensions.
pub fn search_time_expanded(
    layers: &[Costmap],
    grid: &TimeGrid,
    start: Cell,
    goal: Cell,
    w_cost: f64,
) -> Result<TimedPath, PlanError> {
    assert_eq!(
        layers.len(),
        grid.layers,
        "layer stack does not match time grid"
    );
    let base = &layers[0];
    if !base.contains(start) {
        return Err(PlanError::OutOfMap { which: "start" });
    }
    if !base.contains(goal) {
        return Err(PlanError::OutOfMap { which: "goal" });
    }
    if start == goal {
        return Ok(TimedPath {
            nodes: vec![(start, 0)],
            cost: 0,
        });
    }
    if layers.iter().all(|l| l.is_lethal(goal)) {
        return Err(PlanError::Unreachable);
    }
    let ncells = base.len();
    let cap = grid.cap();
    let nstates = ncells * (cap as usize + 1);
    let id = |cell_idx: usize, tick: u32| tick as usize * ncells + cell_idx;

    let mut g = vec![u64::MAX; nstates];
    // parent state id and ticks spent on the edge into this state
    let mut parent: Vec<(u32, u8)> = vec![(u32::MAX, 0); nstates];
    let mut closed = vec![false; nstates];
    let mut open = BinaryHeap::new();

    let s0 = id(base.index(start), 0);
    g[s0] = 0;
    let h0 = octile(start, goal);
    open.push(Reverse((h0, h0, base.index(start), 0u32)));

    while let Some(Reverse((_, _, ci, tick))) = open.pop() {
        let sid = id(ci, tick);
        if closed[sid] {
            continue;
        }
        closed[sid] = true;
        let cur = base.cell_at(ci);
        if cur == goal {
            return Ok(TimedPath {
                nodes: unwind(base, &parent, sid, ncells),
                cost: g[sid],
            });
        }
        let mut relax = |to: Cell, to_tick: u32, edge: u64, dur: u32, g: &mut Vec<u64>| {
            let ni = base.index(to);
            let nid = id(ni, to_tick);
            if closed[nid] {
                return;
            }
            let cand = g[sid] + edge;
            if cand < g[nid] {
                g[nid] = cand;
                parent[nid] = (sid as u32, dur as u8);
                let h = octile(to, goal);
                open.push(Reverse((cand + h, h, ni, to_tick)));
            }
        };
        for (dx, dy) in NEIGHBORS {
            let dur = if dx != 0 && dy != 0 {
                DIAGONAL_TICKS
            } else {
                STRAIGHT_TICKS
            };
            let nt = grid.advance(tick, dur);
            let map = &layers[grid.layer_of(nt)];
            if let Some((nb, len)) = successor(map, cur, dx, dy) {
                relax(nb, nt, step_cost(len, map.get(nb), w_cost), dur, &mut g);
            }
        }
        if tick < cap {
            let nt = grid.advance(tick, WAIT_TICKS);
            let map = &layers[grid.layer_of(nt)];
            if !map.is_lethal(cur) {
                relax(
                    cur,
                    nt,
                    step_cost(WAIT_UNITS, map.get(cur), w_cost),
                    WAIT_TICKS,
                    &mut g,
                );
            }
        }
    }
    Err(PlanError::Unreachable)
}

fn unwind(base: &Costmap, parent: &[(u32, u8)], mut sid: usize, ncells: usize) -> Vec<(Cell, u32)> {
    let mut rev = vec![(sid % ncells, 0u32)];
    let mut durations = Vec::new();
    while parent[sid].0 != u32::MAX {
        let (p, d) = parent[sid];
        durations.push(d as u32);
        sid = p as usize;
        rev.push((sid % ncells, 0));
    }
    rev.reverse();
    durations.reverse();
    let mut t = 0;
    let mut out = Vec::with_capacity(rev.len());
    out.push((base.cell_at(rev[0].0), 0));
    for (i, d) in durations.into_iter().enumerate() {
        t += d;
        out.push((base.cell_at(rev[i + 1].0), t));
    }
    out
}

/// Per-layer costmaps: `base` plus, for every person, a lethal disc and a
/// social zone at `position + velocity * k * layer_dt`.
pub fn predicted_layers(base: &Costmap, humans: &[AgentState], params: &TdpParams) -> Vec<Costmap> {
    (0..params.layer_count())
        .map(|k| {
            let mut m = base.clone();
            for h in humans {
                let p = h.position + h.velocity * (k as f64 * params.layer_dt);
                m.stamp_lethal_disc(p, params.obstacle_radius);
                add_social_zone(&mut m, p, h.velocity, &params.social);
            }
            m
        })
        .collect()
}

/// Plans from `start` to `goal` while predicted people move at constant velocity.
///
/// Failure is classified as [`PlanError::Blocked`] when the goal is unreachable
/// even with no people present, otherwise [`PlanError::HorizonTooShort`].
pub fn plan_time_astar(
    costmap: &Costmap,
    humans: &[AgentState],
    start: Vec2,
    goal: Vec2,
    params: &TdpParams,
) -> Result<TimedPlan, PlanError> {
    if !(params.layer_dt > 0.0 && params.horizon >= params.layer_dt) {
        return Err(PlanError::InvalidParameter(
            "need horizon >= layer_dt > 0".into(),
        ));
    }
    let s = costmap
        .cell_of(start)
        .ok_or(PlanError::OutOfMap { which: "start" })?;
    let g = costmap
        .cell_of(goal)
        .ok_or(PlanError::OutOfMap { which: "goal" })?;
    let layers = predicted_layers(costmap, humans, params);
    let grid = TimeGrid::for_speed(
        costmap.resolution(),
        params.v_max,
        params.layer_dt,
        layers.len(),
    )?;
    match search_time_expanded(&layers, &grid, s, g, params.w_cost) {
        Ok(path) => Ok(to_plan(costmap, &grid, &path, start, goal, params.horizon)),
        Err(PlanError::Unreachable) => {
            match grid_astar::plan_grid_cells(costmap, s, g, params.w_cost) {
                Ok(_) => Err(PlanError::HorizonTooShort),
                Err(_) => Err(PlanError::Blocked),
            }
        }
        Err(e) => Err(e),
    }
}

fn to_plan(
    map: &Costmap,
    grid: &TimeGrid,
    path: &TimedPath,
    start: Vec2,
    goal: Vec2,
    horizon: f64,
) -> TimedPlan {
    let states: Vec<TimedState> = path
        .nodes
        .iter()
        .map(|&(cell, tick)| TimedState {
            t: tick as f64 * grid.tick,
            cell,
        })
        .collect();
    let n = states.len();
    let waypoints = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            // waits at the start/goal cell keep the exact endpoint
            let first_run = states[..=i].iter().all(|p| p.cell == states[0].cell);
            let last_run = states[i..].iter().all(|p| p.cell == states[n - 1].cell);
            if last_run {
                goal
            } else if first_run {
                start
            } else {
                map.cell_center(s.cell)
            }
        })
        .collect();
    TimedPlan {
        states,
        horizon,
        cost: path.cost,
        start_point: start,
        goal_point: goal,
        waypoints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planners::costmap::LETHAL;

    #[test]
    fn time_grid_respects_speed() {
        let g = TimeGrid::for_speed(0.05, 0.3, 0.5, 11).unwrap();
        assert_eq!(g.ticks_per_layer, 6);
        assert!((g.tick - 1.0 / 12.0).abs() < 1e-12);
        // straight move speed
        assert!(0.05 / (2.0 * g.tick) <= 0.3 + 1e-12);
        assert_eq!(g.cap(), 60);
        assert_eq!(g.layer_of(59), 9);
        assert_eq!(g.layer_of(60), 10);
        assert_eq!(g.advance(59, 3), 60);
    }

    #[test]
    fn free_space_reduces_to_static_plan() {
        let map = Costmap::new(30, 30, 0.05, Vec2::ZERO);
        let params = TdpParams::new(0.3, 0.25);
        let start = map.cell_center(Cell::new(2, 3));
        let goal = map.cell_center(Cell::new(25, 20));
        let timed = plan_time_astar(&map, &[], start, goal, &params).unwrap();
        let flat = grid_astar::plan_grid(&map, start, goal, params.w_cost).unwrap();
        let cells: Vec<Cell> = timed.states.iter().map(|s| s.cell).collect();
        assert_eq!(cells, flat.cells);
        assert_eq!(timed.cost, flat.cost);
        assert_eq!(timed.wait_count(), 0);
        assert!(timed.states.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn blocked_vs_horizon() {
        let mut map = Costmap::new(10, 10, 0.05, Vec2::ZERO);
        for y in 0..10 {
            map.set(Cell::new(5, y), LETHAL);
        }
        let params = TdpParams::new(0.3, 0.25);
        let err = plan_time_astar(
            &map,
            &[],
            map.cell_center(Cell::new(1, 1)),
            map.cell_center(Cell::new(8, 8)),
            &params,
        )
        .unwrap_err();
        assert_eq!(err, PlanError::Blocked);

        // a person parked on the goal for the whole horizon
        let map = Costmap::new(10, 10, 0.05, Vec2::ZERO);
        let goal = map.cell_center(Cell::new(8, 8));
        let err = plan_time_astar(
            &map,
            &[AgentState::at(goal)],
            map.cell_center(Cell::new(1, 1)),
            goal,
            &params,
        )
        .unwrap_err();
        assert_eq!(err, PlanError::HorizonTooShort);
    }

    #[test]
    fn invalid_horizon_rejected() {
        let map = Costmap::new(10, 10, 0.05, Vec2::ZERO);
        let params = TdpParams {
            horizon: 0.2,
            ..TdpParams::new(0.3, 0.25)
        };
        assert!(matches!(
            plan_time_astar(&map, &[], Vec2::new(0.1, 0.1), Vec2::new(0.4, 0.4), &params),
            Err(PlanError::InvalidParameter(_))
        ));
    }

    #[test]
    fn position_interpolates_over_waits() {
        let plan = TimedPlan {
            states: vec![
                TimedState {
                    t: 0.0,
                    cell: Cell::new(0, 0),
                },
                TimedState {
                    t: 1.0,
                    cell: Cell::new(1, 0),
                },
                TimedState {
                    t: 2.0,
                    cell: Cell::new(1, 0),
                },
            ],
            horizon: 5.0,
            cost: 0,
            start_point: Vec2::new(0.0, 0.0),
            goal_point: Vec2::new(1.0, 0.0),
            waypoints: vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 0.0),
            ],
        };
        assert_eq!(plan.position_at(0.5), Vec2::new(0.5, 0.0));
        assert_eq!(plan.position_at(1.5), Vec2::new(1.0, 0.0));
        assert_eq!(plan.position_at(9.0), Vec2::new(1.0, 0.0));
        assert_eq!(plan.wait_count(), 1);
    }
}
