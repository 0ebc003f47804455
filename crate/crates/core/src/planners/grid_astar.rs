//! 8-connected A* over a costmap.
//!
//! Edge costs are integers in micro-cells so that equal-cost paths compare
//! exactly: a move into cell `n` costs `round(len * (1 + cost(n)/255 * w_cost))`
//! with `len` = 1_000_000 for straight and 1_414_214 for diagonal moves.

use super::costmap::{Cell, Costmap, LETHAL};
use super::PlanError;
use crate::geometry::Vec2;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

pub const STRAIGHT: u64 = 1_000_000;
pub const DIAGONAL: u64 = 1_414_214;
const DIAGONAL_FLOOR: u64 = 1_414_213;

/// Default weight of cell cost relative to distance.
pub const DEFAULT_COST_WEIGHT: f64 = 10.0;

pub const NEIGHBORS: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

pub fn step_cost(len: u64, cell_cost: u8, w_cost: f64) -> u64 {
    (len as f64 * (1.0 + cell_cost as f64 / 255.0 * w_cost)).round() as u64
}

/// Admissible octile lower bound.
pub fn octile(a: Cell, b: Cell) -> u64 {
    let dx = a.x.abs_diff(b.x) as u64;
    let dy = a.y.abs_diff(b.y) as u64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    STRAIGHT * (hi - lo) + DIAGONAL_FLOOR * lo
}

/// Legal successor of `from` in direction `(dx, dy)` on `map`, with its base length.
/// Diagonal moves may not clip a lethal orthogonal neighbor.
pub(crate) fn successor(map: &Costmap, from: Cell, dx: i64, dy: i64) -> Option<(Cell, u64)> {
    let nx = from.x as i64 + dx;
    let ny = from.y as i64 + dy;
    if nx < 0 || ny < 0 || nx >= map.width as i64 || ny >= map.height as i64 {
        return None;
    }
    let to = Cell::new(nx as usize, ny as usize);
    if map.get(to) == LETHAL {
        return None;
    }
    if dx != 0 && dy != 0 {
        let side_a = Cell::new(nx as usize, from.y);
        let side_b = Cell::new(from.x, ny as usize);
        if map.get(side_a) == LETHAL || map.get(side_b) == LETHAL {
            return None;
        }
        Some((to, DIAGONAL))
    } else {
        Some((to, STRAIGHT))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    /// Integer path cost in micro-cells.
    pub cost: u64,
}

impl GridPath {
    /// Polyline from the exact start through interior cell centers to the exact goal.
    pub fn to_world(&self, map: &Costmap, start: Vec2, goal: Vec2) -> Vec<Vec2> {
        let mut pts = Vec::with_capacity(self.cells.len() + 1);
        pts.push(start);
        if self.cells.len() > 2 {
            pts.extend(
                self.cells[1..self.cells.len() - 1]
                    .iter()
                    .map(|c| map.cell_center(*c)),
            );
        }
        pts.push(goal);
        pts
    }
}

pub fn polyline_length(pts: &[Vec2]) -> f64 {
    pts.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// A* between world points.
pub fn plan_grid(
    map: &Costmap,
    start: Vec2,
    goal: Vec2,
    w_cost: f64,
) -> Result<GridPath, PlanError> {
    let s = map
        .cell_of(start)
        .ok_or(PlanError::OutOfMap { which: "start" })?;
    let g = map
        .cell_of(goal)
        .ok_or(PlanError::OutOfMap { which: "goal" })?;
    plan_grid_cells(map, s, g, w_cost)
}

/// A* between cells. The start cell's own cost is ignored so a robot inside a
/// freshly stamped obstacle can still leave it.
///
/// Ties on `f` go to the lower heuristic, then to the lower row-major index.
pub fn plan_grid_cells(
    map: &Costmap,
    start: Cell,
    goal: Cell,
    w_cost: f64,
) -> Result<GridPath, PlanError> {
    if !map.contains(start) {
        return Err(PlanError::OutOfMap { which: "start" });
    }
    if !map.contains(goal) {
        return Err(PlanError::OutOfMap { which: "goal" });
    }
    if start == goal {
        return Ok(GridPath {
            cells: vec![start],
            cost: 0,
        });
    }
    if map.is_lethal(goal) {
        return Err(PlanError::Unreachable);
    }
    let n = map.len();
    let mut g = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let si = map.index(start);
    g[si] = 0;
    let h0 = octile(start, goal);
    open.push(Reverse((h0, h0, si)));

    while let Some(Reverse((_, _, ci))) = open.pop() {
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        let cur = map.cell_at(ci);
        if cur == goal {
            let mut cells = vec![cur];
            let mut i = ci;
            while parent[i] != usize::MAX {
                i = parent[i];
                cells.push(map.cell_at(i));
            }
            cells.reverse();
            return Ok(GridPath { cells, cost: g[ci] });
        }
        for (dx, dy) in NEIGHBORS {
            let Some((nb, len)) = successor(map, cur, dx, dy) else {
                continue;
            };
            let ni = map.index(nb);
            if closed[ni] {
                continue;
            }
            let cand = g[ci] + step_cost(len, map.get(nb), w_cost);
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = ci;
                let h = octile(nb, goal);
                open.push(Reverse((cand + h, h, ni)));
            }
        }
    }
    Err(PlanError::Unreachable)
}
