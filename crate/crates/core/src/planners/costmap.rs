use super::PlanError;
use crate::geometry::Vec2;
use crate::scenario::ScenarioConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const LETHAL: u8 = 255;
/// Highest cost a soft layer may produce.
pub const MAX_SOFT: u8 = 254;
/// Cost of the first cell outside the lethal wall band.
pub const INSCRIBED: u8 = 252;
/// Exponential decay rate of wall inflation, 1/m.
pub const INFLATION_DECAY: f64 = 10.0;
/// Wall inflation ends this far from the wall (m).
pub const INFLATION_RADIUS: f64 = 0.8;

/// Grid index. Field order makes the derived `Ord` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub y: usize,
    pub x: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { y, x }
    }

    pub fn is_neighbor_or_same(self, other: Cell) -> bool {
        self.x.abs_diff(other.x) <= 1 && self.y.abs_diff(other.y) <= 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Costmap {
    resolution_mm: u64,
    pub width: usize,
    pub height: usize,
    origin: (i64, i64),
    cost: Vec<u8>,
}

impl Costmap {
    /// All-free map. `resolution` is stored at millimeter precision.
    pub fn new(width: usize, height: usize, resolution: f64, origin: Vec2) -> Self {
        Costmap {
            resolution_mm: (resolution * 1000.0).round() as u64,
            width,
            height,
            origin: (
                (origin.x * 1000.0).round() as i64,
                (origin.y * 1000.0).round() as i64,
            ),
            cost: vec![0; width * height],
        }
    }

    pub fn from_costs(width: usize, height: usize, resolution: f64, cost: Vec<u8>) -> Self {
        assert_eq!(cost.len(), width * height, "cost grid size mismatch");
        let mut map = Costmap::new(width, height, resolution, Vec2::ZERO);
        map.cost = cost;
        map
    }

    pub fn resolution(&self) -> f64 {
        self.resolution_mm as f64 / 1000.0
    }

    pub fn origin(&self) -> Vec2 {
        Vec2::new(self.origin.0 as f64 / 1000.0, self.origin.1 as f64 / 1000.0)
    }

    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    /// Row-major index.
    pub fn index(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn cell_of(&self, p: Vec2) -> Option<Cell> {
        let o = self.origin();
        let r = self.resolution();
        let fx = ((p.x - o.x) / r).floor();
        let fy = ((p.y - o.y) / r).floor();
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let c = Cell::new(fx as usize, fy as usize);
        self.contains(c).then_some(c)
    }

    pub fn cell_center(&self, c: Cell) -> Vec2 {
        let o = self.origin();
        let r = self.resolution();
        Vec2::new(o.x + (c.x as f64 + 0.5) * r, o.y + (c.y as f64 + 0.5) * r)
    }

    pub fn get(&self, c: Cell) -> u8 {
        self.cost[self.index(c)]
    }

    pub fn set(&mut self, c: Cell, v: u8) {
        let i = self.index(c);
        self.cost[i] = v;
    }

    pub fn is_lethal(&self, c: Cell) -> bool {
        self.get(c) == LETHAL
    }

    pub fn costs(&self) -> &[u8] {
        &self.cost
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        h.update(self.resolution_mm.to_le_bytes());
        h.update(self.origin.0.to_le_bytes());
        h.update(self.origin.1.to_le_bytes());
        h.update(&self.cost);
        hex::encode(h.finalize())
    }

    /// Cells whose centers lie within `radius` of `center`.
    pub fn cells_within(&self, center: Vec2, radius: f64) -> impl Iterator<Item = Cell> + '_ {
        let o = self.origin();
        let r = self.resolution();
        let span = |lo: f64, hi: f64, n: usize| {
            let a = ((lo / r).floor().max(0.0)) as usize;
            let b = ((hi / r).ceil().max(0.0) as usize).min(n);
            a..b
        };
        let xs = span(center.x - radius - o.x, center.x + radius - o.x, self.width);
        let ys = span(
            center.y - radius - o.y,
            center.y + radius - o.y,
            self.height,
        );
        ys.flat_map(move |y| xs.clone().map(move |x| Cell::new(x, y)))
            .filter(move |c| self.cell_center(*c).distance(center) <= radius)
    }

    /// Marks every cell within `radius` of `center` lethal.
    pub fn stamp_lethal_disc(&mut self, center: Vec2, radius: f64) {
        let cells: Vec<Cell> = self.cells_within(center, radius).collect();
        for c in cells {
            self.set(c, LETHAL);
        }
    }
}

/// Wall cost for a cell center `wall_distance` meters from the nearest wall.
///
/// Lethal inside the robot radius, then `INSCRIBED * exp(-INFLATION_DECAY * (d - r_robot))`
/// (floored) out to `INFLATION_RADIUS`, zero beyond.
pub fn inflation_cost(wall_distance: f64, r_robot: f64) -> u8 {
    if wall_distance <= r_robot {
        LETHAL
    } else if wall_distance >= INFLATION_RADIUS {
        0
    } else {
        (INSCRIBED as f64 * (-INFLATION_DECAY * (wall_distance - r_robot)).exp()).floor() as u8
    }
}

/// Room-sized grid with lethal wall band of width `r_robot` and an
/// exponentially decaying inflation band beyond it.
pub fn build_static_costmap(cfg: &ScenarioConfig, resolution: f64) -> Result<Costmap, PlanError> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(PlanError::InvalidParameter(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    if resolution > cfg.room_width || resolution > cfg.room_length {
        return Err(PlanError::InvalidParameter(format!(
            "resolution {resolution} m exceeds the {}x{} m room",
            cfg.room_width, cfg.room_length
        )));
    }
    let width = (cfg.room_width / resolution - 1e-9).ceil() as usize;
    let height = (cfg.room_length / resolution - 1e-9).ceil() as usize;
    let mut map = Costmap::new(width, height, resolution, Vec2::ZERO);
    for y in 0..height {
        for x in 0..width {
            let c = Cell::new(x, y);
            let p = map.cell_center(c);
            let d =
                p.x.min(cfg.room_width - p.x)
                    .min(p.y)
                    .min(cfg.room_length - p.y);
            map.set(c, inflation_cost(d, cfg.r_robot));
        }
    }
    Ok(map)
}
