//! Independent reference implementations used by the integration tests and
//! the acceptance suite. Nothing here calls the library code it checks.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socbench_core::planners::costmap::{Cell, Costmap, LETHAL};
use socbench_core::sim::{AgentState, Sample, TrialKind, TrialLog, TrialMeta};
use socbench_core::{Layout, MethodId, Vec2};

pub const D_SAFE: f64 = 0.2;
pub const D_SOCIAL: f64 = 0.4;
pub const V_MAX: f64 = 0.3;
pub const RADIUS: f64 = 0.25;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn meta(seed: u64) -> TrialMeta {
    TrialMeta {
        kind: TrialKind::Trial,
        method: Some(MethodId::Mb),
        layout: Layout::Coinciding,
        seed,
        ped_mode: None,
        config_hash: String::new(),
    }
}

fn random_velocity(r: &mut ChaCha8Rng, max: f64) -> Vec2 {
    let a: f64 = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let s: f64 = r.random_range(0.0..=max);
    Vec2::new(s * a.cos(), s * a.sin())
}

/// Log assembled from samples, with the summary fields filled in the way a
/// simulator would.
pub fn log_from_samples(samples: Vec<Sample>, dt: f64, seed: u64) -> TrialLog {
    let path: f64 = samples
        .windows(2)
        .map(|w| dist(w[0].robot.position, w[1].robot.position))
        .sum();
    let min_distance = samples
        .iter()
        .flat_map(|s| {
            s.humans
                .iter()
                .map(move |h| dist(s.robot.position, h.position) - 2.0 * RADIUS)
        })
        .reduce(f64::min);
    let last = samples.last().map_or(0.0, |s| s.t);
    TrialLog {
        meta: meta(seed),
        dt,
        r_robot: RADIUS,
        r_human: RADIUS,
        samples,
        collision_count: 0,
        completed: true,
        robot_task_time: Some(last),
        human_task_time: Some(last),
        robot_path_length: path,
        min_distance,
        cartons_delivered: 3,
    }
}

/// Random trial log. People wander within about a meter of the robot so that
/// both distance thresholds are crossed often; the robot respects `V_MAX`.
pub fn synthetic_log(seed: u64) -> TrialLog {
    let mut r = rng(seed);
    let n = r.random_range(5..200usize);
    let n_humans = r.random_range(0..=3usize);
    let dt = 0.1;
    let mut pos = Vec2::new(r.random_range(0.5..2.0), r.random_range(0.5..3.5));
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let v = random_velocity(&mut r, V_MAX);
        let robot = AgentState::at(pos).with_velocity(v);
        let humans = (0..n_humans)
            .map(|_| {
                let a: f64 = r.random_range(0.0..std::f64::consts::TAU);
                let d: f64 = r.random_range(0.35..1.4);
                let at = pos + Vec2::new(d * a.cos(), d * a.sin());
                AgentState::at(at).with_velocity(random_velocity(&mut r, 1.0))
            })
            .collect();
        samples.push(Sample {
            t: k as f64 * dt,
            robot,
            humans,
            carton_event: None,
        });
        pos += v * dt;
    }
    let mut log = log_from_samples(samples, dt, seed);
    let last = log.last_time().max(0.1);
    log.robot_task_time = r.random_bool(0.8).then(|| r.random_range(0.05..=last));
    log.human_task_time = r.random_bool(0.8).then(|| r.random_range(0.05..=last));
    log.completed = r.random_bool(0.75);
    log.collision_count = if r.random_bool(0.7) {
        0
    } else {
        r.random_range(1..4)
    };
    log
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)).sqrt()
}

/// The six robot-centered ratios of one trial, straight from their
/// definitions: `[extra_robot, extra_human, dist, succ, haza, dec]`.
pub fn oracle_trial(
    log: &TrialLog,
    t_r: f64,
    t_h: f64,
    d_r: f64,
    d_safe: f64,
    d_social: f64,
    v_max: f64,
) -> [f64; 6] {
    let end = log.samples.last().map_or(0.0, |s| s.t);
    let t_rh = log.robot_task_time.unwrap_or(end);
    let t_hr = log.human_task_time.unwrap_or(end);
    let succ = if log.completed && log.collision_count == 0 {
        1.0
    } else {
        0.0
    };

    let people = log.samples.first().map_or(0, |s| s.humans.len());
    let mut ratios = vec![];
    for i in 0..people {
        let (mut t_haz, mut t_soc) = (0.0, 0.0);
        for s in &log.samples {
            let d = dist(s.robot.position, s.humans[i].position) - log.r_robot - log.r_human;
            if d < d_safe {
                t_haz += log.dt;
            }
            if d < d_social {
                t_soc += log.dt;
            }
        }
        if t_soc > 0.0 {
            ratios.push(t_haz / t_soc);
        }
    }
    let haza = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };

    let near: Vec<f64> = log
        .samples
        .iter()
        .filter(|s| {
            s.humans
                .iter()
                .any(|h| dist(s.robot.position, h.position) - log.r_robot - log.r_human < d_social)
        })
        .map(|s| s.robot.speed / v_max)
        .collect();
    let dec = if near.is_empty() {
        1.0
    } else {
        near.iter().sum::<f64>() / near.len() as f64
    };

    [
        t_r / t_rh,
        t_h / t_hr,
        d_r / log.robot_path_length,
        succ,
        haza,
        dec,
    ]
}

/// Mean of the per-trial oracle values over `logs`.
pub fn oracle_rcm(
    logs: &[TrialLog],
    t_r: f64,
    t_h: f64,
    d_r: f64,
    d_safe: f64,
    d_social: f64,
    v_max: f64,
) -> [f64; 6] {
    let mut acc = [0.0; 6];
    for l in logs {
        let v = oracle_trial(l, t_r, t_h, d_r, d_safe, d_social, v_max);
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc.map(|a| a / logs.len() as f64)
}

/// Cost of entering a cell, in the planners' micro-cell units.
fn enter_cost(len: u64, cell_cost: u8, w: f64) -> u64 {
    (len as f64 * (1.0 + cell_cost as f64 / 255.0 * w)).round() as u64
}

const STRAIGHT: u64 = 1_000_000;
const DIAGONAL: u64 = 1_414_214;

/// Moves allowed from `(x, y)` on `map`: in bounds, not lethal, and diagonals
/// may not squeeze between lethal orthogonal neighbors.
fn moves(map: &Costmap, x: usize, y: usize) -> Vec<(usize, usize, u64)> {
    let lethal = |x: i64, y: i64| map.get(Cell::new(x as usize, y as usize)) == LETHAL;
    let mut out = vec![];
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0
                || ny < 0
                || nx >= map.width as i64
                || ny >= map.height as i64
                || lethal(nx, ny)
            {
                continue;
            }
            if dx != 0 && dy != 0 && (lethal(nx, y as i64) || lethal(x as i64, ny)) {
                continue;
            }
            out.push((
                nx as usize,
                ny as usize,
                if dx != 0 && dy != 0 {
                    DIAGONAL
                } else {
                    STRAIGHT
                },
            ));
        }
    }
    out
}

/// Textbook Dijkstra with linear-scan selection. `None` when unreachable.
pub fn dijkstra_cost(map: &Costmap, start: Cell, goal: Cell, w: f64) -> Option<u64> {
    let n = map.width * map.height;
    let idx = |x: usize, y: usize| y * map.width + x;
    let mut dist = vec![u64::MAX; n];
    let mut done = vec![false; n];
    dist[idx(start.x, start.y)] = 0;
    loop {
        let u = (0..n)
            .filter(|&i| !done[i] && dist[i] != u64::MAX)
            .min_by_key(|&i| dist[i])?;
        let (x, y) = (u % map.width, u / map.width);
        if (x, y) == (goal.x, goal.y) {
            return Some(dist[u]);
        }
        done[u] = true;
        for (nx, ny, len) in moves(map, x, y) {
            let v = idx(nx, ny);
            let c = dist[u] + enter_cost(len, map.get(Cell::new(nx, ny)), w);
            if c < dist[v] {
                dist[v] = c;
            }
        }
    }
}

/// Brute-force Dijkstra over the full `(cell, tick)` graph.
///
/// A straight move takes 2 ticks, a diagonal 3 and a wait 2; time saturates at
/// the start of the last layer. Legality and cost of an action are judged on
/// the layer in force at the arrival tick. A wait costs half a straight move.
pub fn time_expanded_cost(
    layers: &[Costmap],
    ticks_per_layer: u32,
    start: Cell,
    goal: Cell,
    w: f64,
) -> Option<u64> {
    if start == goal {
        return Some(0);
    }
    let base = &layers[0];
    let cap = (layers.len() as u32 - 1) * ticks_per_layer;
    let cells = base.width * base.height;
    let states = cells * (cap as usize + 1);
    let id = |x: usize, y: usize, t: u32| t as usize * cells + y * base.width + x;
    let layer_at = |t: u32| &layers[((t / ticks_per_layer) as usize).min(layers.len() - 1)];

    let mut dist = vec![u64::MAX; states];
    let mut done = vec![false; states];
    dist[id(start.x, start.y, 0)] = 0;
    loop {
        let u = (0..states)
            .filter(|&i| !done[i] && dist[i] != u64::MAX)
            .min_by_key(|&i| dist[i])?;
        done[u] = true;
        let t = (u / cells) as u32;
        let (x, y) = ((u % cells) % base.width, (u % cells) / base.width);
        if (x, y) == (goal.x, goal.y) {
            return Some(dist[u]);
        }
        let relax = |nx: usize, ny: usize, nt: u32, c: u64, dist: &mut Vec<u64>| {
            let v = id(nx, ny, nt);
            if dist[u] + c < dist[v] {
                dist[v] = dist[u] + c;
            }
        };
        for (dx, dy) in [
            (-1i64, -1i64),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ] {
            let dur = if dx != 0 && dy != 0 { 3 } else { 2 };
            let nt = (t + dur).min(cap);
            let map = layer_at(nt);
            for (nx, ny, len) in moves(map, x, y) {
                if nx as i64 == x as i64 + dx && ny as i64 == y as i64 + dy {
                    relax(
                        nx,
                        ny,
                        nt,
                        enter_cost(len, map.get(Cell::new(nx, ny)), w),
                        &mut dist,
                    );
                }
            }
        }
        if t < cap {
            let nt = (t + 2).min(cap);
            let map = layer_at(nt);
            let here = map.get(Cell::new(x, y));
            if here != LETHAL {
                relax(x, y, nt, enter_cost(STRAIGHT / 2, here, w), &mut dist);
            }
        }
    }
}

/// Random `w x h` costmap: roughly `lethal_p` lethal cells, the rest drawn
/// from `palette`.
pub fn random_costmap(
    r: &mut ChaCha8Rng,
    w: usize,
    h: usize,
    lethal_p: f64,
    palette: &[u8],
) -> Costmap {
    let cost = (0..w * h)
        .map(|_| {
            if r.random_bool(lethal_p) {
                LETHAL
            } else {
                palette[r.random_range(0..palette.len())]
            }
        })
        .collect();
    Costmap::from_costs(w, h, 0.1, cost)
}

pub fn random_free_cell(r: &mut ChaCha8Rng, map: &Costmap) -> Cell {
    loop {
        let c = Cell::new(r.random_range(0..map.width), r.random_range(0..map.height));
        if map.get(c) != LETHAL {
            return c;
        }
    }
}

/// One-way ANOVA from the textbook formulas: `(ss_between, ss_within, F)`,
/// with the total sum of squares split as `ss_total - ss_within`.
pub fn anova_oracle(groups: &[Vec<f64>]) -> (f64, f64, f64) {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let k = groups.len() as f64;
    let grand = all.iter().sum::<f64>() / n;
    let ss_total: f64 = all.iter().map(|x| (x - grand).powi(2)).sum();
    let ss_within: f64 = groups
        .iter()
        .map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let ss_between = ss_total - ss_within;
    let f = (ss_between / (k - 1.0)) / (ss_within / (n - k));
    (ss_between, ss_within, f)
}

/// Upper tail of the F distribution, via statrs.
pub fn f_tail_oracle(f: f64, d1: f64, d2: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};
    FisherSnedecor::new(d1, d2).expect("positive dfs").sf(f)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}
