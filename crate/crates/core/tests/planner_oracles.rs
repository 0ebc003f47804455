mod support;

use proptest::prelude::*;
use rand::Rng;
use socbench_core::planners::costmap::{build_static_costmap, Cell, Costmap, LETHAL};
use socbench_core::planners::grid_astar::{
    plan_grid_cells, step_cost, DEFAULT_COST_WEIGHT, DIAGONAL, STRAIGHT,
};
use socbench_core::planners::time_astar::{
    plan_time_astar, predicted_layers, search_time_expanded, TimeGrid,
};
use socbench_core::planners::{PlanError, TdpParams};
use socbench_core::scenario::ScenarioConfig;
use socbench_core::sim::AgentState;
use socbench_core::{Layout, Vec2};
use support::*;

#[test]
fn astar_matches_dijkstra_on_random_maps() {
    let mut r = rng(0xa57a);
    let mut reachable = 0;
    for i in 0..150 {
        // the first hundred use the coarse {free, soft, lethal} palette
        let palette: &[u8] = if i < 100 {
            &[0, 100]
        } else {
            &[0, 7, 60, 128, 200, 254]
        };
        let map = random_costmap(&mut r, 6, 6, 0.25, palette);
        let s = random_free_cell(&mut r, &map);
        let g = random_free_cell(&mut r, &map);
        let w = [DEFAULT_COST_WEIGHT, 1.0, 0.0][i % 3];
        let got = plan_grid_cells(&map, s, g, w);
        match (dijkstra_cost(&map, s, g, w), got) {
            (Some(want), Ok(p)) => {
                assert_eq!(p.cost, want, "map {i}: {s:?} -> {g:?}");
                reachable += 1;
            }
            (None, Err(PlanError::Unreachable)) => {}
            (want, got) => panic!("map {i}: oracle {want:?}, planner {got:?}"),
        }
    }
    assert!(
        reachable >= 80,
        "too few reachable instances ({reachable}) to be meaningful"
    );
}

#[test]
fn time_expanded_matches_brute_force() {
    let mut r = rng(0x7e5a);
    let mut reachable = 0;
    for i in 0..30 {
        let layers: Vec<Costmap> = (0..5)
            .map(|_| random_costmap(&mut r, 6, 6, 0.2, &[0, 0, 50, 120, 254]))
            .collect();
        let ticks_per_layer = r.random_range(1..=3u32);
        let grid = TimeGrid {
            ticks_per_layer,
            tick: 0.5 / ticks_per_layer as f64,
            layers: layers.len(),
        };
        let s = random_free_cell(&mut r, &layers[0]);
        let g = Cell::new(r.random_range(0..6), r.random_range(0..6));
        let w = DEFAULT_COST_WEIGHT;
        let got = search_time_expanded(&layers, &grid, s, g, w);
        match (time_expanded_cost(&layers, ticks_per_layer, s, g, w), got) {
            (Some(want), Ok(p)) => {
                assert_eq!(p.cost, want, "instance {i}: {s:?} -> {g:?}");
                reachable += 1;
            }
            (None, Err(PlanError::Unreachable)) => {}
            (want, got) => panic!("instance {i}: oracle {want:?}, planner {got:?}"),
        }
    }
    assert!(reachable >= 20, "only {reachable} reachable instances");
}

fn room() -> (ScenarioConfig, Costmap) {
    let cfg = ScenarioConfig::defaults(Layout::Coinciding);
    let map = build_static_costmap(&cfg, 0.05).unwrap();
    (cfg, map)
}

#[test]
fn static_costmap_covers_room_with_lethal_walls() {
    let (cfg, map) = room();
    assert!(map.width as f64 * 0.05 >= cfg.room_width - 1e-9);
    assert!(map.height as f64 * 0.05 >= cfg.room_length - 1e-9);
    for x in 0..map.width {
        assert_eq!(map.get(Cell::new(x, 0)), LETHAL);
        assert_eq!(map.get(Cell::new(x, map.height - 1)), LETHAL);
    }
    let centre = map.cell_of(Vec2::new(1.25, 2.0)).unwrap();
    assert_eq!(map.get(centre), 0);
    assert!(build_static_costmap(&cfg, 5.0).is_err());
}

#[test]
fn timed_plan_never_enters_predicted_obstacles() {
    let (cfg, map) = room();
    let params = TdpParams::new(cfg.v_max_robot, cfg.r_robot + cfg.r_human);
    let person = AgentState::at(Vec2::new(1.25, 2.6)).with_velocity(Vec2::new(0.0, -0.4));
    let plan = plan_time_astar(
        &map,
        &[person],
        Vec2::new(1.25, 1.0),
        Vec2::new(1.25, 3.0),
        &params,
    )
    .unwrap();
    let layers = predicted_layers(&map, &[person], &params);
    let per_layer = |t: f64| ((t / params.layer_dt + 1e-9).floor() as usize).min(layers.len() - 1);
    for w in plan.states.windows(2) {
        assert!(w[1].t >= w[0].t);
        assert!(w[0].cell.is_neighbor_or_same(w[1].cell));
    }
    for s in &plan.states[1..] {
        assert_ne!(layers[per_layer(s.t)].get(s.cell), LETHAL, "{s:?}");
    }
}

fn map_strategy() -> impl Strategy<Value = (Costmap, Cell, Cell)> {
    (2usize..9, 2usize..9).prop_flat_map(|(w, h)| {
        let cells = prop::collection::vec(
            prop_oneof![3 => Just(0u8), 1 => Just(100u8), 1 => Just(LETHAL)],
            w * h,
        );
        (cells, 0..w, 0..h, 0..w, 0..h).prop_map(move |(c, sx, sy, gx, gy)| {
            let mut map = Costmap::from_costs(w, h, 0.1, c);
            map.set(Cell::new(sx, sy), 0);
            (map, Cell::new(sx, sy), Cell::new(gx, gy))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn astar_paths_are_connected_and_priced_honestly((map, s, g) in map_strategy()) {
        let Ok(p) = plan_grid_cells(&map, s, g, DEFAULT_COST_WEIGHT) else {
            prop_assert_eq!(dijkstra_cost(&map, s, g, DEFAULT_COST_WEIGHT), None);
            return Ok(());
        };
        prop_assert_eq!(p.cells[0], s);
        prop_assert_eq!(*p.cells.last().unwrap(), g);
        let mut total = 0;
        for w in p.cells.windows(2) {
            prop_assert!(w[0].is_neighbor_or_same(w[1]) && w[0] != w[1]);
            prop_assert_ne!(map.get(w[1]), LETHAL);
            let len = if w[0].x != w[1].x && w[0].y != w[1].y { DIAGONAL } else { STRAIGHT };
            total += step_cost(len, map.get(w[1]), DEFAULT_COST_WEIGHT);
        }
        prop_assert_eq!(total, p.cost);
        prop_assert_eq!(Some(p.cost), dijkstra_cost(&map, s, g, DEFAULT_COST_WEIGHT));
    }
}
