use proptest::prelude::*;
use socbench_core::planners::costmap::{Cell, Costmap};
use socbench_core::planners::social::social_cost;
use socbench_core::planners::{apply_social_layer, SocialLayerParams};
use socbench_core::sim::AgentState;
use socbench_core::Vec2;
use std::collections::BTreeMap;

fn open_map() -> Costmap {
    Costmap::new(80, 80, 0.05, Vec2::ZERO)
}

/// Person standing on the centre of cell (40, 40).
fn person(map: &Costmap, velocity: Vec2) -> AgentState {
    AgentState::at(map.cell_center(Cell::new(40, 40))).with_velocity(velocity)
}

fn planner_params() -> SocialLayerParams {
    SocialLayerParams {
        inner_radius: 0.5,
        ..SocialLayerParams::default()
    }
}

#[test]
fn stationary_zone_is_radially_symmetric() {
    for params in [SocialLayerParams::default(), planner_params()] {
        let base = open_map();
        let m = apply_social_layer(&base, &person(&base, Vec2::ZERO), &params);
        let mut rings: BTreeMap<usize, (u8, u8)> = BTreeMap::new();
        for y in 0..80usize {
            for x in 0..80usize {
                let r2 = x.abs_diff(40).pow(2) + y.abs_diff(40).pow(2);
                let c = m.get(Cell::new(x, y));
                let e = rings.entry(r2).or_insert((c, c));
                *e = (e.0.min(c), e.1.max(c));
            }
        }
        let worst = rings.values().map(|(lo, hi)| hi - lo).max().unwrap();
        assert!(worst <= 1, "cells at equal radius differ by {worst}");
    }
}

#[test]
fn off_grid_points_at_equal_radius_agree() {
    let centre = Vec2::new(1.234, 2.345);
    for params in [SocialLayerParams::default(), planner_params()] {
        for i in 1..=60 {
            let d = i as f64 * 0.03;
            let costs: Vec<f64> = (0..36)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::TAU / 36.0 + 0.1;
                    social_cost(
                        centre + Vec2::new(d * a.cos(), d * a.sin()),
                        centre,
                        Vec2::ZERO,
                        &params,
                    )
                    .round()
                })
                .collect();
            let spread = costs.iter().cloned().fold(f64::MIN, f64::max)
                - costs.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread <= 1.0, "radius {d}: spread {spread}");
        }
    }
}

#[test]
fn moving_zone_reaches_further_ahead() {
    let base = open_map();
    let m = apply_social_layer(
        &base,
        &person(&base, Vec2::new(0.3, 0.0)),
        &SocialLayerParams::default(),
    );
    // 0.4 m = 8 cells
    let ahead = m.get(Cell::new(48, 40));
    let abeam = m.get(Cell::new(40, 48));
    let behind = m.get(Cell::new(32, 40));
    assert!(ahead > abeam, "ahead {ahead}, abeam {abeam}");
    assert_eq!(behind, abeam);
    let p = SocialLayerParams::default();
    let c = Vec2::new(1.0, 1.0);
    let v = Vec2::new(0.0, 0.3);
    assert!(
        social_cost(c + Vec2::new(0.0, 0.4), c, v, &p)
            > social_cost(c + Vec2::new(0.4, 0.0), c, v, &p)
    );
}

#[test]
fn base_map_is_untouched() {
    let base = open_map();
    let before = base.content_hash();
    let out = apply_social_layer(
        &base,
        &person(&base, Vec2::new(0.2, 0.1)),
        &SocialLayerParams::default(),
    );
    assert_eq!(base.content_hash(), before);
    assert_ne!(out.content_hash(), before);
}

proptest! {
    #[test]
    fn stationary_cost_falls_off_along_rays(angle in 0.0..std::f64::consts::TAU, inner in 0.0..0.6f64) {
        let p = SocialLayerParams { inner_radius: inner, ..SocialLayerParams::default() };
        let c = Vec2::new(2.0, 2.0);
        let dir = Vec2::new(angle.cos(), angle.sin());
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let cost = social_cost(c + dir * (i as f64 * 0.01), c, Vec2::ZERO, &p);
            prop_assert!(cost <= prev + 1e-12);
            prop_assert!((0.0..=p.amplitude).contains(&cost));
            prev = cost;
        }
    }

    #[test]
    fn layer_keeps_costs_bounded(x in 0.0..4.0f64, y in 0.0..4.0f64, vx in -1.0..1.0f64, vy in -1.0..1.0f64, seed in 0u8..=254) {
        let mut base = open_map();
        base.set(Cell::new(40, 40), 255);
        base.set(Cell::new(41, 40), seed);
        let h = AgentState::at(Vec2::new(x, y)).with_velocity(Vec2::new(vx, vy));
        let out = apply_social_layer(&base, &h, &SocialLayerParams::default());
        prop_assert_eq!(out.get(Cell::new(40, 40)), 255);
        prop_assert!(out.get(Cell::new(41, 40)) >= seed);
        prop_assert!(out.costs().iter().zip(base.costs()).all(|(o, b)| *b == 255 || (*o >= *b && *o <= 254)));
    }
}
