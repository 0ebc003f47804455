use proptest::prelude::*;
use socbench_core::scenario::{
    human_script, latin_square_order, robot_script, CartonEvent, ScenarioError, WaypointOverrides,
};
use socbench_core::{build_scenario, Layout, ScenarioOverrides, Vec2};

#[test]
fn base_squares_are_latin() {
    for n in 2..=8 {
        let sq = latin_square_order(n, n).unwrap();
        for i in 0..n {
            let mut row = sq[i].clone();
            let mut col: Vec<usize> = sq.iter().map(|r| r[i]).collect();
            row.sort_unstable();
            col.sort_unstable();
            let all: Vec<usize> = (0..n).collect();
            assert_eq!(row, all, "n={n} row {i}");
            assert_eq!(col, all, "n={n} column {i}");
        }
    }
}

#[test]
fn twenty_participants_balance_positions() {
    let orders = latin_square_order(4, 20).unwrap();
    for pos in 0..4 {
        for method in 0..4 {
            let count = orders.iter().filter(|o| o[pos] == method).count();
            assert_eq!(count, 5, "method {method} at position {pos}");
        }
    }
}

#[test]
fn defaults_and_coinciding_waypoints() {
    let c = build_scenario(Layout::Coinciding, &ScenarioOverrides::default()).unwrap();
    assert_eq!((c.v_max_robot, c.a_max_robot), (0.3, 0.3));
    assert_eq!((c.room_width, c.room_length), (2.5, 4.0));
    assert_eq!((c.cartons, c.robot_loops), (3, 4));
    assert_eq!(c.waypoints.r1, c.waypoints.h2);
    assert_eq!(c.waypoints.r2, c.waypoints.h1);
    let e = build_scenario(
        Layout::Perpendicular,
        &ScenarioOverrides {
            d_safe: Some(0.5),
            ..Default::default()
        },
    );
    assert!(
        matches!(e, Err(ScenarioError::Invalid { ref field, .. }) if field == "d_safe"),
        "{e:?}"
    );
}

#[test]
fn single_carton_script() {
    let c = build_scenario(
        Layout::Coinciding,
        &ScenarioOverrides {
            cartons: Some(1),
            ..Default::default()
        },
    )
    .unwrap();
    let s = human_script(&c);
    assert_eq!(s.labels(), ["HS", "H1", "H2", "H1"]);
    assert_eq!(s.steps[2].event, Some(CartonEvent::Pick));
    assert_eq!(s.steps[3].event, Some(CartonEvent::Drop));
    let s =
        human_script(&build_scenario(Layout::Coinciding, &ScenarioOverrides::default()).unwrap());
    assert_eq!(s.visits("H2"), 3);
}

fn point_in(w: f64, l: f64) -> impl Strategy<Value = Vec2> {
    (0.0..=w, 0.0..=l).prop_map(|(x, y)| Vec2::new(x, y))
}

fn overrides() -> impl Strategy<Value = (Layout, ScenarioOverrides)> {
    (
        prop::sample::select(Layout::ALL.to_vec()),
        prop::option::of(point_in(2.5, 4.0)),
        prop::option::of(point_in(2.5, 4.0)),
        prop::option::of(1u32..6),
        prop::option::of(1u32..6),
        prop::option::of(0.05..1.0f64),
        prop::option::of(0.5..2.0f64),
    )
        .prop_map(|(layout, h1, h2, cartons, loops, v, vh)| {
            (
                layout,
                ScenarioOverrides {
                    waypoints: Some(WaypointOverrides {
                        h1,
                        h2,
                        ..Default::default()
                    }),
                    cartons,
                    robot_loops: loops,
                    v_max_robot: v,
                    v_human: vh,
                    ..Default::default()
                },
            )
        })
}

proptest! {
    #[test]
    fn rows_are_permutations(n in 1usize..12, p in 1usize..40) {
        let orders = latin_square_order(n, p).unwrap();
        prop_assert_eq!(orders.len(), p);
        for o in &orders {
            let mut s = o.clone();
            s.sort_unstable();
            prop_assert_eq!(s, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn build_is_idempotent_and_valid((layout, o) in overrides()) {
        let c = build_scenario(layout, &o).unwrap();
        for (_, p) in [("HS", c.waypoints.hs), ("H1", c.waypoints.h1), ("H2", c.waypoints.h2), ("R1", c.waypoints.r1), ("R2", c.waypoints.r2)] {
            prop_assert!(p.x >= 0.0 && p.x <= c.room_width && p.y >= 0.0 && p.y <= c.room_length);
        }
        if layout == Layout::Coinciding {
            prop_assert_eq!(c.waypoints.r1, c.waypoints.h2);
            prop_assert_eq!(c.waypoints.r2, c.waypoints.h1);
        }
        let again = build_scenario(layout, &ScenarioOverrides::from(&c)).unwrap();
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(again.config_hash(), c.config_hash());
    }

    #[test]
    fn script_lengths_are_affine((layout, o) in overrides()) {
        let c = build_scenario(layout, &o).unwrap();
        let h = human_script(&c);
        let r = robot_script(&c);
        prop_assert_eq!(h.steps.len(), 2 + 2 * c.cartons as usize);
        prop_assert_eq!(r.steps.len(), 2 + 2 * c.robot_loops as usize);
        prop_assert!(h.speed > 0.0 && r.speed > 0.0);
        prop_assert!(h.steps.iter().chain(&r.steps).all(|s| s.pause >= 0.0));
    }

    #[test]
    fn points_outside_the_room_are_rejected(x in 2.51..10.0f64, layout in prop::sample::select(Layout::ALL.to_vec())) {
        let o = ScenarioOverrides {
            waypoints: Some(WaypointOverrides { hs: Some(Vec2::new(x, 1.0)), ..Default::default() }),
            ..Default::default()
        };
        let is_hs_error = matches!(build_scenario(layout, &o), Err(ScenarioError::Invalid { ref field, .. }) if field == "waypoints.HS");
        prop_assert!(is_hs_error);
    }
}
