use navattn_core::planner::{extract_subgoals, plan, PlanResult, PlannerConfig, RrtStar};
use navattn_core::sim::{Point, Rect, WorldMap};

fn empty_map() -> WorldMap {
    WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![]).unwrap()
}

fn cfg(iterations: usize, seed: u64) -> PlannerConfig {
    PlannerConfig {
        max_iterations: iterations,
        seed,
        ..PlannerConfig::default()
    }
}

#[test]
fn empty_map_cost_is_near_straight_line() {
    let (start, goal) = (Point::new(1.0, 1.0), Point::new(9.0, 9.0));
    let euclid = start.distance(goal);
    let mut costs: Vec<f64> = (0..20)
        .map(|seed| plan(start, goal, &empty_map(), &cfg(5000, seed)).unwrap().cost().expect("path"))
        .collect();
    costs.sort_by(f64::total_cmp);
    let median = (costs[9] + costs[10]) / 2.0;
    assert!(costs[0] >= euclid - 1e-9);
    assert!(median <= 1.05 * euclid, "median {median} vs {euclid}");
}

#[test]
fn blocked_map_is_infeasible() {
    let map = WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![Rect::new(4.5, 0.0, 5.5, 10.0)]).unwrap();
    let r = plan(Point::new(1.0, 1.0), Point::new(9.0, 9.0), &map, &cfg(2000, 1)).unwrap();
    assert_eq!(r, PlanResult::Infeasible);
}

#[test]
fn start_equal_goal_is_a_single_node() {
    let p = Point::new(3.0, 3.0);
    assert_eq!(
        plan(p, p, &empty_map(), &cfg(100, 0)).unwrap(),
        PlanResult::Path {
            waypoints: vec![p],
            cost: 0.0
        }
    );
}

#[test]
fn planning_is_seeded() {
    let map = WorldMap::bundled();
    let (s, g) = (Point::new(1.0, 1.0), Point::new(7.0, 7.0));
    assert_eq!(plan(s, g, &map, &cfg(1500, 4)).unwrap(), plan(s, g, &map, &cfg(1500, 4)).unwrap());
}

#[test]
fn audit_run_keeps_costs_consistent_and_edges_free() {
    let map = WorldMap::bundled();
    let c = cfg(500, 3);
    let mut search = RrtStar::new(&map, Point::new(1.0, 1.0), Point::new(7.2, 7.2), &c).unwrap();
    let mut best = f64::INFINITY;
    for _ in 0..c.max_iterations {
        search.iterate();
        let tree = search.tree();
        let dev = tree.cost_inconsistency().expect("acyclic");
        assert!(dev <= 1e-9, "cost drift {dev}");
        assert_eq!(tree.cost[0], 0.0);
        if let Some(cost) = search.best().cost() {
            assert!(cost <= best + 1e-12);
            best = cost;
        }
    }
    let tree = search.tree();
    for (i, p) in tree.parent.iter().enumerate() {
        if let Some(p) = *p {
            assert!(map.segment_is_free(tree.nodes[p], tree.nodes[i], c.clearance));
        }
    }
}

#[test]
fn subgoals_follow_arc_length_and_stay_free() {
    let path = [Point::new(0.0, 0.0), Point::new(4.0, 0.0)];
    let xs: Vec<f64> = extract_subgoals(&path, 1.0).unwrap().iter().map(|p| p.x).collect();
    assert_eq!(xs, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(extract_subgoals(&path, 5.0).unwrap(), vec![Point::new(4.0, 0.0)]);
    assert!(extract_subgoals(&path, -1.0).is_err());

    let map = WorldMap::bundled();
    for seed in 0..10 {
        let r = plan(Point::new(1.0, 1.0), Point::new(7.0, 7.0), &map, &cfg(1500, seed)).unwrap();
        let sg = extract_subgoals(r.waypoints().expect("path"), 1.5).unwrap();
        assert_eq!(*sg.last().unwrap(), Point::new(7.0, 7.0));
        for p in sg {
            assert!(map.is_free(p, 0.25));
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad_step = PlannerConfig {
        step: 0.0,
        ..PlannerConfig::default()
    };
    assert!(bad_step.validate().is_err());
    let bad_bias = PlannerConfig {
        goal_bias: 1.0,
        ..PlannerConfig::default()
    };
    assert!(bad_bias.validate().is_err());
}
