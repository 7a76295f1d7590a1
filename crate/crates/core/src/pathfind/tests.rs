use super::*;
use crate::env::{MapSpec, Obstacle};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

const L: f64 = 1.2;

fn gap_map(gap_x: f64, gap_width: f64, max: [f64; 3]) -> EsdfGrid {
    MapSpec::new([-1.0, -2.5, 0.0], max, 0.1)
        .with_obstacle(Obstacle::GapWall {
            x: gap_x,
            thickness: 0.2,
            y_min: -3.0,
            y_max: 3.0,
            z_min: -1.0,
            z_max: 5.0,
            gap_center: 0.0,
            gap_width,
        })
        .esdf()
        .unwrap()
}

fn empty_map() -> EsdfGrid {
    MapSpec::new([-1.0, -2.5, 0.0], [7.0, 2.5, 3.5], 0.1)
        .esdf()
        .unwrap()
}

#[test]
fn empty_map_is_free_everywhere() {
    let e = empty_map();
    let cfg = PathfindConfig::default();
    for &r in &cfg.levels {
        for p in [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(3.0, 1.0, 1.5),
            Vec3::new(5.5, -1.2, 0.5),
        ] {
            assert!(pyramid_collision_free(&p, r, L, &e, &cfg));
        }
    }
}

#[test]
fn apex_inside_obstacle_collides() {
    let e = MapSpec::new([-1.0, -2.5, 0.0], [7.0, 2.5, 3.5], 0.1)
        .with_obstacle(Obstacle::Box {
            min: [1.8, -0.2, 0.8],
            max: [2.2, 0.2, 1.2],
        })
        .esdf()
        .unwrap();
    let cfg = PathfindConfig::default();
    for &r in &cfg.levels {
        assert!(!pyramid_collision_free(
            &Vec3::new(2.0, 0.0, 1.0),
            r,
            L,
            &e,
            &cfg
        ));
    }
}

#[test]
fn narrow_gap_needs_contraction() {
    // 1.0 m gap; the full formation spans 1.6 m
    let e = gap_map(3.0, 1.0, [7.0, 2.5, 3.5]);
    let cfg = PathfindConfig::default();
    assert!((2.0 * cfg.levels[3] - 1.6).abs() < 1e-12);
    let p = Vec3::new(3.0, 0.0, 1.0);
    assert!(!pyramid_collision_free(&p, cfg.levels[3], L, &e, &cfg));
    // fits when base width plus both margins is below the gap width
    assert!(2.0 * cfg.levels[0] + 2.0 * cfg.margin < 1.0);
    assert!(pyramid_collision_free(&p, cfg.levels[0], L, &e, &cfg));
}

#[test]
fn free_space_path_is_straight() {
    let e = empty_map();
    let cfg = PathfindConfig::default();
    let start = Vec3::new(0.0, 0.0, 1.0);
    let goal = Vec3::new(4.0, 0.0, 1.0);
    let path = plan_path(&start, &goal, &e, L, &cfg).unwrap();
    let diag = cfg.step * 3f64.sqrt();
    assert!((path.length() - 4.0).abs() <= diag);
    assert_eq!(path.nodes.first().unwrap().level, cfg.levels.len() - 1);
    let simple = simplify(&path);
    assert_eq!(simple.len(), 2);
}

/// Plain Dijkstra over the same lattice.
fn dijkstra(lat: &mut Lattice, start: Node, target: (i32, i32, i32)) -> Option<f64> {
    let mut dist: HashMap<Node, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start, 0.0);
    heap.push(Reverse((OrderedFloat(0.0), start)));
    while let Some(Reverse((OrderedFloat(d), n))) = heap.pop() {
        if d > *dist.get(&n).unwrap_or(&f64::INFINITY) {
            continue;
        }
        if (n.0, n.1, n.2) == target {
            return Some(d);
        }
        for (m, c) in lat.successors(&n) {
            let nd = d + c;
            if nd < *dist.get(&m).unwrap_or(&f64::INFINITY) {
                dist.insert(m, nd);
                heap.push(Reverse((OrderedFloat(nd), m)));
            }
        }
    }
    None
}

#[test]
fn opening_forces_contraction_and_matches_dijkstra() {
    let e = gap_map(2.0, 1.0, [5.0, 2.5, 2.6]);
    let cfg = PathfindConfig::default();
    let start = Vec3::new(0.0, 0.0, 0.8);
    let goal = Vec3::new(4.0, 0.0, 0.8);
    let path = plan_path(&start, &goal, &e, L, &cfg).unwrap();
    for n in &path.nodes {
        assert!(pyramid_collision_free(&n.payload, n.radius, L, &e, &cfg));
    }
    let threshold = 0.5 * (1.0 - 2.0 * cfg.margin);
    let at_wall: Vec<_> = path
        .nodes
        .iter()
        .filter(|n| (n.payload.x - 2.0).abs() < 0.15)
        .collect();
    assert!(!at_wall.is_empty());
    assert!(at_wall
        .iter()
        .all(|n| n.radius < threshold && n.gamma < 1.0));

    let mut lat = Lattice::new(start, &cfg, &e, L);
    let start_level = (0..cfg.levels.len())
        .rev()
        .find(|&l| lat.is_free(&(0, 0, 0, l)))
        .unwrap();
    let target = lat.node_at(&goal, 0);
    let d = dijkstra(
        &mut lat,
        (0, 0, 0, start_level),
        (target.0, target.1, target.2),
    )
    .unwrap();
    assert!(
        (d - path.cost).abs() < 1e-9,
        "dijkstra {d} vs astar {}",
        path.cost
    );
}

#[test]
fn blocked_goal_reports_no_path() {
    let e = gap_map(2.0, 0.0, [5.0, 2.5, 2.6]);
    let cfg = PathfindConfig {
        max_expansions: 50_000,
        ..PathfindConfig::default()
    };
    let r = plan_path(
        &Vec3::new(0.0, 0.0, 0.8),
        &Vec3::new(4.0, 0.0, 0.8),
        &e,
        L,
        &cfg,
    );
    assert!(matches!(r, Err(Error::NoPath)));
}

#[test]
fn solid_contains_payload_robots_and_cables() {
    let e = gap_map(3.0, 1.0, [7.0, 2.5, 3.5]);
    let cfg = PathfindConfig::default();
    let mut checked = 0;
    for ix in 0..30 {
        for &level in &[0usize, 3] {
            let p = Vec3::new(1.5 + 0.1 * ix as f64, 0.05, 1.0);
            let r = cfg.levels[level];
            if !pyramid_collision_free(&p, r, L, &e, &cfg) {
                continue;
            }
            checked += 1;
            let h = (L * L - r * r).sqrt();
            for n in 0..3 {
                let phi = 2.0 * std::f64::consts::PI * n as f64 / 3.0 + 0.3;
                let robot = p + Vec3::new(r * phi.cos(), r * phi.sin(), h);
                for k in 0..=10 {
                    let x = p + (robot - p) * (k as f64 / 10.0);
                    assert!(e.distance(&x) > cfg.margin - 1e-9);
                }
            }
        }
    }
    assert!(checked > 10);
}

#[test]
fn resampling_keeps_ends_and_tight_levels() {
    let cfg = PathfindConfig::default();
    let mk = |x: f64, level: usize| PyramidConfig {
        payload: Vec3::new(x, 0.0, 1.0),
        level,
        gamma: cfg.gamma(level),
        radius: cfg.levels[level],
    };
    let nodes = vec![mk(0.0, 3), mk(1.0, 3), mk(1.2, 0), mk(3.0, 3)];
    let pts = resample_by_arclength(&nodes, 6);
    assert_eq!(pts.len(), 7);
    assert_eq!(pts[0].payload, nodes[0].payload);
    assert!((pts[6].payload - nodes[3].payload).norm() < 1e-12);
    assert_eq!(pts[2].level, 3);
    assert_eq!(pts[3].level, 0);
    assert!((pts[3].payload.x - 1.5).abs() < 1e-12);
    let json = PlannedPath { nodes, cost: 1.0 }.to_json().unwrap();
    assert!(json.contains("gamma"));
    assert!(
        (PyramidConfig {
            radius: 0.8,
            ..pts[0]
        }
        .pitch(1.2)
            - (0.8f64 / 1.2).acos())
        .abs()
            < 1e-15
    );
}
