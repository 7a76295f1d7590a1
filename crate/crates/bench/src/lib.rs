//! Shared fixtures for the criterion benches.

use cabletrans::planner::{PlannerConfig, Seed};
use cabletrans::{MapSpec, Obstacle, SystemConfig, Vec3};

/// Straight 8 m rest-to-rest seed with `pieces` pieces for `n_robots`.
pub fn straight_seed(n_robots: usize, pieces: usize) -> (Seed, SystemConfig, PlannerConfig) {
    let sys = SystemConfig::with_robots(n_robots);
    let cfg = PlannerConfig::default();
    let seed = Seed::straight(
        &Vec3::new(0.0, 0.0, 1.0),
        &Vec3::new(8.0, 0.0, 1.0),
        pieces,
        0.85,
        &sys,
        &cfg,
    )
    .expect("straight seed");
    (seed, sys, cfg)
}

/// 10 x 6 x 3 m room with a few pillars at `resolution`.
pub fn pillar_room(resolution: f64) -> MapSpec {
    let mut m = MapSpec::new([-1.0, -3.0, 0.0], [9.0, 3.0, 3.0], resolution);
    m.floor = true;
    for (x, y) in [(2.5, 1.8), (4.0, -1.9), (6.0, 2.0)] {
        m = m.with_obstacle(Obstacle::Cylinder {
            center: [x, y],
            radius: 0.3,
            z_min: 0.0,
            z_max: 3.0,
        });
    }
    m
}
