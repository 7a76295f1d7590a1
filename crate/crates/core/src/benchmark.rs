//! Target-ring benchmark: start at the center of a cylinder-cluttered disk
//! and plan to evenly spaced targets on a surrounding circle.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{MapSpec, Obstacle};
use crate::error::{Error, Result};
use crate::flatness::layout;
use crate::model::{SystemConfig, Vec3};
use crate::pathfind::PathfindConfig;
use crate::planner::{
    azimuth_band, check_feasibility, optimize, plan, FeasibilityReport, PlanReport, PlannerConfig,
    Seed,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    Sparse,
    Medium,
    Dense,
}

impl Density {
    /// Cylinders per square meter of arena.
    pub fn per_area(&self) -> f64 {
        match self {
            Density::Sparse => 0.05,
            Density::Medium => 0.10,
            Density::Dense => 0.18,
        }
    }

    pub fn all() -> [Density; 3] {
        [Density::Sparse, Density::Medium, Density::Dense]
    }
}

impl std::str::FromStr for Density {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Density::Sparse),
            "medium" => Ok(Density::Medium),
            "dense" => Ok(Density::Dense),
            _ => Err(Error::InvalidConfig(format!("unknown density '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    /// Radius of the cluttered disk [m].
    pub arena_radius: f64,
    /// Radius of the target circle [m].
    pub target_radius: f64,
    pub density: Density,
    pub targets: usize,
    pub altitude: f64,
    pub obstacle_radius: (f64, f64),
    /// Obstacle-free radius around the start [m].
    pub start_clearance: f64,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            arena_radius: 6.0,
            target_radius: 7.5,
            density: Density::Medium,
            targets: 36,
            altitude: 1.0,
            obstacle_radius: (0.2, 0.4),
            start_clearance: 1.5,
            seed: 7,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.arena_radius > 0.0) || self.targets == 0 || self.target_radius < self.arena_radius
        {
            return Err(Error::InvalidConfig(
                "need radius > 0, targets >= 1, target circle outside arena".into(),
            ));
        }
        Ok(())
    }

    pub fn start(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.altitude)
    }

    pub fn target_points(&self) -> Vec<Vec3> {
        (0..self.targets)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / self.targets as f64;
                Vec3::new(
                    self.target_radius * a.cos(),
                    self.target_radius * a.sin(),
                    self.altitude,
                )
            })
            .collect()
    }

    /// Cylinders placed uniformly over the disk, keeping the start clear.
    pub fn map(&self) -> MapSpec {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.seed ^ (self.density as u64).wrapping_mul(0x9e37_79b9));
        let r = self.arena_radius;
        let count = (self.density.per_area() * std::f64::consts::PI * r * r).round() as usize;
        let half = self.target_radius + 1.5;
        let mut spec = MapSpec::new([-half, -half, 0.0], [half, half, 3.0], 0.1);
        spec.floor = true;
        let mut placed = 0;
        while placed < count {
            let c = [rng.gen_range(-r..r), rng.gen_range(-r..r)];
            let d = (c[0] * c[0] + c[1] * c[1]).sqrt();
            if d > r || d < self.start_clearance {
                continue;
            }
            let radius = rng.gen_range(self.obstacle_radius.0..self.obstacle_radius.1);
            spec = spec.with_obstacle(Obstacle::Cylinder {
                center: c,
                radius,
                z_min: 0.0,
                z_max: 3.0,
            });
            placed += 1;
        }
        spec
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseResult {
    pub index: usize,
    pub target: [f64; 3],
    pub success: bool,
    pub error: Option<String>,
    pub path_length: f64,
    pub duration: f64,
    pub solve_time_s: f64,
    pub iterations: usize,
    pub feasibility: Option<FeasibilityReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub density: Density,
    pub n_robots: usize,
    pub success_rate: f64,
    /// Mean payload path length over successful cases [m].
    pub mean_length: f64,
    pub mean_solve_time_s: f64,
    pub cases: Vec<CaseResult>,
}

/// Plans to every target (in parallel on the rayon pool; results stay in
/// target order).
pub fn run_benchmark(
    spec: &BenchmarkSpec,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
) -> Result<BenchmarkSummary> {
    spec.validate()?;
    let esdf = spec.map().esdf()?;
    let search = PathfindConfig::for_pitch_limit(sys.cable_length, cfg.pitch_max);
    let start = spec.start();
    let cases: Vec<CaseResult> = spec
        .target_points()
        .par_iter()
        .enumerate()
        .map(|(index, goal)| {
            let t0 = Instant::now();
            let outcome = plan(&start, goal, &esdf, sys, cfg, &search);
            let solve_time_s = t0.elapsed().as_secs_f64();
            match outcome {
                Ok(o) => CaseResult {
                    index,
                    target: [goal.x, goal.y, goal.z],
                    success: o.success,
                    error: None,
                    path_length: o.path_length,
                    duration: o.report.duration,
                    solve_time_s,
                    iterations: o.report.iterations,
                    feasibility: Some(o.feasibility),
                },
                Err(e) => CaseResult {
                    index,
                    target: [goal.x, goal.y, goal.z],
                    success: false,
                    error: Some(e.to_string()),
                    path_length: 0.0,
                    duration: 0.0,
                    solve_time_s,
                    iterations: 0,
                    feasibility: None,
                },
            }
        })
        .collect();
    let ok: Vec<&CaseResult> = cases.iter().filter(|c| c.success).collect();
    let mean = |v: Vec<f64>| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(BenchmarkSummary {
        density: spec.density,
        n_robots: sys.n_robots,
        success_rate: ok.len() as f64 / cases.len() as f64,
        mean_length: mean(ok.iter().map(|c| c.path_length).collect()),
        mean_solve_time_s: mean(cases.iter().map(|c| c.solve_time_s).collect()),
        cases,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n_robots: usize,
    pub solve_time_s: f64,
    pub iterations: usize,
    pub success: bool,
}

/// Solve time against robot count on one fixed course.
pub fn scaling_study(
    spec: &BenchmarkSpec,
    robots: &[usize],
    target: usize,
    cfg: &PlannerConfig,
) -> Result<Vec<ScalingPoint>> {
    spec.validate()?;
    let esdf = spec.map().esdf()?;
    let goal = spec.target_points()[target % spec.targets];
    robots
        .iter()
        .map(|&n| {
            let sys = SystemConfig::with_robots(n);
            let search = PathfindConfig::for_pitch_limit(sys.cable_length, cfg.pitch_max);
            let t0 = Instant::now();
            let o = plan(&spec.start(), &goal, &esdf, &sys, cfg, &search)?;
            Ok(ScalingPoint {
                n_robots: n,
                solve_time_s: t0.elapsed().as_secs_f64(),
                iterations: o.report.iterations,
                success: o.success,
            })
        })
        .collect()
}

/// Waypoint course O-A-B-C-E for the cable-band ablation; the payload is
/// pinned at A, B and C.
pub const ABLATION_WAYPOINTS: [[f64; 2]; 5] =
    [[0.0, 0.0], [2.0, 1.5], [4.0, -1.5], [6.0, 1.5], [8.0, 0.0]];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationCase {
    pub seed: u64,
    pub bands: PlanReport,
    pub band_free: PlanReport,
    /// Junction robot channels outside their band, bands active.
    pub band_violations: usize,
    pub band_free_violations: usize,
}

/// Initial guess for one ablation case: waypoints jittered by up to 0.3 m,
/// a midpoint junction between each pair, cables at the resting formation
/// with azimuths perturbed inside their bands.
pub fn ablation_seed(seed: u64, sys: &SystemConfig, cfg: &PlannerConfig) -> Result<Seed> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = ABLATION_WAYPOINTS.len() - 1;
    let mut pts: Vec<Vec3> = Vec::new();
    for (i, w) in ABLATION_WAYPOINTS.iter().enumerate() {
        let j = if i == 0 || i == last { 0.0 } else { 0.3 };
        let p = Vec3::new(
            w[0] + rng.gen_range(-j..=j),
            w[1] + rng.gen_range(-j..=j),
            1.0,
        );
        if let Some(q) = pts.last() {
            pts.push((p + q) * 0.5);
        }
        pts.push(p);
    }
    let pitch = 0.85;
    let mut s = Seed::through(&pts, &vec![pitch; pts.len()], sys, cfg)?;
    s.pinned = vec![1, 3, 5];
    let n_robots = sys.n_robots;
    for w in s.junctions.iter_mut() {
        for n in 0..n_robots {
            let band = azimuth_band(n, n_robots);
            let b = layout::robot_base(n);
            w[b..b + 4].copy_from_slice(&Seed::robot_rest(n, n_robots, pitch, sys, cfg));
            w[b + layout::AZIMUTH] += rng.gen_range(-0.25..0.25) * (band.hi - band.lo);
        }
    }
    Ok(s)
}

/// Same initial guess optimized with and without the pitch/azimuth bands.
pub fn band_ablation(seed: u64, sys: &SystemConfig, cfg: &PlannerConfig) -> Result<AblationCase> {
    let with = PlannerConfig {
        cable_bands: true,
        ..cfg.clone()
    };
    let without = PlannerConfig {
        cable_bands: false,
        ..cfg.clone()
    };
    let s = ablation_seed(seed, sys, &with)?;
    let (ta, bands) = optimize(&s, sys, &with, None)?;
    let (tb, band_free) = optimize(&s, sys, &without, None)?;
    Ok(AblationCase {
        seed,
        bands,
        band_free,
        band_violations: check_feasibility(&ta, sys, &with, None, 1).band_violations,
        band_free_violations: check_feasibility(&tb, sys, &with, None, 1).band_violations,
    })
}

/// Least-squares exponent `b` of `y = a x^b` in log-log space.
pub fn power_law_exponent(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_exact_power_law() {
        let x = [2.0, 3.0, 5.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 0.3 * v.powf(1.2)).collect();
        assert!((power_law_exponent(&x, &y) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn map_keeps_start_clear_and_counts_obstacles() {
        let spec = BenchmarkSpec::default();
        let map = spec.map();
        assert_eq!(
            map.obstacles.len(),
            (0.1 * std::f64::consts::PI * 36.0f64).round() as usize
        );
        assert!(map.signed_distance(&spec.start()) > 0.9);
        for t in spec.target_points() {
            assert!(map.signed_distance(&t) > 0.5);
        }
        assert_eq!(spec.map(), map);
    }
}
