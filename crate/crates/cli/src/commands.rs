use std::path::{Path, PathBuf};
use std::time::Instant;

use cabletrans::benchmark::{
    band_ablation, power_law_exponent, run_benchmark, scaling_study, BenchmarkSpec, Density,
};
use cabletrans::env::{build_esdf, load_points, verify_esdf, ORACLE_MAX_CELLS};
use cabletrans::pathfind::PathfindConfig;
use cabletrans::planner::{self, gradcheck, PlannerConfig};
use cabletrans::sim::{
    force_compensation_ablation, hover_mass_estimate, robustness_sweep, NoiseConfig,
};
use cabletrans::{EsdfGrid, MapSpec, OccupancyGrid, Scenario, SystemConfig, Vec3};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn parse_point(s: &str) -> std::result::Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("expected x,y,z: {e}"))?;
    match v[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(format!(
            "expected 3 comma-separated numbers, got {}",
            v.len()
        )),
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}")))
        .collect()
}

/// `2..8` (inclusive) or `2,4,8`.
fn parse_counts(s: &str) -> std::result::Result<Vec<usize>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| format!("'{a}': {e}"))?;
        let b: usize = b.trim().parse().map_err(|e| format!("'{b}': {e}"))?;
        if a > b {
            return Err(format!("empty range {s}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}")))
        .collect()
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, v: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

// ---- map

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["spec", "cloud", "random"])))]
pub struct MapArgs {
    /// Procedural obstacle spec (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Point cloud (.xyz or .ply).
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Random occupancy grid with this many cells per side.
    #[arg(long)]
    random: Option<usize>,
    /// Cell size for --cloud and --random [m].
    #[arg(long, default_value_t = 0.1)]
    resolution: f64,
    /// Free margin around the cloud's bounding box [m].
    #[arg(long, default_value_t = 0.5)]
    padding: f64,
    /// Occupied fraction for --random.
    #[arg(long, default_value_t = 0.1)]
    fill: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Cache file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare against the brute-force field (grids up to 32^3 cells).
    #[arg(long)]
    verify: bool,
}

fn random_grid(n: usize, resolution: f64, fill: f64, seed: u64) -> Result<OccupancyGrid> {
    if n == 0 || !(0.0..=1.0).contains(&fill) {
        return Err(CliError::Input(
            "--random needs n >= 1 and fill in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ = OccupancyGrid::new(Vec3::zeros(), resolution, [n, n, n]);
    for o in occ.occupied.iter_mut() {
        *o = rng.gen_bool(fill);
    }
    Ok(occ)
}

pub fn map(a: MapArgs) -> Result<()> {
    let t0 = Instant::now();
    let occ = if let Some(p) = &a.spec {
        read_json::<MapSpec>(p)?.rasterize()?
    } else if let Some(p) = &a.cloud {
        let pts = load_points(p)?;
        OccupancyGrid::from_points(&pts, a.resolution, a.padding)?
    } else {
        random_grid(a.random.unwrap_or(0), a.resolution, a.fill, a.seed)?
    };
    let esdf = build_esdf(&occ)?;
    let build_time = t0.elapsed().as_secs_f64();
    let verify = if a.verify {
        match verify_esdf(&occ, &esdf) {
            Some(d) => json!({ "checked": true, "max_abs_diff": d, "exact": d == 0.0 }),
            None => json!({
                "checked": false,
                "reason": format!("grid has {} cells, oracle limit is {}", occ.len(), ORACLE_MAX_CELLS),
            }),
        }
    } else {
        serde_json::Value::Null
    };
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        esdf.save_cache(out)?;
    }
    let max = esdf
        .values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    print_json(&json!({
        "dims": esdf.dims,
        "cells": occ.len(),
        "occupied": occ.occupied.iter().filter(|o| **o).count(),
        "resolution": esdf.resolution,
        "origin": [esdf.origin.x, esdf.origin.y, esdf.origin.z],
        "min_distance": esdf.min_value(),
        "max_distance": max,
        "build_time_s": build_time,
        "cache": a.out,
        "verify": verify,
    }))?;
    if a.verify && verify["exact"] == json!(false) {
        return Err(CliError::Internal(
            "distance field differs from the brute-force oracle".into(),
        ));
    }
    Ok(())
}

// ---- plan

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("env").required(true).args(["map", "map_spec"])))]
pub struct PlanArgs {
    /// Distance-field cache written by `map`.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Procedural obstacle spec (JSON), rasterized on the fly.
    #[arg(long)]
    map_spec: Option<PathBuf>,
    /// Payload start, x,y,z [m].
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    start: Vec3,
    /// Payload goal, x,y,z [m].
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    goal: Vec3,
    /// Planner config (JSON or TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Front-end search config (JSON); default derives from the pitch limit.
    #[arg(long)]
    search: Option<PathBuf>,
    #[arg(long)]
    v_max: Option<f64>,
    #[arg(long)]
    pitch_max: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    robots: Option<usize>,
    #[arg(long)]
    payload_mass: Option<f64>,
    /// Output directory for trajectory.json and report.json.
    #[arg(long, default_value = "plan_out")]
    out: PathBuf,
}

fn planner_config(
    file: Option<&Path>,
    v_max: Option<f64>,
    pitch_max: Option<f64>,
    max_iterations: Option<usize>,
) -> Result<PlannerConfig> {
    let mut cfg = match file {
        Some(p) => PlannerConfig::load(p)?,
        None => PlannerConfig::default(),
    };
    if let Some(v) = v_max {
        cfg.v_max = v;
    }
    if let Some(v) = pitch_max {
        cfg.pitch_max = v;
    }
    if let Some(v) = max_iterations {
        cfg.solver.max_iterations = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn system(robots: Option<usize>, payload_mass: Option<f64>) -> Result<SystemConfig> {
    let mut sys = SystemConfig::with_robots(robots.unwrap_or(3));
    if let Some(m) = payload_mass {
        sys.payload_mass = m;
    }
    sys.validate()?;
    Ok(sys)
}

pub fn plan(a: PlanArgs) -> Result<()> {
    let cfg = planner_config(a.config.as_deref(), a.v_max, a.pitch_max, a.max_iterations)?;
    let sys = system(a.robots, a.payload_mass)?;
    let esdf = match (&a.map, &a.map_spec) {
        (Some(p), _) => EsdfGrid::load_cache(p)?,
        (None, Some(p)) => read_json::<MapSpec>(p)?.esdf()?,
        (None, None) => unreachable!("clap enforces one map source"),
    };
    let search = match &a.search {
        Some(p) => read_json::<PathfindConfig>(p)?,
        None => PathfindConfig::for_pitch_limit(sys.cable_length, cfg.pitch_max),
    };
    let t0 = Instant::now();
    let outcome = planner::plan(&a.start, &a.goal, &esdf, &sys, &cfg, &search)?;
    let wall = t0.elapsed().as_secs_f64();
    if let Some(traj) = &outcome.trajectory {
        std::fs::create_dir_all(&a.out)?;
        traj.save(a.out.join("trajectory.json"))?;
    }
    write_json(&a.out, "report.json", &outcome)?;
    let r = &outcome.report;
    print_json(&json!({
        "success": outcome.success,
        "wall_time_s": wall,
        "iterations": r.iterations,
        "stop_reason": r.stop_reason,
        "total_cost": r.total_cost,
        "penalties": r.terms,
        "duration": r.duration,
        "pieces": r.pieces,
        "path_length": outcome.path_length,
        "feasibility": outcome.feasibility,
        "out": a.out,
    }))?;
    if !outcome.success {
        return Err(CliError::Infeasible(
            "optimized trajectory misses the feasibility margins".into(),
        ));
    }
    Ok(())
}

// ---- sim

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for traces and metrics.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Disable sensor noise.
    #[arg(long)]
    noiseless: bool,
    /// Fly with incremental and with reference force compensation.
    #[arg(long, conflicts_with_all = ["sweep", "mass_estimate"])]
    ablation: bool,
    /// Planning-mass errors to sweep, e.g. -0.3,-0.1,0,0.1,0.3.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true, conflicts_with = "mass_estimate")]
    sweep: Option<Vec<f64>>,
    /// Hover and estimate the payload mass after this settling time [s].
    #[arg(long)]
    mass_estimate: Option<f64>,
}

pub fn sim(a: SimArgs) -> Result<()> {
    let mut s = Scenario::load(&a.scenario)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if a.noiseless {
        s.noise = NoiseConfig::none();
    }
    let base = crate::base_dir(&a.scenario);
    let base = base.as_deref();
    if a.ablation {
        let out = force_compensation_ablation(&s, base)?;
        if let Some(dir) = &a.out {
            write_json(dir, "ablation.json", &out)?;
        }
        return print_json(&json!({
            "scenario": s.name,
            "planned_max_accel": out.planned_max_accel,
            "indi": out.indi,
            "reference": out.reference,
            "rmse_ratio": out.reference.rmse / out.indi.rmse,
        }));
    }
    if let Some(errors) = &a.sweep {
        let points = robustness_sweep(&s, errors, base)?;
        if let Some(dir) = &a.out {
            write_json(dir, "sweep.json", &points)?;
        }
        return print_json(&json!({ "scenario": s.name, "sweep": points }));
    }
    if let Some(settle) = a.mass_estimate {
        let est = hover_mass_estimate(&s.setup(), settle)?;
        let truth = s.system.payload_mass;
        let out = json!({
            "scenario": s.name,
            "true_mass": truth,
            "estimate": est,
            "relative_error": (est.mass - truth).abs() / truth,
        });
        if let Some(dir) = &a.out {
            write_json(dir, "mass_estimate.json", &out)?;
        }
        return print_json(&out);
    }
    let out = cabletrans::run_scenario(&s, base, a.out.as_deref())?;
    print_json(&serde_json::to_value(&out)?)
}

// ---- bench

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// sparse, medium, dense or all.
    #[arg(long, default_value = "all")]
    density: String,
    /// Radius of the cluttered disk [m].
    #[arg(long)]
    radius: Option<f64>,
    /// Radius of the target circle [m] (default radius + 1.5).
    #[arg(long)]
    target_radius: Option<f64>,
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    robots: usize,
    /// Planner config (JSON or TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Robot counts for the solve-time study, e.g. 2..8.
    #[arg(long, value_parser = parse_counts)]
    scaling: Option<Vec<usize>>,
    /// Target index used by the scaling study (medium course).
    #[arg(long, default_value_t = 0)]
    scaling_target: usize,
    /// Run the cable-band ablation over this many seeds instead.
    #[arg(long)]
    band_ablation: Option<u64>,
    /// Skip the target-ring runs.
    #[arg(long)]
    no_ring: bool,
    /// Output directory for per-case JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let cfg = planner_config(a.config.as_deref(), None, None, None)?;
    let sys = system(Some(a.robots), None)?;
    let mut spec = BenchmarkSpec::default();
    if let Some(r) = a.radius {
        spec.arena_radius = r;
        spec.target_radius = r + 1.5;
    }
    if let Some(r) = a.target_radius {
        spec.target_radius = r;
    }
    if let Some(t) = a.targets {
        spec.targets = t;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let densities: Vec<Density> = if a.density == "all" {
        Density::all().to_vec()
    } else {
        vec![a.density.parse()?]
    };
    let mut report = serde_json::Map::new();

    if !a.no_ring && a.band_ablation.is_none() {
        let mut rows = Vec::new();
        for d in densities {
            let s = BenchmarkSpec {
                density: d,
                ..spec.clone()
            };
            let summary = run_benchmark(&s, &sys, &cfg)?;
            for c in summary.cases.iter().filter(|c| !c.success) {
                log::info!("{d:?} target {} failed: {:?}", c.index, c.error);
            }
            if let Some(dir) = &a.out {
                write_json(dir, &format!("bench_{}.json", density_name(d)), &summary)?;
            }
            rows.push(json!({
                "density": d,
                "n_robots": summary.n_robots,
                "targets": summary.cases.len(),
                "success_rate": summary.success_rate,
                "mean_length": summary.mean_length,
                "mean_solve_time_s": summary.mean_solve_time_s,
            }));
        }
        report.insert("benchmark".into(), rows.into());
    }

    if let Some(robots) = &a.scaling {
        let s = BenchmarkSpec {
            density: Density::Medium,
            ..spec.clone()
        };
        let points = scaling_study(&s, robots, a.scaling_target, &cfg)?;
        let x: Vec<f64> = points.iter().map(|p| p.n_robots as f64).collect();
        let y: Vec<f64> = points.iter().map(|p| p.solve_time_s).collect();
        let exponent = (points.len() >= 2).then(|| power_law_exponent(&x, &y));
        if let Some(dir) = &a.out {
            write_json(dir, "scaling.json", &points)?;
        }
        report.insert(
            "scaling".into(),
            json!({ "points": points, "power_law_exponent": exponent }),
        );
    }

    if let Some(n) = a.band_ablation {
        let base = a.seed.unwrap_or(0);
        let cases = (base..base + n)
            .map(|k| band_ablation(k, &sys, &cfg))
            .collect::<cabletrans::Result<Vec<_>>>()?;
        let wins = cases
            .iter()
            .filter(|c| c.bands.total_cost <= c.band_free.total_cost)
            .count();
        if let Some(dir) = &a.out {
            write_json(dir, "band_ablation.json", &cases)?;
        }
        let rows: Vec<_> = cases
            .iter()
            .map(|c| {
                json!({
                    "seed": c.seed,
                    "cost_bands": c.bands.total_cost,
                    "cost_band_free": c.band_free.total_cost,
                    "band_violations": c.band_violations,
                    "band_free_violations": c.band_free_violations,
                })
            })
            .collect();
        report.insert(
            "band_ablation".into(),
            json!({ "cases": rows, "bands_not_worse": wins }),
        );
    }
    print_json(&report.into())
}

fn density_name(d: Density) -> &'static str {
    match d {
        Density::Sparse => "sparse",
        Density::Medium => "medium",
        Density::Dense => "dense",
    }
}

// ---- gradcheck

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random instances per term.
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Relative error reported as passing.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let t0 = Instant::now();
    let checks = gradcheck::run(a.instances, a.seed)?;
    let worst = checks
        .iter()
        .map(|c| c.worst_relative_error)
        .fold(0.0, f64::max);
    print_json(&json!({
        "terms": checks,
        "worst_relative_error": worst,
        "pass": worst <= a.tolerance,
        "wall_time_s": t0.elapsed().as_secs_f64(),
    }))
}

// ---- replan

#[derive(Debug, Args)]
pub struct ReplanArgs {
    /// Planning scenario with a map.
    #[arg(long)]
    scenario: PathBuf,
    /// Time on the first trajectory when the new goal arrives [s].
    #[arg(long)]
    at: f64,
    /// New payload goal, x,y,z [m].
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    goal: Vec3,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn replan(a: ReplanArgs) -> Result<()> {
    let s = Scenario::load(&a.scenario)?;
    let esdf = s
        .esdf()?
        .ok_or_else(|| CliError::Input("replanning needs a scenario with a map".into()))?;
    let base = crate::base_dir(&a.scenario);
    let (first, _) = s.trajectory(Some(&esdf), base.as_deref())?;
    let t0 = Instant::now();
    let r = planner::replan(
        &first,
        a.at,
        &a.goal,
        &esdf,
        &s.planning_system(),
        &s.planner,
        &s.search_config(),
    )?;
    let wall = t0.elapsed().as_secs_f64();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        first.save(dir.join("first.json"))?;
        if let Some(t) = &r.outcome.trajectory {
            t.save(dir.join("replanned.json"))?;
        }
        write_json(dir, "replan.json", &r)?;
    }
    print_json(&json!({
        "switch_time": r.switch_time,
        "continuity": r.continuity,
        "success": r.outcome.success,
        "wall_time_s": wall,
        "duration": r.outcome.report.duration,
        "penalties": r.outcome.report.terms,
    }))?;
    if !r.outcome.success {
        return Err(CliError::Infeasible(
            "replanned trajectory misses the feasibility margins".into(),
        ));
    }
    Ok(())
}
