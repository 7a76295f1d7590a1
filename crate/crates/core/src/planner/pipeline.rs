use serde::{Deserialize, Serialize};

use super::feasibility::{check_feasibility, FeasibilityReport};
use super::lbfgs::StopReason;
use super::problem::{optimize, PlanReport};
use super::seed::Seed;
use super::PlannerConfig;
use crate::env::EsdfGrid;
use crate::error::Result;
use crate::model::{SystemConfig, Vec3};
use crate::pathfind::{plan_path, shortcut, PathfindConfig, PlannedPath};
use crate::traj::Trajectory;

/// Extra solver runs granted when the iteration budget ran out before the
/// resampled trajectory met its margins.
pub const REFINE_PASSES: usize = 2;

/// Front-end path, optimized trajectory and its post-hoc checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanOutcome {
    #[serde(skip)]
    pub path: Option<PlannedPath>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
    pub report: PlanReport,
    pub feasibility: FeasibilityReport,
    pub success: bool,
    pub path_length: f64,
}

/// Search, shortcut the lattice path, seed, optimize, and resample the result at ten times the
/// quadrature density. A solve that stopped on its iteration cap with the
/// margins unmet is resumed up to [`REFINE_PASSES`] times.
pub fn plan(
    start: &Vec3,
    goal: &Vec3,
    esdf: &EsdfGrid,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
    search: &PathfindConfig,
) -> Result<PlanOutcome> {
    plan_from(start, None, goal, esdf, sys, cfg, search)
}

/// As [`plan`], but the trajectory starts from the boundary rows `head`
/// (derivative orders `0..s` of every channel) when given.
pub(crate) fn plan_from(
    start: &Vec3,
    head: Option<Vec<Vec<f64>>>,
    goal: &Vec3,
    esdf: &EsdfGrid,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
    search: &PathfindConfig,
) -> Result<PlanOutcome> {
    let path = plan_path(start, goal, esdf, sys.cable_length, search)?;
    let nodes = shortcut(&path.nodes, esdf, sys.cable_length, search);
    let mut seed = Seed::from_configs(&nodes, path.nodes.len() - 1, sys, cfg)?;
    if let Some(h) = head {
        seed = seed.with_head(h, sys, cfg)?;
    }
    let (mut traj, mut report) = optimize(&seed, sys, cfg, Some(esdf))?;
    let mut feasibility = check_feasibility(&traj, sys, cfg, Some(esdf), 10 * cfg.kappa);
    for _ in 0..REFINE_PASSES {
        if feasibility.success(cfg) || report.stop_reason != StopReason::MaxIterations {
            break;
        }
        // out of iterations: continue from the result with fresh curvature memory
        let (t, r) = optimize(&seed.warm_start(&traj)?, sys, cfg, Some(esdf))?;
        report = PlanReport {
            iterations: report.iterations + r.iterations,
            evaluations: report.evaluations + r.evaluations,
            wall_time_s: report.wall_time_s + r.wall_time_s,
            initial_cost: report.initial_cost,
            ..r
        };
        traj = t;
        feasibility = check_feasibility(&traj, sys, cfg, Some(esdf), 10 * cfg.kappa);
    }
    let success = feasibility.success(cfg);
    let path_length = payload_length(&traj);
    Ok(PlanOutcome {
        path: Some(path),
        trajectory: Some(traj),
        report,
        feasibility,
        success,
        path_length,
    })
}

/// Arclength of the payload curve, by dense polyline.
pub fn payload_length(traj: &Trajectory) -> f64 {
    let mut len = 0.0;
    let mut prev: Option<Vec3> = None;
    let mut buf = vec![0.0; traj.dims];
    for m in 0..traj.pieces() {
        for k in 0..=64 {
            traj.eval_piece(m, traj.durations[m] * k as f64 / 64.0, 0, &mut buf);
            let p = Vec3::new(buf[0], buf[1], buf[2]);
            if let Some(q) = prev {
                len += (p - q).norm();
            }
            prev = Some(p);
        }
    }
    len
}
