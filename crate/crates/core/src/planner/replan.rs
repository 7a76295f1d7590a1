use serde::{Deserialize, Serialize};

use super::pipeline::{plan_from, PlanOutcome};
use super::PlannerConfig;
use crate::env::EsdfGrid;
use crate::error::{Error, Result};
use crate::model::{SystemConfig, Vec3};
use crate::pathfind::PathfindConfig;
use crate::traj::{Trajectory, DEFAULT_S};

/// How far ahead of the current time the new trajectory starts [s].
pub const LOOKAHEAD: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplanOutcome {
    /// Time on the old trajectory where the new one takes over.
    pub switch_time: f64,
    pub outcome: PlanOutcome,
    /// Largest jump in any channel derivative below order s at the switch.
    pub continuity: f64,
}

/// Derivative rows `0..s` of every channel at `t`.
pub fn switch_state(traj: &Trajectory, t: f64) -> Result<Vec<Vec<f64>>> {
    (0..DEFAULT_S).map(|k| traj.eval(t, k)).collect()
}

/// Largest difference between the jets of `old` at `t` and `new` at 0.
pub fn switch_continuity(old: &Trajectory, t: f64, new: &Trajectory) -> Result<f64> {
    let a = switch_state(old, t)?;
    let b = switch_state(new, 0.0)?;
    Ok(a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Plans to a new goal while `current` is being flown: the new trajectory
/// starts from the state [`LOOKAHEAD`] seconds after `now`.
pub fn replan(
    current: &Trajectory,
    now: f64,
    goal: &Vec3,
    esdf: &EsdfGrid,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
    search: &PathfindConfig,
) -> Result<ReplanOutcome> {
    let total = current.total_duration();
    if !(0.0..=total).contains(&now) {
        return Err(Error::OutOfDomain { t: now, total });
    }
    let switch_time = (now + LOOKAHEAD).min(total);
    let head = switch_state(current, switch_time)?;
    let start = Vec3::new(head[0][0], head[0][1], head[0][2]);
    let outcome = plan_from(&start, Some(head), goal, esdf, sys, cfg, search)?;
    let continuity = match &outcome.trajectory {
        Some(t) => switch_continuity(current, switch_time, t)?,
        None => f64::INFINITY,
    };
    Ok(ReplanOutcome {
        switch_time,
        outcome,
        continuity,
    })
}
