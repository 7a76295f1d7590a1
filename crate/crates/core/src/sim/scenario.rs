use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::circle::{circle_entry_trajectory, max_payload_accel, max_payload_speed, CircleEntry};
use super::{simulate, MotorModel, NoiseConfig, RunMetrics, SimOptions, SimResult, SimSetup};
use crate::control::{ControllerConfig, ForceCompensation, MassEstimate};
use crate::env::{EsdfGrid, MapSpec};
use crate::error::{Error, Result};
use crate::flatness::layout;
use crate::model::{SystemConfig, Vec3};
use crate::pathfind::PathfindConfig;
use crate::planner::{plan, PlanReport, PlannerConfig, Seed};
use crate::traj::{SparseParams, Trajectory, DEFAULT_S};

/// Where the flown trajectory comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    Hover {
        position: [f64; 3],
        duration: f64,
        #[serde(default = "default_pitch")]
        pitch: f64,
    },
    /// Trajectory JSON, relative to the scenario file.
    File {
        path: PathBuf,
    },
    /// Plan through the scenario map.
    Plan {
        start: [f64; 3],
        goal: [f64; 3],
    },
    CircleEntry(CircleEntry),
}

fn default_pitch() -> f64 {
    0.85
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PayloadSpec {
    /// Payload mass assumed by the planner; the true mass is
    /// `system.payload_mass`.
    pub planning_mass: Option<f64>,
    /// Cable attachment in the robot body frame [m].
    pub attach_offset: [f64; 3],
}

impl Default for PayloadSpec {
    fn default() -> Self {
        Self {
            planning_mass: None,
            attach_offset: [0.0, 0.0, -0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub payload: PayloadSpec,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub map: Option<MapSpec>,
    #[serde(default)]
    pub planner: PlannerConfig,
    /// Front-end search settings; derived from the pitch limit when unset.
    #[serde(default)]
    pub search: Option<PathfindConfig>,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub motor: MotorModel,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sim: SimOptions,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub metrics: RunMetrics,
    pub mass_estimate: Option<MassEstimate>,
    pub trajectory_duration: f64,
    pub planned_max_speed: f64,
    pub planned_max_accel: f64,
    pub plan_report: Option<PlanReport>,
}

impl Scenario {
    pub fn new(name: &str, trajectory: TrajectorySpec) -> Self {
        Self {
            name: name.into(),
            system: SystemConfig::default(),
            payload: PayloadSpec::default(),
            trajectory,
            map: None,
            planner: PlannerConfig::default(),
            search: None,
            controller: ControllerConfig::default(),
            motor: MotorModel::default(),
            noise: NoiseConfig::default(),
            sim: SimOptions::default(),
            seed: 0,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let s: Self = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.planner.validate()?;
        self.controller.validate()?;
        self.motor.validate()?;
        self.noise.validate()?;
        self.sim.validate()?;
        if let Some(m) = self.payload.planning_mass {
            if !(m > 0.0) {
                return Err(Error::Scenario("planning mass must be positive".into()));
            }
        }
        match &self.trajectory {
            TrajectorySpec::Hover { duration, .. } if !(*duration > 0.0) => {
                Err(Error::Scenario("hover duration must be positive".into()))
            }
            TrajectorySpec::Plan { .. } if self.map.is_none() => {
                Err(Error::Scenario("a planned trajectory needs a map".into()))
            }
            TrajectorySpec::CircleEntry(c) => c.validate(),
            _ => Ok(()),
        }
    }

    pub fn search_config(&self) -> PathfindConfig {
        self.search.clone().unwrap_or_else(|| {
            PathfindConfig::for_pitch_limit(self.system.cable_length, self.planner.pitch_max)
        })
    }

    /// System as the planner sees it.
    pub fn planning_system(&self) -> SystemConfig {
        SystemConfig {
            payload_mass: self
                .payload
                .planning_mass
                .unwrap_or(self.system.payload_mass),
            ..self.system.clone()
        }
    }

    pub fn setup(&self) -> SimSetup {
        SimSetup {
            sys: self.system.clone(),
            controller: self.controller.clone(),
            motor: self.motor.clone(),
            noise: self.noise.clone(),
            seed: self.seed,
            options: self.sim.clone(),
            attach_offset: Vec3::from(self.payload.attach_offset),
        }
    }

    pub fn esdf(&self) -> Result<Option<EsdfGrid>> {
        self.map.as_ref().map(MapSpec::esdf).transpose()
    }

    /// Builds the trajectory to fly; `base_dir` resolves relative file paths.
    pub fn trajectory(
        &self,
        esdf: Option<&EsdfGrid>,
        base_dir: Option<&Path>,
    ) -> Result<(Trajectory, Option<PlanReport>)> {
        let sys = self.planning_system();
        match &self.trajectory {
            TrajectorySpec::Hover {
                position,
                duration,
                pitch,
            } => Ok((
                hover_trajectory(
                    &Vec3::from(*position),
                    *duration,
                    *pitch,
                    &sys,
                    &self.planner,
                )?,
                None,
            )),
            TrajectorySpec::File { path } => {
                let p = match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let traj = Trajectory::load(p)?;
                if traj.n_robots != sys.n_robots {
                    return Err(Error::Scenario(
                        "trajectory robot count differs from the system".into(),
                    ));
                }
                Ok((traj, None))
            }
            TrajectorySpec::Plan { start, goal } => {
                let esdf =
                    esdf.ok_or_else(|| Error::Scenario("a planned trajectory needs a map".into()))?;
                let search = self.search_config();
                let out = plan(
                    &Vec3::from(*start),
                    &Vec3::from(*goal),
                    esdf,
                    &sys,
                    &self.planner,
                    &search,
                )?;
                let traj = out
                    .trajectory
                    .ok_or_else(|| Error::Scenario("planner returned no trajectory".into()))?;
                Ok((traj, Some(out.report)))
            }
            TrajectorySpec::CircleEntry(c) => {
                let (traj, report) = circle_entry_trajectory(c, &sys, &self.planner)?;
                Ok((traj, Some(report)))
            }
        }
    }
}

/// Rest trajectory holding the formation at `position` for `duration`.
pub fn hover_trajectory(
    position: &Vec3,
    duration: f64,
    pitch: f64,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
) -> Result<Trajectory> {
    let rest = Seed::rest_boundary(position, pitch, sys, cfg);
    let params = SparseParams {
        junctions: vec![rest[0].clone()],
        durations: vec![0.5 * duration; 2],
    };
    Trajectory::build(
        DEFAULT_S,
        sys.n_robots,
        layout::channels(sys.n_robots),
        &params,
        &rest,
        &rest,
    )
}

fn outcome(
    s: &Scenario,
    traj: &Trajectory,
    result: &SimResult,
    report: Option<PlanReport>,
) -> Result<ScenarioOutcome> {
    Ok(ScenarioOutcome {
        name: s.name.clone(),
        metrics: result.metrics.clone(),
        mass_estimate: result.mass,
        trajectory_duration: traj.total_duration(),
        planned_max_speed: max_payload_speed(traj)?,
        planned_max_accel: max_payload_accel(traj)?,
        plan_report: report,
    })
}

/// Plans (if requested) and flies one scenario. With `out_dir`, writes the
/// trajectory, per-robot and payload traces and a metrics summary there.
/// A diverged run still writes its outputs, then returns an error.
pub fn run_scenario(
    s: &Scenario,
    base_dir: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<ScenarioOutcome> {
    s.validate()?;
    let esdf = s.esdf()?;
    let (traj, report) = s.trajectory(esdf.as_ref(), base_dir)?;
    let result = simulate(&s.setup(), &traj, esdf.as_ref(), out_dir.is_some())?;
    let out = outcome(s, &traj, &result, report)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        traj.save(dir.join("trajectory.json"))?;
        if let Some(trace) = &result.trace {
            trace.write(dir)?;
        }
        std::fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&out)?,
        )?;
    }
    if result.metrics.diverged {
        return Err(Error::Divergence {
            time: result.metrics.duration,
            reason: result.metrics.failure.clone().unwrap_or_default(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub planned_max_accel: f64,
    pub indi: RunMetrics,
    pub reference: RunMetrics,
}

/// Flies the same trajectory with incremental force compensation and with
/// the planned cable force fed forward. Divergence of either arm is
/// reported in its metrics.
pub fn force_compensation_ablation(
    s: &Scenario,
    base_dir: Option<&Path>,
) -> Result<AblationOutcome> {
    ablation_arms(
        s,
        base_dir,
        [ForceCompensation::Indi, ForceCompensation::ReferenceForce],
    )
}

/// Ablation with explicit laws for the two arms (`indi`, `reference`).
pub fn ablation_arms(
    s: &Scenario,
    base_dir: Option<&Path>,
    arms: [ForceCompensation; 2],
) -> Result<AblationOutcome> {
    s.validate()?;
    let esdf = s.esdf()?;
    let (traj, _) = s.trajectory(esdf.as_ref(), base_dir)?;
    let arm = |mode: ForceCompensation| -> Result<RunMetrics> {
        let mut setup = s.setup();
        setup.controller.compensation = mode;
        Ok(simulate(&setup, &traj, esdf.as_ref(), false)?.metrics)
    };
    Ok(AblationOutcome {
        planned_max_accel: max_payload_accel(&traj)?,
        indi: arm(arms[0])?,
        reference: arm(arms[1])?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Relative error of the planning mass.
    pub mass_error: f64,
    pub planning_mass: f64,
    pub metrics: RunMetrics,
}

/// Plans with the payload mass misstated by each relative error and flies
/// the true mass.
pub fn robustness_sweep(
    s: &Scenario,
    errors: &[f64],
    base_dir: Option<&Path>,
) -> Result<Vec<SweepPoint>> {
    s.validate()?;
    let esdf = s.esdf()?;
    errors
        .iter()
        .map(|&e| {
            let mut run = s.clone();
            let planning_mass = s.system.payload_mass * (1.0 + e);
            run.payload.planning_mass = Some(planning_mass);
            run.validate()?;
            let (traj, _) = run.trajectory(esdf.as_ref(), base_dir)?;
            let metrics = simulate(&run.setup(), &traj, esdf.as_ref(), false)?.metrics;
            Ok(SweepPoint {
                mass_error: e,
                planning_mass,
                metrics,
            })
        })
        .collect()
}

/// Hovers long enough to fill the controller's mass window after `settle`
/// seconds and returns the estimate over that window.
pub fn hover_mass_estimate(setup: &SimSetup, settle: f64) -> Result<MassEstimate> {
    let window = setup.controller.mass_window as f64 / setup.options.control_rate();
    let sys = &setup.sys;
    let traj = hover_trajectory(
        &Vec3::new(0.0, 0.0, 1.0),
        settle + window + 0.1,
        default_pitch(),
        sys,
        &PlannerConfig::default(),
    )?;
    let mut setup = setup.clone();
    setup.options.tail = 0.0;
    let result = simulate(&setup, &traj, None, false)?;
    if result.metrics.diverged {
        return Err(Error::Divergence {
            time: result.metrics.duration,
            reason: result.metrics.failure.unwrap_or_default(),
        });
    }
    result.mass.ok_or(Error::InsufficientSamples {
        needed: setup.controller.mass_window,
        got: result.tension_history.first().map_or(0, Vec::len),
    })
}
