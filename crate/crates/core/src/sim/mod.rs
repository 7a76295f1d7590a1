//! Closed-loop simulation: rotor dynamics, measurement synthesis, the
//! per-robot controllers and the coupled plant, with tracking metrics and
//! CSV traces.

mod circle;
mod motor;
mod scenario;
mod sensors;

pub use circle::{
    circle_entry_seed, circle_entry_trajectory, max_payload_accel, max_payload_speed, CircleEntry,
};
pub use motor::{MotorModel, Rotors, HOVER_RPM};
pub use scenario::{
    ablation_arms, force_compensation_ablation, hover_mass_estimate, hover_trajectory,
    robustness_sweep, run_scenario, AblationOutcome, PayloadSpec, Scenario, ScenarioOutcome,
    SweepPoint, TrajectorySpec,
};
pub use sensors::{NoiseConfig, Sensors};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{estimate_payload_mass, ControllerConfig, MassEstimate, RobotController};
use crate::env::EsdfGrid;
use crate::error::{Error, Result};
use crate::flatness::{self, attitude_from_hopf, layout, tilt_angle, SAMPLE_ORDERS};
use crate::model::{
    rho_from_angles, ControlInput, PayloadState, Plant, RobotState, SystemConfig, Vec3, WorldState,
};
use crate::traj::Trajectory;

/// Any state component beyond this magnitude counts as divergence.
const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Integration step [s].
    pub dt: f64,
    /// Plant steps per control tick.
    pub control_every: usize,
    /// Hover at the first reference before the trajectory starts [s].
    pub warmup: f64,
    /// Hover at the last reference after the trajectory ends [s].
    pub tail: f64,
    /// Payload error that ends the run as a failure [m].
    pub failure_error: f64,
    /// Constant world-frame force on every robot [N].
    pub disturbance: [f64; 3],
    /// Linear drag on every robot [N s/m]; unknown to the planner and the
    /// controller.
    pub robot_drag: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            control_every: 3,
            warmup: 3.0,
            tail: 1.0,
            failure_error: 0.5,
            disturbance: [0.0; 3],
            robot_drag: 0.1,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::InvalidConfig("dt must lie in (0, 0.01]".into()));
        }
        if self.control_every == 0 {
            return Err(Error::InvalidConfig(
                "control_every must be at least 1".into(),
            ));
        }
        if !(self.warmup >= 0.0)
            || !(self.tail >= 0.0)
            || !(self.failure_error > 0.0)
            || !(self.robot_drag >= 0.0)
        {
            return Err(Error::InvalidConfig(
                "warmup, tail and drag must be nonnegative, failure_error positive".into(),
            ));
        }
        Ok(())
    }

    pub fn control_rate(&self) -> f64 {
        1.0 / (self.dt * self.control_every as f64)
    }
}

/// Everything a closed-loop run needs besides the trajectory.
#[derive(Debug, Clone)]
pub struct SimSetup {
    /// True plant parameters (including the true payload mass).
    pub sys: SystemConfig,
    pub controller: ControllerConfig,
    pub motor: MotorModel,
    pub noise: NoiseConfig,
    pub seed: u64,
    pub options: SimOptions,
    /// Cable attachment in the robot body frame [m].
    pub attach_offset: Vec3,
}

impl SimSetup {
    pub fn new(sys: SystemConfig) -> Self {
        Self {
            sys,
            controller: ControllerConfig::default(),
            motor: MotorModel::default(),
            noise: NoiseConfig::default(),
            seed: 0,
            options: SimOptions::default(),
            attach_offset: Vec3::new(0.0, 0.0, -0.01),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Payload position RMSE against the plan [m].
    pub rmse: f64,
    /// Largest payload position error [m].
    pub maxe: f64,
    /// Smallest distance-field value at the payload or a robot [m].
    pub min_clearance: Option<f64>,
    pub min_robot_distance: f64,
    pub max_speed: f64,
    /// Largest mass-normalized thrust actually produced [N/kg].
    pub max_thrust: f64,
    pub max_tilt: f64,
    pub max_rate: f64,
    pub max_attitude_error: f64,
    /// Largest average rotor speed of any robot [RPM].
    pub max_mean_rpm: f64,
    /// Number of taut-to-slack transitions over all cables.
    pub slack_events: usize,
    pub max_cable_residual: f64,
    pub duration: f64,
    pub completed: bool,
    pub failure: Option<String>,
    pub diverged: bool,
}

/// Per-tick rows for plotting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub payload: Vec<Vec<f64>>,
    pub robots: Vec<Vec<Vec<f64>>>,
}

const PAYLOAD_COLUMNS: [&str; 11] = [
    "time", "px", "py", "pz", "vx", "vy", "vz", "px_ref", "py_ref", "pz_ref", "error",
];
const ROBOT_COLUMNS: [&str; 28] = [
    "time",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "qw",
    "qx",
    "qy",
    "qz",
    "wx",
    "wy",
    "wz",
    "px_ref",
    "py_ref",
    "pz_ref",
    "thrust_cmd",
    "tx_cmd",
    "ty_cmd",
    "tz_cmd",
    "fx_est",
    "fy_est",
    "fz_est",
    "tension",
    "mean_rpm",
    "attitude_error",
    "slack",
];

impl Trace {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("payload.csv"), &PAYLOAD_COLUMNS, &self.payload)?;
        for (n, rows) in self.robots.iter().enumerate() {
            write_csv(&dir.join(format!("robot{n}.csv")), &ROBOT_COLUMNS, rows)?;
        }
        Ok(())
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub metrics: RunMetrics,
    pub trace: Option<Trace>,
    /// Cable-force estimates per robot, one per control tick after warmup.
    pub tension_history: Vec<Vec<Vec3>>,
    /// Estimate over the last `mass_window` ticks of the run, if available.
    pub mass: Option<MassEstimate>,
}

/// World at the first sample of `traj`: payload at rest, every cable
/// attachment on its planned position and robots aligned with their planned
/// thrust.
pub fn initial_world(
    traj: &Trajectory,
    sys: &SystemConfig,
    attach_offset: &Vec3,
) -> Result<WorldState> {
    let sample = traj.flat_sample(0.0, SAMPLE_ORDERS)?;
    let p = sample.payload(0);
    let mut robots = Vec::with_capacity(sys.n_robots);
    for n in 0..sys.n_robots {
        let plan = flatness::robot_flat_state(&sample, n, sys)?;
        let rho = rho_from_angles(
            sample.channel(0, layout::pitch(n)),
            sample.channel(0, layout::azimuth(n)),
        );
        let attitude = attitude_from_hopf(&plan.thrust, sample.channel(0, layout::yaw(n)))?;
        robots.push(RobotState {
            position: p + rho * sys.cable_length - attitude * attach_offset,
            velocity: plan.velocity,
            attitude,
            body_rate: plan.body_rate,
        });
    }
    Ok(WorldState {
        time: 0.0,
        payload: PayloadState {
            position: p,
            velocity: sample.payload(1),
        },
        cables: vec![crate::model::CableState::new(0.0, 0.0, 0.0); sys.n_robots],
        slack: vec![false; sys.n_robots],
        payload_accel: Vec3::zeros(),
        robot_accel: vec![Vec3::zeros(); sys.n_robots],
        robots,
    })
}

fn diverged(w: &WorldState) -> bool {
    let bad = |v: &Vec3| {
        v.iter()
            .any(|x| !x.is_finite() || x.abs() > DIVERGENCE_BOUND)
    };
    bad(&w.payload.position)
        || bad(&w.payload.velocity)
        || w.robots.iter().any(|r| {
            bad(&r.position)
                || bad(&r.velocity)
                || bad(&r.body_rate)
                || !r.attitude.quaternion().norm().is_finite()
        })
}

fn payload_reference(traj: &Trajectory, t: f64) -> Result<Vec3> {
    let v = traj.eval(t.clamp(0.0, traj.total_duration()), 0)?;
    Ok(Vec3::new(v[0], v[1], v[2]))
}

/// Flies `traj` in closed loop. Runs that diverge or whose payload error
/// exceeds the failure bound end early and are reported as not completed.
pub fn simulate(
    setup: &SimSetup,
    traj: &Trajectory,
    field: Option<&EsdfGrid>,
    record: bool,
) -> Result<SimResult> {
    let sys = &setup.sys;
    let opt = &setup.options;
    opt.validate()?;
    sys.validate()?;
    if traj.n_robots != sys.n_robots {
        return Err(Error::InvalidConfig(
            "trajectory and system disagree on robot count".into(),
        ));
    }
    let n_robots = sys.n_robots;
    let mut ccfg = setup.controller.clone();
    ccfg.rate_hz = opt.control_rate();
    ccfg.attach_offset = setup.attach_offset.into();
    let mut plant = Plant::new(sys.clone()).with_attach_offset(setup.attach_offset);
    plant.robot_force = vec![Vec3::from(opt.disturbance); n_robots];
    plant.robot_drag = opt.robot_drag;

    let mut controllers = (0..n_robots)
        .map(|n| RobotController::new(n, sys.clone(), ccfg.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut sensors = (0..n_robots)
        .map(|n| Sensors::new(setup.noise.clone(), setup.seed, n))
        .collect::<Result<Vec<_>>>()?;
    let mut rotors = Vec::with_capacity(n_robots);
    let mut world = initial_world(traj, sys, &setup.attach_offset)?;
    for n in 0..n_robots {
        let d = crate::control::desired_states_from_trajectory(traj, n, 0.0, None, sys)?;
        let mut r = Rotors::new(setup.motor.clone(), sys)?;
        r.settle(&ControlInput::new(d.thrust.norm(), Vec3::zeros()));
        rotors.push(r);
    }
    let inputs: Vec<ControlInput> = rotors.iter().map(Rotors::output).collect();
    world = plant.refresh(&world, &inputs);

    let total = traj.total_duration();
    let steps = ((opt.warmup + total + opt.tail) / opt.dt).round() as usize;
    let mut trace = record.then(|| Trace {
        payload: Vec::new(),
        robots: vec![Vec::new(); n_robots],
    });
    let mut history = vec![Vec::new(); n_robots];
    let mut m = RunMetrics {
        rmse: 0.0,
        maxe: 0.0,
        min_clearance: field.map(|_| f64::INFINITY),
        min_robot_distance: f64::INFINITY,
        max_speed: 0.0,
        max_thrust: 0.0,
        max_tilt: 0.0,
        max_rate: 0.0,
        max_attitude_error: 0.0,
        max_mean_rpm: 0.0,
        slack_events: 0,
        max_cable_residual: 0.0,
        duration: 0.0,
        completed: true,
        failure: None,
        diverged: false,
    };
    let mut sq_err = 0.0;
    let mut samples = 0usize;
    let mut was_slack = vec![false; n_robots];

    for k in 0..steps {
        let t = -opt.warmup + k as f64 * opt.dt;
        let tracking = t >= 0.0;
        if k % opt.control_every == 0 {
            let p_ref = payload_reference(traj, t)?;
            let err = (world.payload.position - p_ref).norm();
            if tracking {
                sq_err += err * err;
                samples += 1;
                m.maxe = m.maxe.max(err);
                if let (Some(f), Some(c)) = (field, m.min_clearance.as_mut()) {
                    *c = c.min(f.distance(&world.payload.position));
                    for r in &world.robots {
                        *c = c.min(f.distance(&r.position));
                    }
                }
            }
            if let Some(tr) = trace.as_mut() {
                let mut row = vec![t];
                row.extend_from_slice(world.payload.position.as_slice());
                row.extend_from_slice(world.payload.velocity.as_slice());
                row.extend_from_slice(p_ref.as_slice());
                row.push(err);
                tr.payload.push(row);
            }
            for n in 0..n_robots {
                let meas = sensors[n].measure(
                    &world.robots[n],
                    &world.robot_accel[n],
                    &rotors[n].estimate(),
                );
                let out = match controllers[n].step(t, traj, &meas) {
                    Ok(o) => o,
                    Err(e) => {
                        m.completed = false;
                        m.diverged = true;
                        m.failure = Some(format!(
                            "controller of robot {n} failed at t = {t:.3} s: {e}"
                        ));
                        break;
                    }
                };
                rotors[n].command(&out.input);
                if tracking {
                    history[n].push(out.tension.force);
                    m.max_attitude_error = m.max_attitude_error.max(out.attitude_error.norm());
                }
                if let Some(tr) = trace.as_mut() {
                    let r = &world.robots[n];
                    let q = r.attitude.quaternion();
                    let mut row = vec![t];
                    row.extend_from_slice(r.position.as_slice());
                    row.extend_from_slice(r.velocity.as_slice());
                    row.extend_from_slice(&[q.w, q.i, q.j, q.k]);
                    row.extend_from_slice(r.body_rate.as_slice());
                    row.extend_from_slice(out.desired.position.as_slice());
                    row.push(out.input.thrust);
                    row.extend_from_slice(out.input.torque.as_slice());
                    row.extend_from_slice(out.tension.force.as_slice());
                    row.push(world.cables[n].tension);
                    row.push(rotors[n].mean_rpm());
                    row.push(out.attitude_error.norm());
                    row.push(if world.slack[n] { 1.0 } else { 0.0 });
                    tr.robots[n].push(row);
                }
            }
            if !m.completed {
                break;
            }
            if tracking && err > opt.failure_error {
                m.completed = false;
                m.failure = Some(format!(
                    "payload error {err:.3} m exceeded the bound at t = {t:.3} s"
                ));
                break;
            }
        }

        let inputs: Vec<ControlInput> = rotors.iter().map(Rotors::output).collect();
        world = plant.step(&world, &inputs, opt.dt);
        for r in rotors.iter_mut() {
            r.advance(opt.dt);
        }
        if diverged(&world) {
            m.completed = false;
            m.diverged = true;
            m.failure = Some(format!("state diverged at t = {:.3} s", t + opt.dt));
            break;
        }
        if tracking {
            for n in 0..n_robots {
                if world.slack[n] && !was_slack[n] {
                    m.slack_events += 1;
                }
                let r = &world.robots[n];
                m.max_speed = m.max_speed.max(r.velocity.norm());
                m.max_thrust = m.max_thrust.max(inputs[n].thrust);
                m.max_tilt = m.max_tilt.max(tilt_angle(&r.attitude));
                m.max_rate = m.max_rate.max(r.body_rate.norm());
                m.max_mean_rpm = m.max_mean_rpm.max(rotors[n].mean_rpm());
                for other in &world.robots[n + 1..] {
                    m.min_robot_distance = m
                        .min_robot_distance
                        .min((r.position - other.position).norm());
                }
            }
            m.max_cable_residual = m.max_cable_residual.max(world.cable_residual(&plant));
        }
        was_slack.clone_from(&world.slack);
        m.duration = (t + opt.dt).max(0.0);
    }
    m.rmse = if samples > 0 {
        (sq_err / samples as f64).sqrt()
    } else {
        0.0
    };
    let mass = estimate_payload_mass(&history, ccfg.mass_window, sys.gravity).ok();
    Ok(SimResult {
        metrics: m,
        trace,
        tension_history: history,
        mass,
    })
}
