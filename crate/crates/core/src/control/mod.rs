//! Per-robot two-loop controller. The outer loop turns position tracking
//! errors into a thrust vector by incremental dynamic inversion, so the cable
//! force is compensated from filtered measurements rather than modeled; the
//! inner loop tracks the attitude built from that thrust direction and the
//! reference yaw. A controller only ever sees its own robot's measurements
//! and the shared trajectory.

mod filter;
mod mass;
mod reference;

pub use filter::LowPassFilter;
pub use mass::{estimate_payload_mass, MassEstimate, VARIANCE_LIMIT};
pub use reference::{desired_states_from_trajectory, DesiredState};

use nalgebra::{Matrix3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatness::attitude_from_hopf;
use crate::model::{e3, ControlInput, RobotState, SystemConfig, Vec3};
use crate::traj::Trajectory;

const COMMAND_EPS: f64 = 1e-6;
const AXIS_EPS: f64 = 1e-12;

/// How the outer loop accounts for the cable force.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceCompensation {
    /// Filtered thrust minus filtered acceleration (incremental inversion).
    #[default]
    Indi,
    /// Planned cable force from the trajectory.
    ReferenceForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub k_p: [f64; 3],
    pub k_v: [f64; 3],
    pub k_theta: [f64; 3],
    pub k_omega: [f64; 3],
    pub k_i: [f64; 3],
    /// Cutoff shared by all four filters [Hz].
    pub cutoff_hz: f64,
    /// Control loop rate [Hz].
    pub rate_hz: f64,
    /// Samples per robot used by the payload mass estimate.
    pub mass_window: usize,
    /// Clamp on the integral contribution per axis [rad/s^2].
    pub integrator_limit: f64,
    pub compensation: ForceCompensation,
    /// Cable attachment in the body frame [m]; the outer loop tracks this
    /// point rather than the center of mass.
    pub attach_offset: [f64; 3],
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k_p: [12.0, 12.0, 3.0],
            k_v: [4.0, 4.0, 2.0],
            k_theta: [70.0, 100.0, 19.0],
            k_omega: [10.0, 12.0, 3.0],
            k_i: [0.0, 0.0, 0.3],
            cutoff_hz: 20.0,
            rate_hz: 333.0,
            mass_window: 1000,
            integrator_limit: 1.0,
            compensation: ForceCompensation::Indi,
            attach_offset: [0.0; 3],
        }
    }
}

fn diag(v: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vec3::from(*v))
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let gains = [self.k_p, self.k_v, self.k_theta, self.k_omega, self.k_i];
        if gains
            .iter()
            .flatten()
            .any(|g| !(*g >= 0.0) || !g.is_finite())
        {
            return Err(Error::InvalidConfig(
                "controller gains must be finite and nonnegative".into(),
            ));
        }
        if !(self.cutoff_hz > 0.0) || !(self.rate_hz > 2.0 * self.cutoff_hz) {
            return Err(Error::InvalidConfig(
                "filter cutoff must lie in (0, rate/2)".into(),
            ));
        }
        if self.mass_window == 0 {
            return Err(Error::InvalidConfig(
                "mass window must be at least 1".into(),
            ));
        }
        if !(self.integrator_limit >= 0.0) {
            return Err(Error::InvalidConfig(
                "integrator limit must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }
}

/// Force the cable exerts on the robot, negated: `force = F rho` points from
/// the payload to the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensionEstimate {
    pub force: Vec3,
    pub magnitude: f64,
    pub direction: Vec3,
}

/// Inverts the robot translational dynamics for the cable force:
/// `F rho = m (f z_B - g e3 - a)`. Below 1e-6 N the direction is undefined
/// and `previous` (or `e3`) is kept.
pub fn estimate_tension(
    accel: &Vec3,
    thrust: &Vec3,
    sys: &SystemConfig,
    previous: Option<&Vec3>,
) -> TensionEstimate {
    let force = (thrust - e3() * sys.gravity - accel) * sys.robot_mass;
    let magnitude = force.norm();
    let direction = if magnitude > COMMAND_EPS {
        force / magnitude
    } else {
        previous.copied().unwrap_or_else(e3)
    };
    TensionEstimate {
        force,
        magnitude,
        direction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterCommand {
    pub accel: Vec3,
    pub vector: Vec3,
    pub magnitude: f64,
    pub direction: Vec3,
}

/// Tracking acceleration `K_p e_p + K_v e_v + a_d`.
pub fn tracking_accel(state: &RobotState, desired: &DesiredState, cfg: &ControllerConfig) -> Vec3 {
    diag(&cfg.k_p) * (desired.position - state.position)
        + diag(&cfg.k_v) * (desired.velocity - state.velocity)
        + desired.acceleration
}

fn command(accel: Vec3, vector: Vec3) -> Result<OuterCommand> {
    let magnitude = vector.norm();
    if magnitude < COMMAND_EPS {
        return Err(Error::DegenerateThrust(magnitude));
    }
    Ok(OuterCommand {
        accel,
        vector,
        magnitude,
        direction: vector / magnitude,
    })
}

/// Incremental outer loop: `f_c = FL(f z_B) + a_c - FL(a)`.
pub fn outer_loop(
    state: &RobotState,
    desired: &DesiredState,
    accel: &Vec3,
    thrust: &Vec3,
    cfg: &ControllerConfig,
) -> Result<OuterCommand> {
    let a_c = tracking_accel(state, desired, cfg);
    command(a_c, thrust + a_c - accel)
}

/// Outer loop that feeds the planned cable force forward instead of the
/// measured increment.
pub fn reference_force_loop(
    state: &RobotState,
    desired: &DesiredState,
    sys: &SystemConfig,
    cfg: &ControllerConfig,
) -> Result<OuterCommand> {
    let a_c = tracking_accel(state, desired, cfg);
    command(
        a_c,
        a_c + e3() * sys.gravity + desired.planned_force / sys.robot_mass,
    )
}

/// Rotation vector taking the current attitude to the desired one, in the
/// current body frame, along the shorter of the two arcs.
pub fn attitude_error(
    q: &UnitQuaternion<f64>,
    q_d: &UnitQuaternion<f64>,
) -> (UnitQuaternion<f64>, Vec3) {
    let mut qe = (q.inverse() * q_d).into_inner();
    if qe.w < 0.0 {
        qe = -qe;
    }
    let iota = qe.imag();
    let n = iota.norm();
    let theta = if n < AXIS_EPS {
        Vec3::zeros()
    } else {
        iota / n * (2.0 * qe.w.clamp(-1.0, 1.0).acos())
    };
    (UnitQuaternion::new_unchecked(qe), theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoopInput {
    pub attitude: UnitQuaternion<f64>,
    /// Filtered body rate.
    pub body_rate: Vec3,
    /// Measured angular acceleration.
    pub body_accel: Vec3,
    /// Filtered torque estimate.
    pub torque: Vec3,
    /// Commanded body z-axis from the outer loop.
    pub z_cmd: Vec3,
    pub yaw: f64,
    pub rate_ff: Vec3,
    pub accel_ff: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerCommand {
    pub torque: Vec3,
    pub desired_attitude: UnitQuaternion<f64>,
    pub attitude_error: Vec3,
    pub rate_error: Vec3,
    pub accel_cmd: Vec3,
}

/// Attitude loop with incremental torque. `integral` accumulates the rate
/// error and is clamped so each axis contributes at most
/// `cfg.integrator_limit`.
pub fn inner_loop(
    input: &InnerLoopInput,
    integral: &mut Vec3,
    inertia: &Matrix3<f64>,
    cfg: &ControllerConfig,
) -> Result<InnerCommand> {
    let q_d = attitude_from_hopf(&input.z_cmd, input.yaw)?;
    let (qe, theta) = attitude_error(&input.attitude, &q_d);
    let rate_error = qe * input.rate_ff - input.body_rate;
    *integral += rate_error * cfg.dt();
    for a in 0..3 {
        if cfg.k_i[a] > 0.0 {
            let cap = cfg.integrator_limit / cfg.k_i[a];
            integral[a] = integral[a].clamp(-cap, cap);
        }
    }
    let accel_cmd = diag(&cfg.k_theta) * theta
        + diag(&cfg.k_omega) * rate_error
        + diag(&cfg.k_i) * *integral
        + input.accel_ff;
    Ok(InnerCommand {
        torque: input.torque + inertia * (accel_cmd - input.body_accel),
        desired_attitude: q_d,
        attitude_error: theta,
        rate_error,
        accel_cmd,
    })
}

/// What one robot senses about itself at a control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotMeasurement {
    pub state: RobotState,
    /// World-frame linear acceleration [m/s^2].
    pub accel: Vec3,
    /// Mass-normalized thrust estimated from the rotor speeds [N/kg].
    pub thrust: f64,
    /// Body torque estimated from the rotor speeds [N m].
    pub torque: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub input: ControlInput,
    pub tension: TensionEstimate,
    pub desired: DesiredState,
    pub thrust_cmd: Vec3,
    pub attitude_error: Vec3,
    /// The outer loop produced a near-zero thrust vector; the previous
    /// direction was held.
    pub degenerate: bool,
}

/// Controller instance owned by one robot.
#[derive(Debug, Clone)]
pub struct RobotController {
    pub index: usize,
    pub sys: SystemConfig,
    pub cfg: ControllerConfig,
    accel_filter: LowPassFilter,
    thrust_filter: LowPassFilter,
    rate_filter: LowPassFilter,
    torque_filter: LowPassFilter,
    prev_rate: Option<Vec3>,
    integral: Vec3,
    last_direction: Vec3,
    last_cable: Option<Vec3>,
}

impl RobotController {
    pub fn new(index: usize, sys: SystemConfig, cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        sys.validate()?;
        let f = || LowPassFilter::new(cfg.cutoff_hz, cfg.rate_hz, 3);
        Ok(Self {
            index,
            accel_filter: f()?,
            thrust_filter: f()?,
            rate_filter: f()?,
            torque_filter: f()?,
            prev_rate: None,
            integral: Vec3::zeros(),
            last_direction: e3(),
            last_cable: None,
            sys,
            cfg,
        })
    }

    /// One control tick at trajectory time `t`.
    pub fn step(
        &mut self,
        t: f64,
        traj: &Trajectory,
        meas: &RobotMeasurement,
    ) -> Result<ControlOutput> {
        let offset = Vec3::from(self.cfg.attach_offset);
        let tracked = RobotState {
            position: meas.state.position + meas.state.attitude * offset,
            velocity: meas.state.velocity
                + meas.state.attitude * meas.state.body_rate.cross(&offset),
            ..meas.state
        };
        let state = &tracked;
        let z_b = state.attitude * e3();
        let accel = self.accel_filter.apply3(&meas.accel);
        let thrust = self.thrust_filter.apply3(&(z_b * meas.thrust));
        let rate = self.rate_filter.apply3(&state.body_rate);
        let torque = self.torque_filter.apply3(&meas.torque);
        let body_accel = match self.prev_rate {
            Some(prev) => (rate - prev) * self.cfg.rate_hz,
            None => Vec3::zeros(),
        };
        self.prev_rate = Some(rate);

        let tension = estimate_tension(&accel, &thrust, &self.sys, self.last_cable.as_ref());
        self.last_cable = Some(tension.direction);
        let desired =
            desired_states_from_trajectory(traj, self.index, t, Some(&tension), &self.sys)?;

        let outer = match self.cfg.compensation {
            ForceCompensation::Indi => outer_loop(state, &desired, &accel, &thrust, &self.cfg),
            ForceCompensation::ReferenceForce => {
                reference_force_loop(state, &desired, &self.sys, &self.cfg)
            }
        };
        let (magnitude, direction, vector, degenerate) = match outer {
            Ok(c) => (c.magnitude, c.direction, c.vector, false),
            Err(Error::DegenerateThrust(m)) => (m, self.last_direction, Vec3::zeros(), true),
            Err(e) => return Err(e),
        };
        self.last_direction = direction;

        let inner = inner_loop(
            &InnerLoopInput {
                attitude: state.attitude,
                body_rate: rate,
                body_accel,
                torque,
                z_cmd: direction,
                yaw: desired.yaw,
                rate_ff: desired.body_rate,
                accel_ff: desired.body_accel,
            },
            &mut self.integral,
            &self.sys.inertia_matrix(),
            &self.cfg,
        )?;
        Ok(ControlOutput {
            input: ControlInput::new(magnitude, inner.torque),
            tension,
            desired,
            thrust_cmd: vector,
            attitude_error: inner.attitude_error,
            degenerate,
        })
    }
}
