use serde::{Deserialize, Serialize};

use super::TensionEstimate;
use crate::error::{Error, Result};
use crate::flatness::{self, layout, SAMPLE_ORDERS};
use crate::model::{e3, rho_from_angles, SystemConfig, Vec3};
use crate::traj::Trajectory;

/// Step used to difference the planned body rate into an angular
/// acceleration feedforward [s].
const RATE_DIFF_STEP: f64 = 1e-3;

/// References for one robot at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    /// Mass-normalized thrust vector feedforward.
    pub thrust: Vec3,
    pub z_body: Vec3,
    pub yaw: f64,
    pub body_rate: Vec3,
    pub body_accel: Vec3,
    /// Planned cable force `F rho` acting along the cable.
    pub planned_force: Vec3,
}

/// Evaluates the references of robot `n` at `t`. Times past either end of
/// the trajectory hold the boundary sample. With a tension estimate, the
/// thrust direction and body rate use the estimated cable force in place of
/// the planned one; position, velocity and acceleration never depend on it.
pub fn desired_states_from_trajectory(
    traj: &Trajectory,
    n: usize,
    t: f64,
    tension: Option<&TensionEstimate>,
    sys: &SystemConfig,
) -> Result<DesiredState> {
    if n >= traj.n_robots {
        return Err(Error::InvalidConfig(format!("robot {n} not in trajectory")));
    }
    let total = traj.total_duration();
    let outside = t < 0.0 || t > total;
    let t = t.clamp(0.0, total);
    let sample = traj.flat_sample(t, SAMPLE_ORDERS)?;
    let plan = flatness::robot_flat_state(&sample, n, sys)?;
    let rho = rho_from_angles(
        sample.channel(0, layout::pitch(n)),
        sample.channel(0, layout::azimuth(n)),
    );
    let planned_force = rho * sample.channel(0, layout::tension(n));
    let thrust = match tension {
        Some(est) => plan.acceleration + e3() * sys.gravity + est.force / sys.robot_mass,
        None => plan.thrust,
    };
    if thrust.norm() < 1e-6 {
        return Err(Error::DegenerateThrust(thrust.norm()));
    }
    let (z, z_dot) = flatness::body_z(&thrust, &plan.thrust_dot);
    let yaw = sample.jet(layout::yaw(n));
    let body_rate = flatness::body_rate(&z, &z_dot, yaw[0], yaw[1])?;
    // holding an end sample is a hover; snap there is not
    let body_accel = if outside {
        Vec3::zeros()
    } else {
        flatness::angular_accel(
            |tau| traj.flat_sample(tau, SAMPLE_ORDERS),
            (0.0, total),
            t,
            RATE_DIFF_STEP,
            n,
            sys,
        )?
    };
    Ok(DesiredState {
        position: plan.position,
        velocity: plan.velocity,
        acceleration: plan.acceleration,
        thrust,
        z_body: z,
        yaw: yaw[0],
        body_rate,
        body_accel,
        planned_force,
    })
}
