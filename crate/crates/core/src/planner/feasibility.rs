use serde::{Deserialize, Serialize};

use super::elimination::azimuth_band;
use super::penalty::DistanceField;
use super::PlannerConfig;
use crate::error::{Error, Result};
use crate::flatness::{body_rate, body_z, layout, rho_derivatives};
use crate::model::{e3, SystemConfig, Vec3};
use crate::traj::Trajectory;

/// Extremes of the constrained quantities over a dense resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub samples: usize,
    pub max_speed: f64,
    pub min_thrust: f64,
    pub max_thrust: f64,
    pub max_tilt: f64,
    pub max_rate: f64,
    pub min_pitch: f64,
    pub max_pitch: f64,
    pub min_tension: f64,
    pub max_tension: f64,
    /// Largest payload Newton-equation residual [m/s^2].
    pub max_coupling: f64,
    pub min_robot_distance: f64,
    /// Smallest distance-field value over payload, robots and cable points.
    pub min_clearance: Option<f64>,
    /// Junction robot channels outside their azimuth band.
    pub band_violations: usize,
}

impl FeasibilityReport {
    /// Dynamic bounds hold within 1% (tilt within 0.01 rad), tensions lie in
    /// the open box and the coupling residual is below 0.05 m/s^2.
    pub fn within_margins(&self, cfg: &PlannerConfig) -> bool {
        self.max_speed <= cfg.v_max * 1.01
            && self.min_thrust >= cfg.f_min * 0.99
            && self.max_thrust <= cfg.f_max * 1.01
            && self.max_tilt <= cfg.tilt_max + 0.01
            && self.max_rate <= cfg.rate_max * 1.01
            && self.min_tension > cfg.tension_min
            && self.max_tension < cfg.tension_max
            && self.max_coupling < 0.05
    }

    pub fn collision_free(&self) -> bool {
        self.min_clearance.is_none_or(|c| c > 0.0)
    }

    pub fn success(&self, cfg: &PlannerConfig) -> bool {
        self.within_margins(cfg) && self.collision_free()
    }
}

/// Resamples every piece at `per_piece + 1` points and records extremes.
pub fn check_feasibility(
    traj: &Trajectory,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
    field: Option<&dyn DistanceField>,
    per_piece: usize,
) -> FeasibilityReport {
    let n_robots = traj.n_robots;
    let l = sys.cable_length;
    let m = sys.robot_mass;
    let mut r = FeasibilityReport {
        samples: 0,
        max_speed: 0.0,
        min_thrust: f64::INFINITY,
        max_thrust: 0.0,
        max_tilt: 0.0,
        max_rate: 0.0,
        min_pitch: f64::INFINITY,
        max_pitch: f64::NEG_INFINITY,
        min_tension: f64::INFINITY,
        max_tension: f64::NEG_INFINITY,
        max_coupling: 0.0,
        min_robot_distance: f64::INFINITY,
        min_clearance: field.map(|_| f64::INFINITY),
        band_violations: 0,
    };
    let clear = |x: &Vec3, r: &mut FeasibilityReport| {
        if let (Some(f), Some(c)) = (field, r.min_clearance.as_mut()) {
            *c = c.min(f.query(x).distance);
        }
    };
    for piece in 0..traj.pieces() {
        let t_m = traj.durations[piece];
        for k in 0..=per_piece {
            let z = traj.piece_sample(piece, t_m * k as f64 / per_piece as f64, 4);
            r.samples += 1;
            let p = [z.payload(0), z.payload(1), z.payload(2), z.payload(3)];
            clear(&p[0], &mut r);
            let mut positions = Vec::with_capacity(n_robots);
            let mut residual = p[2] + e3() * sys.gravity;
            for n in 0..n_robots {
                let theta = z.jet(layout::pitch(n));
                let phi = z.jet(layout::azimuth(n));
                let ften = z.jet(layout::tension(n));
                let yaw = z.jet(layout::yaw(n));
                let rho = rho_derivatives(&theta, &phi);
                r.min_pitch = r.min_pitch.min(theta[0]);
                r.max_pitch = r.max_pitch.max(theta[0]);
                r.min_tension = r.min_tension.min(ften[0]);
                r.max_tension = r.max_tension.max(ften[0]);
                residual -= rho[0] * (ften[0] / sys.payload_mass);
                let pos = p[0] + rho[0] * l;
                clear(&pos, &mut r);
                for c in 1..=cfg.cable_samples {
                    clear(
                        &(p[0] + rho[0] * (l * c as f64 / (cfg.cable_samples + 1) as f64)),
                        &mut r,
                    );
                }
                positions.push(pos);
                r.max_speed = r.max_speed.max((p[1] + rho[1] * l).norm());
                let f = p[2] + rho[2] * l + e3() * sys.gravity + rho[0] * (ften[0] / m);
                let f_dot = p[3] + rho[3] * l + (rho[0] * ften[1] + rho[1] * ften[0]) / m;
                let fn_ = f.norm();
                r.min_thrust = r.min_thrust.min(fn_);
                r.max_thrust = r.max_thrust.max(fn_);
                if fn_ > 1e-9 {
                    let (zb, zd) = body_z(&f, &f_dot);
                    r.max_tilt = r.max_tilt.max(zb.z.clamp(-1.0, 1.0).acos());
                    let w = body_rate(&zb, &zd, yaw[0], yaw[1]).map_or(f64::INFINITY, |w| w.norm());
                    r.max_rate = r.max_rate.max(w);
                } else {
                    r.max_tilt = f64::INFINITY;
                    r.max_rate = f64::INFINITY;
                }
            }
            r.max_coupling = r.max_coupling.max(residual.norm());
            for i in 0..n_robots {
                for j in i + 1..n_robots {
                    r.min_robot_distance = r
                        .min_robot_distance
                        .min((positions[i] - positions[j]).norm());
                }
            }
        }
    }
    // junction azimuths against their bands
    let starts = traj.start_times();
    for &t in starts.iter().skip(1) {
        if let Ok(z) = traj.flat_sample(t, 1) {
            for n in 0..n_robots {
                let band = azimuth_band(n, n_robots);
                if !band.contains_strictly(z.channel(0, layout::azimuth(n))) {
                    r.band_violations += 1;
                }
            }
        }
    }
    r
}

/// Fails when the flatness maps cannot be evaluated at some quadrature point.
pub(crate) fn check_evaluable(traj: &Trajectory, sys: &SystemConfig, kappa: usize) -> Result<()> {
    let l = sys.cable_length;
    for piece in 0..traj.pieces() {
        for k in 0..=kappa {
            let z = traj.piece_sample(piece, traj.durations[piece] * k as f64 / kappa as f64, 3);
            for n in 0..traj.n_robots {
                let rho = rho_derivatives(&z.jet(layout::pitch(n)), &z.jet(layout::azimuth(n)));
                let f = z.payload(2)
                    + rho[2] * l
                    + e3() * sys.gravity
                    + rho[0] * (z.channel(0, layout::tension(n)) / sys.robot_mass);
                if f.norm() < 1e-6 {
                    return Err(Error::SeedInfeasible(format!(
                        "degenerate thrust on robot {n} in piece {piece}"
                    )));
                }
                if f.z / f.norm() <= -1.0 + 1e-6 {
                    return Err(Error::SeedInfeasible(format!(
                        "inverted thrust on robot {n} in piece {piece}"
                    )));
                }
            }
        }
    }
    Ok(())
}
