//! Physical constants, rigid-body states and the coupled payload/robot
//! dynamics of the taut-cable transport system.

mod world;

pub use world::{hover_world, step_world, Plant, WorldState};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// World z-axis.
pub fn e3() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// Physical constants of the transport system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub n_robots: usize,
    /// Payload mass [kg].
    pub payload_mass: f64,
    /// Mass of each robot [kg].
    pub robot_mass: f64,
    /// Robot inertia [kg m^2], row-major 3x3.
    pub inertia: [[f64; 3]; 3],
    /// Cable length [m].
    pub cable_length: f64,
    /// Gravitational acceleration [m/s^2].
    pub gravity: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_robots: 3,
            payload_mass: 0.2,
            robot_mass: 0.32,
            inertia: [
                [4.463e-4, 0.0, 0.0],
                [0.0, 4.725e-4, 0.0],
                [0.0, 0.0, 5.340e-4],
            ],
            cable_length: 1.2,
            gravity: 9.81,
        }
    }
}

impl SystemConfig {
    pub fn with_robots(n_robots: usize) -> Self {
        Self {
            n_robots,
            ..Self::default()
        }
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        let j = &self.inertia;
        Matrix3::new(
            j[0][0], j[0][1], j[0][2], j[1][0], j[1][1], j[1][2], j[2][0], j[2][1], j[2][2],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_robots < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_robots must be >= 2, got {}",
                self.n_robots
            )));
        }
        for (name, v) in [
            ("payload_mass", self.payload_mass),
            ("robot_mass", self.robot_mass),
            ("cable_length", self.cable_length),
            ("gravity", self.gravity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        let j = self.inertia_matrix();
        if (j - j.transpose()).abs().max() > 1e-12 {
            return Err(Error::InvalidConfig("inertia must be symmetric".into()));
        }
        if j.cholesky().is_none() {
            return Err(Error::InvalidConfig(
                "inertia must be positive definite".into(),
            ));
        }
        Ok(())
    }

    /// Parses a key/value config file. Unknown keys are rejected.
    ///
    /// ```text
    /// n_robots = 3
    /// payload_mass = 0.2
    /// robot_mass = 0.32
    /// cable_length = 1.2
    /// gravity = 9.81
    /// inertia = [4.463e-4, 4.725e-4, 5.340e-4]   # diagonal, or 9 values row-major
    /// ```
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let mut cfg = Self::default();
        for (key, value) in &table {
            let num = |v: &toml::Value| -> Result<f64> {
                v.as_float()
                    .or_else(|| v.as_integer().map(|i| i as f64))
                    .ok_or_else(|| Error::InvalidConfig(format!("{key}: expected a number")))
            };
            match key.as_str() {
                "n_robots" => {
                    cfg.n_robots = value.as_integer().filter(|&n| n > 0).ok_or_else(|| {
                        Error::InvalidConfig("n_robots: expected a positive integer".into())
                    })? as usize
                }
                "payload_mass" => cfg.payload_mass = num(value)?,
                "robot_mass" => cfg.robot_mass = num(value)?,
                "cable_length" => cfg.cable_length = num(value)?,
                "gravity" => cfg.gravity = num(value)?,
                "inertia" => {
                    let arr = value
                        .as_array()
                        .ok_or_else(|| Error::InvalidConfig("inertia: expected an array".into()))?;
                    let vals = arr.iter().map(num).collect::<Result<Vec<_>>>()?;
                    cfg.inertia = match vals.len() {
                        3 => [
                            [vals[0], 0.0, 0.0],
                            [0.0, vals[1], 0.0],
                            [0.0, 0.0, vals[2]],
                        ],
                        9 => [
                            [vals[0], vals[1], vals[2]],
                            [vals[3], vals[4], vals[5]],
                            [vals[6], vals[7], vals[8]],
                        ],
                        n => {
                            return Err(Error::InvalidConfig(format!(
                                "inertia: expected 3 or 9 values, got {n}"
                            )))
                        }
                    };
                }
                other => {
                    return Err(Error::InvalidConfig(format!("unknown key `{other}`")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    /// Tension per cable in static hover when all cables share pitch `theta`.
    pub fn hover_tension(&self, theta: f64) -> f64 {
        self.payload_mass * self.gravity / (self.n_robots as f64 * theta.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadState {
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: UnitQuaternion<f64>,
    /// Body-frame angular velocity [rad/s].
    pub body_rate: Vec3,
}

/// Cable described by pitch/azimuth of the payload-to-robot direction and
/// its tension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableState {
    pub pitch: f64,
    pub azimuth: f64,
    pub tension: f64,
}

impl CableState {
    pub fn new(pitch: f64, azimuth: f64, tension: f64) -> Self {
        Self {
            pitch,
            azimuth,
            tension,
        }
    }

    /// Builds the cable state from a (not necessarily unit) direction.
    pub fn from_direction(dir: &Vec3, tension: f64) -> Self {
        let u = dir.normalize();
        Self {
            pitch: u.z.clamp(-1.0, 1.0).asin(),
            azimuth: u.y.atan2(u.x),
            tension,
        }
    }

    pub fn direction(&self) -> Vec3 {
        rho_from_angles(self.pitch, self.azimuth)
    }
}

/// Mass-normalized collective thrust and body torque of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Mass-normalized thrust [N/kg].
    pub thrust: f64,
    /// Body torque [N m].
    pub torque: Vec3,
}

impl ControlInput {
    pub fn new(thrust: f64, torque: Vec3) -> Self {
        Self {
            thrust: thrust.max(0.0),
            torque,
        }
    }
}

/// Unit cable direction from pitch and azimuth.
pub fn rho_from_angles(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(ct * cp, ct * sp, st)
}

/// Robot position implied by the payload position and its cable direction.
pub fn robot_position(payload: &Vec3, rho: &Vec3, cable_length: f64) -> Vec3 {
    payload + rho * cable_length
}

/// Payload acceleration under gravity and the cable tensions.
pub fn payload_accel(cables: &[CableState], cfg: &SystemConfig) -> Vec3 {
    let pull = cables
        .iter()
        .fold(Vec3::zeros(), |acc, c| acc + c.direction() * c.tension);
    pull / cfg.payload_mass - e3() * cfg.gravity
}

/// Robot translational acceleration. The cable pulls the robot towards the
/// payload, i.e. along `-rho`.
pub fn robot_accel(
    state: &RobotState,
    input: &ControlInput,
    cable: &CableState,
    cfg: &SystemConfig,
) -> Vec3 {
    let z_body = state.attitude * e3();
    z_body * input.thrust
        - e3() * cfg.gravity
        - cable.direction() * (cable.tension / cfg.robot_mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rho_axis_and_pole() {
        assert_relative_eq!(rho_from_angles(0.0, 0.0), Vec3::x(), epsilon = 1e-15);
        for phi in [0.0, 1.0, -2.5, 3.0] {
            assert_relative_eq!(rho_from_angles(FRAC_PI_2, phi), Vec3::z(), epsilon = 1e-15);
        }
    }

    #[test]
    fn rho_matches_rotation_composition() {
        // second route: rotate e1 by -theta about y, then by phi about z
        let (theta, phi) = (0.3, 1.1);
        let r = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), phi)
            * UnitQuaternion::from_axis_angle(&Vec3::y_axis(), -theta);
        assert_relative_eq!(rho_from_angles(theta, phi), r * Vec3::x(), epsilon = 1e-14);
        assert_relative_eq!(
            rho_from_angles(theta, phi),
            Vec3::new(
                0.3f64.cos() * 1.1f64.cos(),
                0.3f64.cos() * 1.1f64.sin(),
                0.3f64.sin()
            ),
            epsilon = 1e-15
        );
    }

    #[test]
    fn robot_position_examples() {
        let p = robot_position(&Vec3::zeros(), &Vec3::z(), 1.2);
        assert_relative_eq!(p, Vec3::new(0.0, 0.0, 1.2));
        let q = Vec3::new(0.4, -2.0, 7.0);
        assert_eq!(robot_position(&q, &Vec3::x(), 0.0), q);
    }

    #[test]
    fn payload_equilibrium_and_free_fall() {
        let cfg = SystemConfig::default();
        let f = cfg.payload_mass * cfg.gravity / 3.0;
        let vertical = vec![CableState::new(FRAC_PI_2, 0.0, f); 3];
        assert_relative_eq!(
            payload_accel(&vertical, &cfg),
            Vec3::zeros(),
            epsilon = 1e-14
        );
        let slack = vec![CableState::new(0.7, 0.1, 0.0); 3];
        assert_relative_eq!(
            payload_accel(&slack, &cfg),
            Vec3::new(0.0, 0.0, -cfg.gravity)
        );
    }

    #[test]
    fn payload_asymmetric_tensions() {
        let cfg = SystemConfig::default();
        let cables = [
            CableState::new(0.9, 0.0, 0.5),
            CableState::new(1.0, 2.0, 0.8),
            CableState::new(0.7, 4.0, 0.3),
        ];
        let mut sum = [0.0; 3];
        for c in &cables {
            let d = [
                c.pitch.cos() * c.azimuth.cos(),
                c.pitch.cos() * c.azimuth.sin(),
                c.pitch.sin(),
            ];
            for k in 0..3 {
                sum[k] += c.tension * d[k];
            }
        }
        let expect = Vec3::new(sum[0] / 0.2, sum[1] / 0.2, sum[2] / 0.2 - 9.81);
        assert_relative_eq!(payload_accel(&cables, &cfg), expect, epsilon = 1e-12);
    }

    #[test]
    fn robot_hover_thrust_requirement() {
        let cfg = SystemConfig::default();
        let tension = 0.654;
        let cable = CableState::new(FRAC_PI_2, 0.0, tension);
        let thrust = cfg.gravity + tension / cfg.robot_mass;
        assert!((thrust - 11.854).abs() < 5e-4);
        let state = RobotState {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            attitude: UnitQuaternion::identity(),
            body_rate: Vec3::zeros(),
        };
        let a = robot_accel(
            &state,
            &ControlInput::new(thrust, Vec3::zeros()),
            &cable,
            &cfg,
        );
        assert_relative_eq!(a, Vec3::zeros(), epsilon = 1e-12);
        let free = CableState::new(FRAC_PI_2, 0.0, 0.0);
        let a = robot_accel(
            &state,
            &ControlInput::new(cfg.gravity, Vec3::zeros()),
            &free,
            &cfg,
        );
        assert_relative_eq!(a, Vec3::zeros(), epsilon = 1e-14);
    }

    #[test]
    fn kv_config_roundtrip_and_errors() {
        let cfg = SystemConfig::from_kv_str(
            "n_robots = 4\npayload_mass = 0.15\ncable_length = 1\ninertia = [1e-3, 1e-3, 2e-3]\n",
        )
        .unwrap();
        assert_eq!(cfg.n_robots, 4);
        assert_eq!(cfg.cable_length, 1.0);
        assert_eq!(cfg.inertia[2][2], 2e-3);
        assert!(SystemConfig::from_kv_str("n_robots = 1").is_err());
        assert!(SystemConfig::from_kv_str("payload_mass = -1.0").is_err());
        assert!(SystemConfig::from_kv_str("bogus = 3").is_err());
        assert!(SystemConfig::from_kv_str(
            "inertia = [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]"
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn rho_is_unit(theta in -10.0f64..10.0, phi in -10.0f64..10.0) {
            prop_assert!((rho_from_angles(theta, phi).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn robot_on_cable_sphere(
            px in -50.0f64..50.0, py in -50.0f64..50.0, pz in -50.0f64..50.0,
            theta in -3.2f64..3.2, phi in -3.2f64..3.2, l in 0.01f64..5.0,
        ) {
            let p = Vec3::new(px, py, pz);
            let pn = robot_position(&p, &rho_from_angles(theta, phi), l);
            prop_assert!(((pn - p).norm() - l).abs() < 1e-12 * (1.0 + p.norm()));
        }

        #[test]
        fn accelerations_linear_in_tension(
            f1 in 0.0f64..3.0, f2 in 0.0f64..3.0, theta in 0.1f64..1.5, phi in -3.0f64..3.0,
        ) {
            let cfg = SystemConfig::default();
            let g = Vec3::new(0.0, 0.0, -cfg.gravity);
            let a = |f: f64| payload_accel(&[CableState::new(theta, phi, f)], &cfg) - g;
            let sum = a(f1 + f2);
            let sup = a(f1) + a(f2);
            prop_assert!((sum - sup).norm() < 1e-12);
            prop_assert!((a(1.0) - rho_from_angles(theta, phi) / cfg.payload_mass).norm() < 1e-12);

            let state = RobotState {
                position: Vec3::zeros(),
                velocity: Vec3::zeros(),
                attitude: UnitQuaternion::from_euler_angles(0.1, -0.2, 0.3),
                body_rate: Vec3::zeros(),
            };
            let u = ControlInput::new(10.0, Vec3::zeros());
            let r = |f: f64| robot_accel(&state, &u, &CableState::new(theta, phi, f), &cfg);
            let lin = (r(f1 + f2) - r(0.0)) - ((r(f1) - r(0.0)) + (r(f2) - r(0.0)));
            prop_assert!(lin.norm() < 1e-11);
            prop_assert!(((r(1.0) - r(0.0)) + rho_from_angles(theta, phi) / cfg.robot_mass).norm() < 1e-12);
        }
    }
}
