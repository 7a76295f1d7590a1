use nalgebra::UnitQuaternion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::RobotMeasurement;
use crate::error::{Error, Result};
use crate::model::{ControlInput, RobotState, Vec3};

/// Standard deviations of the Gaussian measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// [m]
    pub position: f64,
    /// [m/s]
    pub velocity: f64,
    /// Small-angle attitude perturbation [rad].
    pub attitude: f64,
    /// [rad/s]
    pub body_rate: f64,
    /// [m/s^2]
    pub accel: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            position: 0.002,
            velocity: 0.02,
            attitude: 0.0,
            body_rate: 0.01,
            accel: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            position: 0.0,
            velocity: 0.0,
            attitude: 0.0,
            body_rate: 0.0,
            accel: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.position,
            self.velocity,
            self.attitude,
            self.body_rate,
            self.accel,
        ];
        if all.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "noise levels must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Seeded measurement source for one robot.
#[derive(Debug, Clone)]
pub struct Sensors {
    pub noise: NoiseConfig,
    rng: ChaCha8Rng,
    unit: Normal<f64>,
}

impl Sensors {
    /// Each robot draws from its own stream, so results do not depend on
    /// the order robots are polled.
    pub fn new(noise: NoiseConfig, seed: u64, robot: usize) -> Result<Self> {
        noise.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(robot as u64 + 1);
        Ok(Self {
            noise,
            rng,
            unit: Normal::new(0.0, 1.0).expect("unit normal"),
        })
    }

    fn vec(&mut self, sigma: f64) -> Vec3 {
        if sigma == 0.0 {
            return Vec3::zeros();
        }
        Vec3::new(
            self.unit.sample(&mut self.rng),
            self.unit.sample(&mut self.rng),
            self.unit.sample(&mut self.rng),
        ) * sigma
    }

    /// Measurement of `truth` with world acceleration `accel` and the rotor
    /// based thrust/torque estimate.
    pub fn measure(
        &mut self,
        truth: &RobotState,
        accel: &Vec3,
        rotor_estimate: &ControlInput,
    ) -> RobotMeasurement {
        let dp = self.vec(self.noise.position);
        let dv = self.vec(self.noise.velocity);
        let dq = self.vec(self.noise.attitude);
        let dw = self.vec(self.noise.body_rate);
        let da = self.vec(self.noise.accel);
        let attitude = if dq == Vec3::zeros() {
            truth.attitude
        } else {
            truth.attitude * UnitQuaternion::from_scaled_axis(dq)
        };
        RobotMeasurement {
            state: RobotState {
                position: truth.position + dp,
                velocity: truth.velocity + dv,
                attitude,
                body_rate: truth.body_rate + dw,
            },
            accel: accel + da,
            thrust: rotor_estimate.thrust,
            torque: rotor_estimate.torque,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> RobotState {
        RobotState {
            position: Vec3::new(1.0, 2.0, 3.0),
            velocity: Vec3::new(0.1, 0.0, -0.2),
            attitude: UnitQuaternion::from_euler_angles(0.1, -0.2, 0.3),
            body_rate: Vec3::new(0.5, 0.0, 0.1),
        }
    }

    #[test]
    fn zero_noise_is_truth() {
        let mut s = Sensors::new(NoiseConfig::none(), 3, 0).unwrap();
        let u = ControlInput::new(11.0, Vec3::new(1e-3, 0.0, 0.0));
        let a = Vec3::new(0.0, 1.0, 0.0);
        let m = s.measure(&truth(), &a, &u);
        assert_eq!(m.state, truth());
        assert_eq!(m.accel, a);
        assert_eq!(m.thrust, 11.0);
        assert_eq!(m.torque, u.torque);
    }

    #[test]
    fn seeded_streams_repeat_and_differ_by_robot() {
        let u = ControlInput::new(11.0, Vec3::zeros());
        let draw = |seed, robot| {
            let mut s = Sensors::new(NoiseConfig::default(), seed, robot).unwrap();
            (0..20)
                .map(|_| s.measure(&truth(), &Vec3::zeros(), &u))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 0), draw(7, 0));
        assert_ne!(draw(7, 0), draw(7, 1));
        assert_ne!(draw(7, 0), draw(8, 0));
    }

    #[test]
    fn noise_level_matches_sigma() {
        let mut s = Sensors::new(NoiseConfig::default(), 11, 2).unwrap();
        let u = ControlInput::new(11.0, Vec3::zeros());
        let n = 20_000;
        let mut sq = 0.0;
        for _ in 0..n {
            let m = s.measure(&truth(), &Vec3::zeros(), &u);
            sq += (m.state.position - truth().position).norm_squared();
        }
        let sigma = (sq / (3.0 * n as f64)).sqrt();
        assert!((sigma / 0.002 - 1.0).abs() < 0.03, "{sigma}");
    }
}
