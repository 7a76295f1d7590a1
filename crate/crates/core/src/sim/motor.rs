use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlInput, SystemConfig, Vec3};

/// Rotor speed of an unloaded robot in hover [RPM].
pub const HOVER_RPM: f64 = 13_600.0;

/// Quadrotor in X configuration: four rotors with quadratic thrust, a
/// first-order speed lag and hard speed limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotorModel {
    /// Thrust coefficient [N/RPM^2]; `None` calibrates it so an unloaded
    /// robot hovers at [`HOVER_RPM`].
    pub thrust_coeff: Option<f64>,
    /// Yaw torque per newton of thrust [m].
    pub torque_coeff: f64,
    /// Rotor distance from the center [m].
    pub arm: f64,
    /// Speed lag time constant [s].
    pub time_constant: f64,
    pub rpm_min: f64,
    pub rpm_max: f64,
    /// Relative error of the thrust coefficient used by the onboard
    /// estimate. The estimate is exact at the unloaded hover point and off
    /// by this fraction in its slope away from it.
    pub thrust_bias: f64,
}

impl Default for MotorModel {
    fn default() -> Self {
        Self {
            thrust_coeff: None,
            torque_coeff: 0.016,
            arm: 0.07,
            time_constant: 0.02,
            rpm_min: 0.0,
            rpm_max: 24_000.0,
            thrust_bias: 0.0,
        }
    }
}

impl MotorModel {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.thrust_coeff {
            if !(k > 0.0) {
                return Err(Error::InvalidConfig(
                    "thrust coefficient must be positive".into(),
                ));
            }
        }
        if !(self.time_constant > 0.0) || !(self.arm > 0.0) || !(self.torque_coeff > 0.0) {
            return Err(Error::InvalidConfig(
                "motor lag, arm and torque coefficient must be positive".into(),
            ));
        }
        if !(self.rpm_min >= 0.0) || !(self.rpm_max > self.rpm_min) {
            return Err(Error::InvalidConfig(
                "motor speed limits must satisfy 0 <= min < max".into(),
            ));
        }
        if !(self.thrust_bias > -1.0) {
            return Err(Error::InvalidConfig("thrust bias must exceed -1".into()));
        }
        Ok(())
    }

    pub fn coeff(&self, sys: &SystemConfig) -> f64 {
        self.thrust_coeff
            .unwrap_or_else(|| sys.robot_mass * sys.gravity / (4.0 * HOVER_RPM * HOVER_RPM))
    }

    /// Maps rotor thrusts to (total thrust, body torque).
    fn mixing(&self) -> Matrix4<f64> {
        let d = self.arm / std::f64::consts::SQRT_2;
        let c = self.torque_coeff;
        // rotors at (+d,+d), (-d,+d), (-d,-d), (+d,-d); alternating spin
        Matrix4::new(
            1.0, 1.0, 1.0, 1.0, //
            d, d, -d, -d, //
            -d, d, d, -d, //
            c, -c, c, -c,
        )
    }
}

/// Rotor speeds of one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotors {
    pub model: MotorModel,
    k_f: f64,
    /// Per-rotor thrust at the calibration hover [N].
    t_cal: f64,
    mass: f64,
    mix: Matrix4<f64>,
    unmix: Matrix4<f64>,
    pub rpm: Vector4<f64>,
    pub rpm_cmd: Vector4<f64>,
}

impl Rotors {
    pub fn new(model: MotorModel, sys: &SystemConfig) -> Result<Self> {
        model.validate()?;
        let mix = model.mixing();
        let unmix = mix
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("mixer is singular".into()))?;
        let k_f = model.coeff(sys);
        Ok(Self {
            t_cal: sys.robot_mass * sys.gravity / 4.0,
            k_f,
            mass: sys.robot_mass,
            mix,
            unmix,
            rpm: Vector4::zeros(),
            rpm_cmd: Vector4::zeros(),
            model,
        })
    }

    pub fn thrust_coeff(&self) -> f64 {
        self.k_f
    }

    /// Speeds that realize `input` within the limits (per-rotor clipping).
    pub fn speeds_for(&self, input: &ControlInput) -> Vector4<f64> {
        let w = Vector4::new(
            input.thrust * self.mass,
            input.torque.x,
            input.torque.y,
            input.torque.z,
        );
        let t = self.unmix * w;
        let lo = self.model.rpm_min;
        let hi = self.model.rpm_max;
        t.map(|ti| (ti.max(0.0) / self.k_f).sqrt().clamp(lo, hi))
    }

    pub fn command(&mut self, input: &ControlInput) {
        self.rpm_cmd = self.speeds_for(input);
    }

    /// Sets the speeds to the steady state for `input`.
    pub fn settle(&mut self, input: &ControlInput) {
        self.command(input);
        self.rpm = self.rpm_cmd;
    }

    /// Advances the speed lag by `dt` (exact for a held command).
    pub fn advance(&mut self, dt: f64) {
        let a = 1.0 - (-dt / self.model.time_constant).exp();
        self.rpm += (self.rpm_cmd - self.rpm) * a;
    }

    fn wrench(&self, thrusts: Vector4<f64>) -> ControlInput {
        let w = self.mix * thrusts;
        ControlInput {
            thrust: w[0] / self.mass,
            torque: Vec3::new(w[1], w[2], w[3]),
        }
    }

    /// Thrust and torque the rotors actually produce.
    pub fn output(&self) -> ControlInput {
        self.wrench(self.rpm.map(|r| self.k_f * r * r))
    }

    /// Thrust and torque as the robot estimates them from its rotor speeds.
    pub fn estimate(&self) -> ControlInput {
        let b = self.model.thrust_bias;
        self.wrench(
            self.rpm
                .map(|r| self.t_cal + (1.0 + b) * (self.k_f * r * r - self.t_cal)),
        )
    }

    pub fn mean_rpm(&self) -> f64 {
        self.rpm.mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unloaded_hover_at_calibrated_speed() {
        let sys = SystemConfig::default();
        let mut r = Rotors::new(MotorModel::default(), &sys).unwrap();
        r.settle(&ControlInput::new(sys.gravity, Vec3::zeros()));
        for i in 0..4 {
            assert_relative_eq!(r.rpm[i], HOVER_RPM, epsilon = 1e-9);
        }
        // full speed on every rotor gives about three times hover thrust
        let f_max = 4.0 * r.thrust_coeff() * 24_000f64.powi(2) / sys.robot_mass;
        assert!(f_max > 30.0 && f_max < 31.0, "{f_max}");
    }

    #[test]
    fn mixer_round_trip() {
        let sys = SystemConfig::default();
        let mut r = Rotors::new(MotorModel::default(), &sys).unwrap();
        let u = ControlInput::new(12.0, Vec3::new(2e-3, -1e-3, 4e-4));
        r.settle(&u);
        let out = r.output();
        assert_relative_eq!(out.thrust, u.thrust, epsilon = 1e-9);
        assert_relative_eq!(out.torque, u.torque, epsilon = 1e-12);
        assert_eq!(r.estimate(), out);
    }

    #[test]
    fn speeds_are_clipped() {
        let sys = SystemConfig::default();
        let r = Rotors::new(MotorModel::default(), &sys).unwrap();
        let s = r.speeds_for(&ControlInput::new(200.0, Vec3::zeros()));
        assert!(s.iter().all(|&v| v == 24_000.0));
        let s = r.speeds_for(&ControlInput::new(0.0, Vec3::new(0.0, 0.0, 0.0)));
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lag_reaches_63_percent_after_one_time_constant() {
        let sys = SystemConfig::default();
        let mut r = Rotors::new(MotorModel::default(), &sys).unwrap();
        r.rpm_cmd = Vector4::repeat(10_000.0);
        for _ in 0..20 {
            r.advance(1e-3);
        }
        assert_relative_eq!(r.rpm[0], 10_000.0 * (1.0 - (-1.0f64).exp()), epsilon = 1e-6);
    }

    #[test]
    fn biased_estimate_is_exact_at_calibration() {
        let sys = SystemConfig::default();
        let model = MotorModel {
            thrust_bias: 0.05,
            ..MotorModel::default()
        };
        let mut r = Rotors::new(model, &sys).unwrap();
        r.settle(&ControlInput::new(sys.gravity, Vec3::zeros()));
        assert_relative_eq!(r.estimate().thrust, sys.gravity, epsilon = 1e-9);
        r.settle(&ControlInput::new(sys.gravity + 2.0, Vec3::zeros()));
        assert_relative_eq!(r.estimate().thrust, sys.gravity + 2.1, epsilon = 1e-9);
    }
}
