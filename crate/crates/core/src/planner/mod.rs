//! Spatio-temporal trajectory optimization: penalties with analytic
//! gradients, bound elimination, quadrature transcription and a
//! limited-memory quasi-Newton solve.

mod elimination;
mod feasibility;
pub mod gradcheck;
mod lbfgs;
mod penalty;
mod pipeline;
mod problem;
mod quadrature;
mod replan;
mod seed;
mod smoothing;

pub use elimination::{azimuth_band, duration_from_tau, tau_from_duration, Interval, TAU_LIMIT};
pub use feasibility::{check_feasibility, FeasibilityReport};
pub use lbfgs::{minimize, LbfgsResult, SolverConfig, StopReason};
pub use penalty::{sample_penalty, DistanceField, PenaltyContext, PenaltySet, SphereField, Terms};
pub use pipeline::{payload_length, plan, PlanOutcome};
pub use problem::{optimize, PlanReport, Problem};
pub use quadrature::transcribe;
pub use replan::{replan, switch_continuity, switch_state, ReplanOutcome, LOOKAHEAD};
pub use seed::Seed;
pub use smoothing::smooth_ramp;

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Bounds, safety distances, penalty weights and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Payload clearance [m].
    pub d_payload: f64,
    /// Robot clearance [m].
    pub d_robot: f64,
    /// Cable clearance [m].
    pub d_cable: f64,
    /// Minimum robot separation [m].
    pub d_reciprocal: f64,
    /// Sample points per cable.
    pub cable_samples: usize,
    pub v_max: f64,
    /// Mass-normalized thrust bounds [N/kg].
    pub f_min: f64,
    pub f_max: f64,
    /// Tilt bound [rad].
    pub tilt_max: f64,
    /// Body-rate bound [rad/s].
    pub rate_max: f64,
    /// Cable pitch upper bound [rad].
    pub pitch_max: f64,
    /// Cable tension bounds [N].
    pub tension_min: f64,
    pub tension_max: f64,
    pub lambda_time: f64,
    pub lambda_z: f64,
    pub lambda_obstacle: f64,
    pub lambda_reciprocal: f64,
    pub lambda_velocity: f64,
    pub lambda_thrust: f64,
    pub lambda_tilt: f64,
    pub lambda_rate: f64,
    pub lambda_coupling: f64,
    /// Smoothing width of the penalty ramp.
    pub mu: f64,
    /// Quadrature intervals per piece.
    pub kappa: usize,
    pub min_pieces: usize,
    pub max_pieces: usize,
    /// Map pitch and azimuth through bounded diffeomorphisms.
    pub cable_bands: bool,
    /// Optimize yaw junctions instead of fixing them at zero.
    pub free_yaw: bool,
    pub solver: SolverConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            d_payload: 0.2,
            d_robot: 0.3,
            d_cable: 0.2,
            d_reciprocal: 0.2,
            cable_samples: 7,
            v_max: 6.0,
            f_min: 2.0,
            f_max: 30.0,
            tilt_max: 1.05,
            rate_max: 2.7,
            pitch_max: 1.0,
            tension_min: 0.24,
            tension_max: 2.4,
            lambda_time: 2000.0,
            lambda_z: 0.3,
            lambda_obstacle: 1e4,
            lambda_reciprocal: 1e4,
            lambda_velocity: 1e3,
            lambda_thrust: 1e3,
            lambda_tilt: 1e3,
            lambda_rate: 1e3,
            lambda_coupling: 1e4,
            mu: 0.01,
            kappa: 16,
            min_pieces: 4,
            max_pieces: 12,
            cable_bands: true,
            free_yaw: false,
            solver: SolverConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.f_min > 0.0 && self.f_min < self.f_max) {
            return bad("need 0 < f_min < f_max");
        }
        if !(self.tension_min >= 0.0 && self.tension_min < self.tension_max) {
            return bad("need 0 <= tension_min < tension_max");
        }
        if !(self.tilt_max > 0.0 && self.tilt_max < std::f64::consts::FRAC_PI_2 + 0.2) {
            return bad("tilt_max out of range");
        }
        if !(self.pitch_max > 0.0 && self.pitch_max < std::f64::consts::FRAC_PI_2) {
            return bad("pitch_max must lie in (0, pi/2)");
        }
        if self.cable_samples < 1 || self.kappa < 2 {
            return bad("need cable_samples >= 1 and kappa >= 2");
        }
        if !(self.mu > 0.0) || !(self.v_max > 0.0) || !(self.rate_max > 0.0) {
            return bad("mu, v_max and rate_max must be positive");
        }
        if self.min_pieces < 1 || self.min_pieces > self.max_pieces {
            return bad("need 1 <= min_pieces <= max_pieces");
        }
        let weights = [
            self.lambda_time,
            self.lambda_z,
            self.lambda_obstacle,
            self.lambda_reciprocal,
            self.lambda_velocity,
            self.lambda_thrust,
            self.lambda_tilt,
            self.lambda_rate,
            self.lambda_coupling,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("penalty weights must be nonnegative");
        }
        Ok(())
    }

    pub fn pitch_interval(&self) -> Interval {
        Interval::new(0.0, self.pitch_max)
    }

    pub fn tension_interval(&self) -> Interval {
        Interval::new(self.tension_min, self.tension_max)
    }

    /// Reads a JSON or TOML file (by extension) of overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text)?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
