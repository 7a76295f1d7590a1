use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::elimination::{azimuth_band, duration_from_tau, tau_from_duration, Interval};
use super::lbfgs::{minimize, StopReason};
use super::penalty::{sample_penalty, DistanceField, PenaltyContext, PenaltySet, Terms};
use super::quadrature::transcribe;
use super::seed::Seed;
use super::PlannerConfig;
use crate::error::{Error, Result};
use crate::flatness::layout;
use crate::model::SystemConfig;
use crate::traj::{channel_weights, energy_cost, Minco, Trajectory, DEFAULT_S};

#[derive(Debug, Clone, Copy)]
struct FreeEntry {
    junction: usize,
    channel: usize,
    map: Option<Interval>,
}

/// Unconstrained reformulation over auxiliary junction variables and log
/// durations.
pub struct Problem<'a> {
    pub cfg: &'a PlannerConfig,
    pub sys: &'a SystemConfig,
    pub field: Option<&'a dyn DistanceField>,
    pub set: PenaltySet,
    /// Include the control-effort and time cost.
    pub energy: bool,
    minco: Minco,
    base: Vec<Vec<f64>>,
    base_durations: Vec<f64>,
    spatial: Vec<FreeEntry>,
    temporal: Vec<usize>,
    weights: Vec<f64>,
    n_robots: usize,
}

impl<'a> Problem<'a> {
    pub fn new(
        seed: &Seed,
        sys: &'a SystemConfig,
        cfg: &'a PlannerConfig,
        field: Option<&'a dyn DistanceField>,
    ) -> Result<Self> {
        cfg.validate()?;
        sys.validate()?;
        let n_robots = seed.n_robots;
        if n_robots != sys.n_robots {
            return Err(Error::InvalidConfig(
                "seed and system disagree on robot count".into(),
            ));
        }
        let dims = layout::channels(n_robots);
        let pieces = seed.pieces();
        if pieces == 0
            || seed.junctions.len() + 1 != pieces
            || seed.junctions.iter().any(|w| w.len() != dims)
        {
            return Err(Error::SeedInfeasible(
                "junction rows do not match the piece count".into(),
            ));
        }
        if seed.durations.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::SeedInfeasible("durations must be positive".into()));
        }
        let mut minco = Minco::new(DEFAULT_S, dims);
        minco.set_boundary(&seed.head, &seed.tail)?;

        let mut spatial = Vec::new();
        for i in 0..pieces - 1 {
            if !(seed.freeze_payload || seed.pinned.contains(&i)) {
                for ch in 0..3 {
                    spatial.push(FreeEntry {
                        junction: i,
                        channel: ch,
                        map: None,
                    });
                }
            }
            for n in 0..n_robots {
                let (pitch, azimuth) = if cfg.cable_bands {
                    (Some(cfg.pitch_interval()), Some(azimuth_band(n, n_robots)))
                } else {
                    (None, None)
                };
                spatial.push(FreeEntry {
                    junction: i,
                    channel: layout::pitch(n),
                    map: pitch,
                });
                spatial.push(FreeEntry {
                    junction: i,
                    channel: layout::azimuth(n),
                    map: azimuth,
                });
                spatial.push(FreeEntry {
                    junction: i,
                    channel: layout::tension(n),
                    map: Some(cfg.tension_interval()),
                });
                if cfg.free_yaw {
                    spatial.push(FreeEntry {
                        junction: i,
                        channel: layout::yaw(n),
                        map: None,
                    });
                }
            }
        }
        let temporal = if seed.freeze_durations {
            Vec::new()
        } else {
            (0..pieces).collect()
        };
        Ok(Self {
            cfg,
            sys,
            field,
            set: PenaltySet::all(),
            energy: true,
            minco,
            base: seed.junctions.clone(),
            base_durations: seed.durations.clone(),
            spatial,
            temporal,
            weights: channel_weights(n_robots, cfg.lambda_z),
            n_robots,
        })
    }

    pub fn dim(&self) -> usize {
        self.spatial.len() + self.temporal.len()
    }

    pub fn pieces(&self) -> usize {
        self.base_durations.len()
    }

    /// Auxiliary point reproducing the seed (bounded channels pulled inside).
    pub fn initial_point(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .spatial
            .iter()
            .map(|e| {
                let v = self.base[e.junction][e.channel];
                e.map.map_or(v, |iv| iv.inverse(v))
            })
            .collect();
        x.extend(
            self.temporal
                .iter()
                .map(|&m| tau_from_duration(self.base_durations[m])),
        );
        x
    }

    /// Junction values and durations encoded by `x`.
    pub fn decode(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut w = self.base.clone();
        for (e, &xi) in self.spatial.iter().zip(x) {
            w[e.junction][e.channel] = e.map.map_or(xi, |iv| iv.forward(xi).0);
        }
        let mut t = self.base_durations.clone();
        for (&m, &xi) in self.temporal.iter().zip(&x[self.spatial.len()..]) {
            t[m] = duration_from_tau(xi).0;
        }
        (w, t)
    }

    pub fn trajectory(&mut self, x: &[f64]) -> Result<Trajectory> {
        let (w, t) = self.decode(x);
        self.minco.generate(&w, &t)?;
        Ok(self.minco.trajectory(self.n_robots))
    }

    /// Cost terms at `x`; the gradient over `x` is written into `grad`.
    pub fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<Terms> {
        assert_eq!(x.len(), self.dim());
        assert_eq!(grad.len(), self.dim());
        let traj = self.trajectory(x)?;
        let mut gc = vec![0.0; traj.coeffs.len()];
        let mut gt = vec![0.0; traj.durations.len()];
        let mut terms = Terms::default();
        if self.energy {
            let total = energy_cost(&traj, &self.weights, self.cfg.lambda_time, &mut gc, &mut gt);
            terms.time = self.cfg.lambda_time * traj.total_duration();
            terms.energy = total - terms.time;
        }
        if self.set != PenaltySet::none() {
            let ctx = PenaltyContext {
                cfg: self.cfg,
                sys: self.sys,
                field: self.field,
                set: self.set,
            };
            terms += transcribe(
                &traj,
                self.cfg.kappa,
                |z, g| sample_penalty(z, &ctx, g),
                &mut gc,
                &mut gt,
            );
        }
        let (gw, gt) = self.minco.backprop(&gc, &gt);
        for (k, e) in self.spatial.iter().enumerate() {
            let g = gw[e.junction][e.channel];
            grad[k] = match e.map {
                Some(iv) => g * iv.forward(x[k]).1,
                None => g,
            };
        }
        let off = self.spatial.len();
        for (k, &m) in self.temporal.iter().enumerate() {
            grad[off + k] = gt[m] * duration_from_tau(x[off + k]).1;
        }
        Ok(terms)
    }

    /// Scalar objective for the solver: infinite where the trajectory cannot
    /// be built.
    pub fn cost(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self.evaluate(x, grad) {
            Ok(t) if t.total().is_finite() => t.total(),
            _ => f64::INFINITY,
        }
    }
}

/// Outcome summary of one optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub terms: Terms,
    pub total_cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop_reason: StopReason,
    pub grad_inf: f64,
    pub wall_time_s: f64,
    pub pieces: usize,
    pub duration: f64,
}

/// Optimizes the seed and returns the trajectory with a report.
pub fn optimize(
    seed: &Seed,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
    field: Option<&dyn DistanceField>,
) -> Result<(Trajectory, PlanReport)> {
    let started = Instant::now();
    let mut problem = Problem::new(seed, sys, cfg, field)?;
    let x0 = problem.initial_point();
    let traj0 = problem.trajectory(&x0)?;
    super::feasibility::check_evaluable(&traj0, sys, cfg.kappa)?;
    let mut g = vec![0.0; x0.len()];
    let initial_cost = problem.cost(&x0, &mut g);
    if !initial_cost.is_finite() {
        return Err(Error::SeedInfeasible(
            "cost is not finite at the seed".into(),
        ));
    }
    let result = minimize(|x, g| problem.cost(x, g), &x0, &cfg.solver);
    let terms = problem.evaluate(&result.x, &mut g)?;
    let traj = problem.trajectory(&result.x)?;
    if result.reason == StopReason::LineSearchFailure {
        log::warn!(
            "line search failed after {} iterations; returning best iterate",
            result.iterations
        );
    }
    let report = PlanReport {
        terms,
        total_cost: terms.total(),
        initial_cost,
        iterations: result.iterations,
        evaluations: result.evaluations,
        stop_reason: result.reason,
        grad_inf: result.grad_inf,
        wall_time_s: started.elapsed().as_secs_f64(),
        pieces: traj.pieces(),
        duration: traj.total_duration(),
    };
    Ok((traj, report))
}
