//! Finite-difference verification of every cost term through the full
//! pipeline (elimination, trajectory build, quadrature, pullback).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::elimination::azimuth_band;
use super::penalty::{PenaltySet, SphereField};
use super::problem::Problem;
use super::seed::Seed;
use super::PlannerConfig;
use crate::error::Result;
use crate::flatness::layout;
use crate::model::{SystemConfig, Vec3};

pub const TERMS: [&str; 8] = [
    "energy",
    "obstacle",
    "reciprocal",
    "velocity",
    "thrust",
    "tilt",
    "body_rate",
    "coupling",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCheck {
    pub term: String,
    pub instances: usize,
    /// Instances where the term had a nonzero gradient.
    pub active: usize,
    pub worst_relative_error: f64,
}

/// Random instance with bounds tightened so every term is active somewhere.
pub struct Instance {
    pub sys: SystemConfig,
    pub cfg: PlannerConfig,
    pub seed: Seed,
    pub field: SphereField,
    pub x: Vec<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_robots = rng.gen_range(2..=4);
    let sys = SystemConfig::with_robots(n_robots);
    let cfg = PlannerConfig {
        d_payload: 0.6,
        d_robot: 0.6,
        d_cable: 0.6,
        d_reciprocal: 1.9,
        v_max: 1.0,
        f_min: 9.0,
        f_max: 11.0,
        tilt_max: 0.15,
        rate_max: 0.4,
        kappa: 8,
        free_yaw: true,
        cable_bands: rng.gen_bool(0.5),
        ..PlannerConfig::default()
    };
    let pieces = rng.gen_range(2..=4);
    let mut pts = vec![Vec3::zeros()];
    for _ in 0..pieces {
        let last = *pts.last().unwrap();
        pts.push(
            last + Vec3::new(
                rng.gen_range(0.5..1.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.3..0.3),
            ),
        );
    }
    let pitches: Vec<f64> = (0..=pieces).map(|_| rng.gen_range(0.5..0.9)).collect();
    let mut seed = Seed::through(&pts, &pitches, &sys, &cfg).expect("valid seed");
    for w in seed.junctions.iter_mut() {
        for n in 0..n_robots {
            let band = azimuth_band(n, n_robots);
            let half = 0.4 * (band.hi - band.lo);
            w[layout::azimuth(n)] += rng.gen_range(-half..half);
            w[layout::pitch(n)] += rng.gen_range(-0.2..0.2);
            w[layout::tension(n)] += rng.gen_range(-0.3..0.3);
            w[layout::yaw(n)] = rng.gen_range(-0.5..0.5);
        }
    }
    for t in seed.durations.iter_mut() {
        *t = rng.gen_range(0.5..1.2);
    }
    let field = SphereField {
        spheres: (1..pieces)
            .map(|i| {
                let off = Vec3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(0.5..0.9),
                    rng.gen_range(0.0..0.6),
                );
                (pts[i] + off, 0.2)
            })
            .collect(),
    };
    let problem = Problem::new(&seed, &sys, &cfg, None).expect("valid problem");
    let x = problem.initial_point();
    Instance {
        sys,
        cfg,
        seed,
        field,
        x,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Relative infinity-norm error between the analytic gradient and central
/// differences for one term; `None` when the term is inactive.
pub fn check_term(inst: &Instance, term: &str) -> Result<Option<f64>> {
    let mut p = Problem::new(&inst.seed, &inst.sys, &inst.cfg, Some(&inst.field))?;
    if term == "energy" {
        p.set = PenaltySet::none();
    } else {
        p.energy = false;
        p.set = PenaltySet::only(term).expect("known term");
    }
    let n = p.dim();
    let mut grad = vec![0.0; n];
    p.evaluate(&inst.x, &mut grad)?;
    let mut fd = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut x = inst.x.clone();
    for i in 0..n {
        let h = 1e-6 * inst.x[i].abs().max(1.0);
        x[i] = inst.x[i] + h;
        let fp = p.evaluate(&x, &mut scratch)?.total();
        x[i] = inst.x[i] - h;
        let fm = p.evaluate(&x, &mut scratch)?.total();
        x[i] = inst.x[i];
        fd[i] = (fp - fm) / (2.0 * h);
    }
    let scale = inf_norm(&fd).max(inf_norm(&grad));
    if scale < 1e-6 {
        return Ok(None);
    }
    let err = grad
        .iter()
        .zip(&fd)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(Some(err / scale))
}

/// Runs `instances` random instances per term.
pub fn run(instances: usize, seed: u64) -> Result<Vec<TermCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<Instance> = (0..instances).map(|_| random_instance(&mut rng)).collect();
    TERMS
        .iter()
        .map(|&term| {
            let mut worst = 0.0f64;
            let mut active = 0;
            for inst in &all {
                if let Some(e) = check_term(inst, term)? {
                    active += 1;
                    worst = worst.max(e);
                }
            }
            Ok(TermCheck {
                term: term.to_string(),
                instances,
                active,
                worst_relative_error: worst,
            })
        })
        .collect()
}
