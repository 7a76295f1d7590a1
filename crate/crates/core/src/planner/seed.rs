use serde::{Deserialize, Serialize};

use super::elimination::azimuth_band;
use super::PlannerConfig;
use crate::error::{Error, Result};
use crate::flatness::layout;
use crate::model::{e3, SystemConfig, Vec3};
use crate::pathfind::{resample_by_arclength, simplify, PlannedPath, PyramidConfig};
use crate::traj::{SparseParams, Trajectory, DEFAULT_S};
use std::f64::consts::PI;

/// Initial guess and boundary conditions for one optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub n_robots: usize,
    /// Derivative rows `0..s` at the start.
    pub head: Vec<Vec<f64>>,
    /// Derivative rows `0..s` at the goal.
    pub tail: Vec<Vec<f64>>,
    pub junctions: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
    /// Junctions whose payload position is held fixed.
    #[serde(default)]
    pub pinned: Vec<usize>,
    /// Hold every payload junction and only optimize robot channels.
    #[serde(default)]
    pub freeze_payload: bool,
    /// Hold the durations.
    #[serde(default)]
    pub freeze_durations: bool,
}

/// Pitch kept strictly inside `[0, pitch_max]`.
pub(crate) fn interior_pitch(theta: f64, cfg: &PlannerConfig) -> f64 {
    let pad = 0.05 * cfg.pitch_max;
    theta.clamp(pad, cfg.pitch_max - pad)
}

/// Acceleration of the seed speed profile [m/s^2].
const SEED_ACCEL: f64 = 2.0;

/// Time at arclength `s` of a rest-to-rest trapezoidal speed profile over
/// `total` meters with cruise speed `v`.
fn profile_time(s: f64, total: f64, v: f64) -> f64 {
    let a = SEED_ACCEL;
    let ramp = (v * v / (2.0 * a)).min(0.5 * total);
    let v_peak = (2.0 * a * ramp).sqrt();
    let t_ramp = v_peak / a;
    let cruise = total - 2.0 * ramp;
    let time_at = |x: f64| (2.0 * x / a).sqrt();
    if s <= ramp {
        time_at(s)
    } else if s <= ramp + cruise {
        t_ramp + (s - ramp) / v_peak
    } else {
        2.0 * t_ramp + cruise / v_peak - time_at((total - s).max(0.0))
    }
}

impl Seed {
    /// Robot channels at rest: given pitch, band-centered azimuth, static
    /// tension share, zero yaw.
    pub fn robot_rest(
        n: usize,
        n_robots: usize,
        theta: f64,
        sys: &SystemConfig,
        cfg: &PlannerConfig,
    ) -> [f64; 4] {
        let iv = cfg.tension_interval();
        let pad = 0.02 * (iv.hi - iv.lo);
        let f = (sys.payload_mass * sys.gravity / (n_robots as f64 * theta.sin()))
            .clamp(iv.lo + pad, iv.hi - pad);
        [theta, azimuth_band(n, n_robots).mid(), f, 0.0]
    }

    /// Flat-output vector of a resting system.
    pub fn rest_vector(p: &Vec3, theta: f64, sys: &SystemConfig, cfg: &PlannerConfig) -> Vec<f64> {
        let n_robots = sys.n_robots;
        let mut v = vec![0.0; layout::channels(n_robots)];
        v[..3].copy_from_slice(p.as_slice());
        for n in 0..n_robots {
            let b = layout::robot_base(n);
            v[b..b + 4].copy_from_slice(&Self::robot_rest(n, n_robots, theta, sys, cfg));
        }
        v
    }

    /// Boundary rows for a system at rest.
    pub fn rest_boundary(
        p: &Vec3,
        theta: f64,
        sys: &SystemConfig,
        cfg: &PlannerConfig,
    ) -> Vec<Vec<f64>> {
        let d = layout::channels(sys.n_robots);
        let mut rows = vec![vec![0.0; d]; DEFAULT_S];
        rows[0] = Self::rest_vector(p, theta, sys, cfg);
        rows
    }

    /// Rest-to-rest seed through `points` (start and goal included) with a
    /// pitch per point. Durations follow arclength at half the speed bound.
    pub fn through(
        points: &[Vec3],
        pitches: &[f64],
        sys: &SystemConfig,
        cfg: &PlannerConfig,
    ) -> Result<Self> {
        if points.len() < 2 || pitches.len() != points.len() {
            return Err(Error::SeedInfeasible(
                "need at least two points with one pitch each".into(),
            ));
        }
        let th: Vec<f64> = pitches.iter().map(|&t| interior_pitch(t, cfg)).collect();
        let last = points.len() - 1;
        let junctions = (1..last)
            .map(|i| Self::rest_vector(&points[i], th[i], sys, cfg))
            .collect();
        let mut arclength = vec![0.0];
        for w in points.windows(2) {
            arclength.push(arclength.last().unwrap() + (w[1] - w[0]).norm());
        }
        let total = *arclength.last().unwrap();
        let durations = arclength
            .windows(2)
            .map(|w| {
                (profile_time(w[1], total, 0.5 * cfg.v_max)
                    - profile_time(w[0], total, 0.5 * cfg.v_max))
                .max(0.1)
            })
            .collect();
        let mut seed = Self {
            n_robots: sys.n_robots,
            head: Self::rest_boundary(&points[0], th[0], sys, cfg),
            tail: Self::rest_boundary(&points[last], th[last], sys, cfg),
            junctions,
            durations,
            pinned: Vec::new(),
            freeze_payload: false,
            freeze_durations: false,
        };
        seed.balance_forces(sys, cfg)?;
        Ok(seed)
    }

    /// Resets the junction cable channels so the cable forces carry the
    /// payload acceleration of the seed trajectory: each robot takes an
    /// equal share of the required force on top of its formation spread.
    pub fn balance_forces(&mut self, sys: &SystemConfig, cfg: &PlannerConfig) -> Result<()> {
        let traj = Trajectory::build(
            DEFAULT_S,
            self.n_robots,
            layout::channels(self.n_robots),
            &self.params(),
            &self.head,
            &self.tail,
        )?;
        let n_robots = self.n_robots as f64;
        let starts = traj.start_times();
        let pitch = cfg.pitch_interval();
        let tension = cfg.tension_interval();
        for (i, w) in self.junctions.iter_mut().enumerate() {
            let acc = traj.eval(starts[i + 1], 2)?;
            let total = (Vec3::new(acc[0], acc[1], acc[2]) + e3() * sys.gravity) * sys.payload_mass;
            for n in 0..self.n_robots {
                let b = layout::robot_base(n);
                let (theta, phi) = (w[b + layout::PITCH], w[b + layout::AZIMUTH]);
                let f0 = sys.payload_mass * sys.gravity / (n_robots * theta.sin());
                let spread = Vec3::new(phi.cos(), phi.sin(), 0.0) * (f0 * theta.cos());
                let v = total / n_robots + spread;
                let f = v.norm();
                let theta_new = (v.z / f).asin();
                let mut phi_new = v.y.atan2(v.x);
                // stay on the branch nearest the formation azimuth
                phi_new += (2.0 * PI) * ((phi - phi_new) / (2.0 * PI)).round();
                let pad = 1e-3;
                w[b + layout::PITCH] = theta_new.clamp(pitch.lo + pad, pitch.hi - pad);
                w[b + layout::AZIMUTH] = phi_new;
                w[b + layout::TENSION] = f.clamp(tension.lo + pad, tension.hi - pad);
            }
        }
        Ok(())
    }

    /// Replaces the start rows with `head` (a moving state) and re-times the
    /// pieces for a profile that starts at the head speed, then rebalances
    /// the junction cable forces.
    pub fn with_head(
        mut self,
        head: Vec<Vec<f64>>,
        sys: &SystemConfig,
        cfg: &PlannerConfig,
    ) -> Result<Self> {
        let v0 = Vec3::new(head[1][0], head[1][1], head[1][2]).norm();
        let mut points = vec![Vec3::new(head[0][0], head[0][1], head[0][2])];
        points.extend(self.junctions.iter().map(|w| Vec3::new(w[0], w[1], w[2])));
        points.push(Vec3::new(self.tail[0][0], self.tail[0][1], self.tail[0][2]));
        let mut arclength = vec![0.0];
        for w in points.windows(2) {
            arclength.push(arclength.last().unwrap() + (w[1] - w[0]).norm());
        }
        let total = *arclength.last().unwrap();
        let vc = 0.5 * cfg.v_max;
        let a = SEED_ACCEL;
        let speed = |x: f64| {
            let fwd = if v0 <= vc {
                (v0 * v0 + 2.0 * a * x).sqrt().min(vc)
            } else {
                (v0 * v0 - 2.0 * a * x).max(0.0).sqrt().max(vc)
            };
            fwd.min((2.0 * a * (total - x).max(0.0)).sqrt())
        };
        self.durations = arclength
            .windows(2)
            .map(|w| {
                // midpoint rule; the 1/sqrt end singularity is integrable
                let n = 200;
                let h = (w[1] - w[0]) / n as f64;
                let t: f64 = (0..n)
                    .map(|k| h / speed(w[0] + (k as f64 + 0.5) * h).max(1e-3))
                    .sum();
                t.max(0.1)
            })
            .collect();
        self.head = head;
        self.balance_forces(sys, cfg)?;
        Ok(self)
    }

    pub fn params(&self) -> SparseParams {
        SparseParams {
            junctions: self.junctions.clone(),
            durations: self.durations.clone(),
        }
    }

    /// Straight rest-to-rest seed split into `pieces` equal segments.
    pub fn straight(
        start: &Vec3,
        goal: &Vec3,
        pieces: usize,
        theta: f64,
        sys: &SystemConfig,
        cfg: &PlannerConfig,
    ) -> Result<Self> {
        let pieces = pieces.max(1);
        let points: Vec<Vec3> = (0..=pieces)
            .map(|i| start + (goal - start) * (i as f64 / pieces as f64))
            .collect();
        Self::through(&points, &vec![theta; pieces + 1], sys, cfg)
    }

    /// Seed from a front-end path: piece count from the lattice segment
    /// count clamped to the configured range, junctions at equal arclength
    /// along the simplified path, pitch from each point's formation radius.
    pub fn from_path(path: &PlannedPath, sys: &SystemConfig, cfg: &PlannerConfig) -> Result<Self> {
        Self::from_configs(
            &simplify(path),
            path.nodes.len().saturating_sub(1),
            sys,
            cfg,
        )
    }

    /// Seed along a polyline of formation configurations; `segments` is
    /// clamped to the configured piece range.
    pub fn from_configs(
        nodes: &[PyramidConfig],
        segments: usize,
        sys: &SystemConfig,
        cfg: &PlannerConfig,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::SeedInfeasible("empty path".into()));
        }
        let pieces = segments.clamp(cfg.min_pieces, cfg.max_pieces);
        let pts = resample_by_arclength(nodes, pieces);
        let points: Vec<Vec3> = pts.iter().map(|c| c.payload).collect();
        let pitches: Vec<f64> = pts.iter().map(|c| c.pitch(sys.cable_length)).collect();
        Self::through(&points, &pitches, sys, cfg)
    }

    /// Same boundary conditions and options, junctions and durations taken
    /// from `traj`.
    pub fn warm_start(&self, traj: &Trajectory) -> Result<Self> {
        let starts = traj.start_times();
        let junctions = starts[1..]
            .iter()
            .map(|&t| traj.eval(t, 0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            junctions,
            durations: traj.durations.clone(),
            ..self.clone()
        })
    }

    pub fn pieces(&self) -> usize {
        self.durations.len()
    }
}
