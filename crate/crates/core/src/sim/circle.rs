use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::flatness::layout;
use crate::model::{SystemConfig, Vec3};
use crate::planner::{optimize, PlanReport, PlannerConfig, Seed};
use crate::traj::{Trajectory, DEFAULT_S};

/// Samples per piece when measuring peak payload speed and acceleration.
const PEAK_SAMPLES: usize = 200;

/// Agile test primitive: accelerate from rest along a straight line that
/// enters a horizontal circle tangentially, fly the circle, leave along the
/// same line and stop. The payload path is fixed; the whole trajectory is
/// then time-scaled so the payload peaks at `max_accel` (or `max_speed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircleEntry {
    pub radius: f64,
    /// Length of the straight run-up and run-out [m].
    pub entry_length: f64,
    pub altitude: f64,
    pub loops: usize,
    pub circle_pieces: usize,
    /// Pieces on each straight segment.
    pub entry_pieces: usize,
    /// Cable pitch used to seed the robot channels.
    pub pitch: f64,
    /// Target peak payload acceleration [m/s^2].
    pub max_accel: Option<f64>,
    /// Target peak payload speed [m/s]; used when `max_accel` is unset.
    pub max_speed: Option<f64>,
}

impl Default for CircleEntry {
    fn default() -> Self {
        Self {
            radius: 2.3,
            entry_length: 4.0,
            altitude: 1.5,
            loops: 1,
            circle_pieces: 8,
            entry_pieces: 4,
            pitch: 0.5,
            max_accel: Some(9.1),
            max_speed: None,
        }
    }
}

impl CircleEntry {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0)
            || !(self.entry_length > 0.0)
            || self.loops == 0
            || self.circle_pieces < 3
            || self.entry_pieces == 0
        {
            return Err(Error::InvalidConfig(
                "circle entry needs positive radius and run-up, at least one loop, three pieces per loop and one per straight".into(),
            ));
        }
        match (self.max_accel, self.max_speed) {
            (Some(a), _) if a > 0.0 => Ok(()),
            (None, Some(v)) if v > 0.0 => Ok(()),
            _ => Err(Error::InvalidConfig(
                "circle entry needs a positive max_accel or max_speed".into(),
            )),
        }
    }

    /// Payload waypoints (start and goal included) and nominal durations.
    fn path(&self) -> (Vec<Vec3>, Vec<f64>) {
        let (r, l, h) = (self.radius, self.entry_length, self.altitude);
        let v = (self.max_accel.unwrap_or(9.81) * r).sqrt();
        // run-up acceleration a_p sin^2(pi t / T): starts and ends at zero
        let k = self.entry_pieces;
        let ramp = 2.0 * l / v;
        let a_p = 2.0 * v / ramp;
        let frac = |i: usize| {
            let t = ramp * i as f64 / k as f64;
            a_p * (0.25 * t * t
                - ramp * ramp / (8.0 * PI * PI) * (1.0 - (2.0 * PI * t / ramp).cos()))
                / l
        };
        let mut pts: Vec<Vec3> = (0..=k)
            .map(|i| Vec3::new(-l * (1.0 - frac(i)), -r, h))
            .collect();
        let mut durations = vec![ramp / k as f64; k];
        let pieces = self.loops * self.circle_pieces;
        for j in 1..=pieces {
            let a = -0.5 * PI + 2.0 * PI * j as f64 / self.circle_pieces as f64;
            pts.push(Vec3::new(r * a.cos(), r * a.sin(), h));
            durations.push(2.0 * PI * r / self.circle_pieces as f64 / v);
        }
        for i in (0..k).rev() {
            pts.push(Vec3::new(l * (1.0 - frac(i)), -r, h));
            durations.push(ramp / k as f64);
        }
        (pts, durations)
    }
}

fn peak(traj: &Trajectory, order: usize) -> Result<f64> {
    let mut best: f64 = 0.0;
    let mut out = vec![0.0; traj.dims];
    for m in 0..traj.pieces() {
        for k in 0..=PEAK_SAMPLES {
            traj.eval_piece(
                m,
                traj.durations[m] * k as f64 / PEAK_SAMPLES as f64,
                order,
                &mut out,
            );
            best = best.max(Vec3::new(out[0], out[1], out[2]).norm());
        }
    }
    if !best.is_finite() {
        return Err(Error::SingularSystem(
            "non-finite payload derivative".into(),
        ));
    }
    Ok(best)
}

pub fn max_payload_accel(traj: &Trajectory) -> Result<f64> {
    peak(traj, 2)
}

pub fn max_payload_speed(traj: &Trajectory) -> Result<f64> {
    peak(traj, 1)
}

fn build(seed: &Seed) -> Result<Trajectory> {
    Trajectory::build(
        DEFAULT_S,
        seed.n_robots,
        layout::channels(seed.n_robots),
        &seed.params(),
        &seed.head,
        &seed.tail,
    )
}

/// Seed with every payload junction and every duration frozen, durations
/// scaled to the requested peak and cable channels balanced against the
/// resulting payload acceleration.
pub fn circle_entry_seed(
    spec: &CircleEntry,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
) -> Result<Seed> {
    spec.validate()?;
    let (pts, durations) = spec.path();
    let last = pts.len() - 1;
    let mut seed = Seed {
        n_robots: sys.n_robots,
        head: Seed::rest_boundary(&pts[0], spec.pitch, sys, cfg),
        tail: Seed::rest_boundary(&pts[last], spec.pitch, sys, cfg),
        junctions: pts[1..last]
            .iter()
            .map(|p| Seed::rest_vector(p, spec.pitch, sys, cfg))
            .collect(),
        durations,
        pinned: Vec::new(),
        freeze_payload: true,
        freeze_durations: true,
    };
    // Rest-to-rest polynomials through fixed points scale exactly in time:
    // stretching every duration by a multiplies speed by 1/a and
    // acceleration by 1/a^2.
    let traj = build(&seed)?;
    let scale = match spec.max_accel {
        Some(a) => (max_payload_accel(&traj)? / a).sqrt(),
        None => max_payload_speed(&traj)? / spec.max_speed.unwrap_or(1.0),
    };
    for d in &mut seed.durations {
        *d *= scale;
    }
    seed.balance_forces(sys, cfg)?;
    Ok(seed)
}

/// Optimizes the cable channels along the fixed payload path.
pub fn circle_entry_trajectory(
    spec: &CircleEntry,
    sys: &SystemConfig,
    cfg: &PlannerConfig,
) -> Result<(Trajectory, PlanReport)> {
    let seed = circle_entry_seed(spec, sys, cfg)?;
    optimize(&seed, sys, cfg, None)
}
