//! Piecewise-polynomial flat-output trajectories of minimum control effort:
//! generation from junction values and durations, evaluation, energy cost
//! and gradient pullback.

mod banded;
mod energy;
mod minco;

pub use banded::{BandMatrix, BandedLu};
pub use energy::{channel_weights, energy_cost};
pub use minco::Minco;

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flatness::{layout, FlatSample};

/// Default order parameter: degree-7 pieces, continuity through the 6th
/// derivative, boundary conditions through the 3rd.
pub const DEFAULT_S: usize = 4;

/// Junction values and piece durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseParams {
    /// `(M-1)` rows of channel values.
    pub junctions: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
}

impl SparseParams {
    pub fn pieces(&self) -> usize {
        self.durations.len()
    }
}

/// `β^(k)(t)` for the monomial basis `[1, t, ..., t^(n-1)]`.
pub fn basis(n: usize, order: usize, t: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    if order >= n {
        return;
    }
    for i in order..n {
        let mut coef = 1.0;
        for j in 0..order {
            coef *= (i - j) as f64;
        }
        out[i] = coef * t.powi((i - order) as i32);
    }
}

/// Piecewise polynomial over `dims` channels; piece `m` holds `2s`
/// coefficient rows starting at row `2 s m`, row-major over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub s: usize,
    pub dims: usize,
    pub n_robots: usize,
    pub durations: Vec<f64>,
    pub coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryDoc {
    s: usize,
    pieces: usize,
    n_robots: usize,
    layout: Vec<String>,
    durations: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

/// Names of the flat-output channels in storage order.
pub fn channel_names(n_robots: usize) -> Vec<String> {
    let mut names = vec!["px".to_string(), "py".to_string(), "pz".to_string()];
    for n in 0..n_robots {
        for f in ["theta", "phi", "tension", "yaw"] {
            names.push(format!("{f}{n}"));
        }
    }
    names
}

impl Trajectory {
    pub fn pieces(&self) -> usize {
        self.durations.len()
    }

    pub fn coeffs_per_piece(&self) -> usize {
        2 * self.s
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    #[inline]
    pub fn coeff(&self, piece: usize, k: usize, ch: usize) -> f64 {
        self.coeffs[(2 * self.s * piece + k) * self.dims + ch]
    }

    /// Coefficient rows of one piece.
    pub fn piece_coeffs(&self, piece: usize) -> &[f64] {
        let n = 2 * self.s * self.dims;
        &self.coeffs[piece * n..(piece + 1) * n]
    }

    /// Start time of every piece.
    pub fn start_times(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.durations
            .iter()
            .map(|d| {
                let t = acc;
                acc += d;
                t
            })
            .collect()
    }

    /// Piece index and local time for `t`; right-continuous at junctions.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let total = self.total_duration();
        if !(0.0..=total).contains(&t) {
            return Err(Error::OutOfDomain { t, total });
        }
        let mut start = 0.0;
        let last = self.pieces() - 1;
        for (m, &d) in self.durations.iter().enumerate() {
            if m == last || t < start + d {
                return Ok((m, (t - start).clamp(0.0, d)));
            }
            start += d;
        }
        unreachable!()
    }

    /// `order`-th derivative of every channel at local time `tau` of `piece`.
    pub fn eval_piece(&self, piece: usize, tau: f64, order: usize, out: &mut [f64]) {
        let n = 2 * self.s;
        let mut b = vec![0.0; n];
        basis(n, order, tau, &mut b);
        out.iter_mut().for_each(|v| *v = 0.0);
        let c = self.piece_coeffs(piece);
        for (k, &bk) in b.iter().enumerate() {
            if bk != 0.0 {
                let row = &c[k * self.dims..(k + 1) * self.dims];
                for (o, &ck) in out.iter_mut().zip(row) {
                    *o += bk * ck;
                }
            }
        }
    }

    pub fn eval(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        let (m, tau) = self.locate(t)?;
        let mut out = vec![0.0; self.dims];
        self.eval_piece(m, tau, order, &mut out);
        Ok(out)
    }

    /// Flat sample with derivative orders `0..orders` at `t`.
    pub fn flat_sample(&self, t: f64, orders: usize) -> Result<FlatSample> {
        let (m, tau) = self.locate(t)?;
        Ok(self.piece_sample(m, tau, orders))
    }

    pub fn piece_sample(&self, piece: usize, tau: f64, orders: usize) -> FlatSample {
        let mut s = FlatSample::zeros(self.n_robots, orders);
        for (k, row) in s.derivs.iter_mut().enumerate() {
            self.eval_piece(piece, tau, k, row);
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        let rows = self.coeffs.chunks(self.dims).map(|r| r.to_vec()).collect();
        let doc = TrajectoryDoc {
            s: self.s,
            pieces: self.pieces(),
            n_robots: self.n_robots,
            layout: channel_names(self.n_robots),
            durations: self.durations.clone(),
            coeffs: rows,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TrajectoryDoc = serde_json::from_str(text)?;
        let dims = layout::channels(doc.n_robots);
        if doc.durations.len() != doc.pieces || doc.pieces == 0 {
            return Err(Error::InvalidConfig(
                "piece count does not match durations".into(),
            ));
        }
        if doc.durations.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidConfig("durations must be positive".into()));
        }
        if doc.coeffs.len() != 2 * doc.s * doc.pieces || doc.coeffs.iter().any(|r| r.len() != dims)
        {
            return Err(Error::InvalidConfig(
                "coefficient matrix has the wrong shape".into(),
            ));
        }
        Ok(Self {
            s: doc.s,
            dims,
            n_robots: doc.n_robots,
            durations: doc.durations,
            coeffs: doc.coeffs.concat(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
