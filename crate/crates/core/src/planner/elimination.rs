//! Smooth maps from unconstrained auxiliary variables onto bounded or
//! positive decision variables.

use std::f64::consts::PI;

pub const TAU_LIMIT: f64 = 20.0;

/// Closed interval a channel is mapped into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo < hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `xi = mid + (range / pi) atan(eta)` and `d xi / d eta`.
    pub fn forward(&self, eta: f64) -> (f64, f64) {
        let range = self.hi - self.lo;
        (
            self.mid() + range / PI * eta.atan(),
            range / (PI * (eta * eta + 1.0)),
        )
    }

    /// Inverse map; `xi` is pulled strictly inside the interval first.
    pub fn inverse(&self, xi: f64) -> f64 {
        let range = self.hi - self.lo;
        let inset = 1e-6 * range;
        let x = xi.clamp(self.lo + inset, self.hi - inset);
        (PI * (x - self.mid()) / range).tan()
    }

    pub fn contains_strictly(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// `T = exp(tau)` with `tau` clamped to `[-20, 20]`; returns `(T, dT/dtau)`.
/// The derivative is zero outside the clamp.
pub fn duration_from_tau(tau: f64) -> (f64, f64) {
    let t = tau.clamp(-TAU_LIMIT, TAU_LIMIT).exp();
    let d = if tau.abs() > TAU_LIMIT { 0.0 } else { t };
    (t, d)
}

pub fn tau_from_duration(t: f64) -> f64 {
    t.ln().clamp(-TAU_LIMIT, TAU_LIMIT)
}

/// Azimuth band of robot `n` (0-based) among `n_robots`: width `2 pi / N`
/// centered at `2 pi n / N`.
pub fn azimuth_band(n: usize, n_robots: usize) -> Interval {
    let nf = n_robots as f64;
    let k = (n + 1) as f64;
    Interval::new((2.0 * k - 3.0) * PI / nf, (2.0 * k - 1.0) * PI / nf)
}
