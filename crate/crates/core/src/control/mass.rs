use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Vec3;

/// Relative spread of the per-sample estimate above which the window is
/// flagged as not hovering steadily.
pub const VARIANCE_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    /// Estimated payload mass [kg].
    pub mass: f64,
    /// Standard deviation of the per-sample estimates over the window [kg].
    pub std_dev: f64,
    pub excessive_variance: bool,
}

/// Payload mass from the last `window` cable-force estimates of every robot:
/// the vertical components are averaged over the window, summed over the
/// robots and divided by `gravity`.
pub fn estimate_payload_mass(
    history: &[Vec<Vec3>],
    window: usize,
    gravity: f64,
) -> Result<MassEstimate> {
    if window == 0 {
        return Err(Error::InvalidConfig(
            "mass window must be at least 1".into(),
        ));
    }
    if history.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: window,
            got: 0,
        });
    }
    let got = history.iter().map(Vec::len).min().unwrap_or(0);
    if got < window {
        return Err(Error::InsufficientSamples {
            needed: window,
            got,
        });
    }
    let per_sample: Vec<f64> = (0..window)
        .map(|w| {
            history
                .iter()
                .map(|h| h[h.len() - window + w].z)
                .sum::<f64>()
                / gravity
        })
        .collect();
    let mass = per_sample.iter().sum::<f64>() / window as f64;
    let var = per_sample.iter().map(|m| (m - mass).powi(2)).sum::<f64>() / window as f64;
    let std_dev = var.sqrt();
    Ok(MassEstimate {
        mass,
        std_dev,
        excessive_variance: std_dev > VARIANCE_LIMIT * mass.abs(),
    })
}
