use thiserror::Error;

/// Errors raised across the planning, control and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("thrust vector norm {0:.3e} is below the normalization threshold")]
    DegenerateThrust(f64),

    #[error("attitude is at the Hopf singularity (z_B,3 = {0:.6})")]
    HopfSingularity(f64),

    #[error("trajectory linear system is singular: {0}")]
    SingularSystem(String),

    #[error("time {t} outside trajectory domain [0, {total}]")]
    OutOfDomain { t: f64, total: f64 },

    #[error("occupancy grid is empty")]
    EmptyGrid,

    #[error("no collision-free path between start and goal")]
    NoPath,

    #[error("seed trajectory is infeasible: {0}")]
    SeedInfeasible(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("simulation diverged at t = {time:.3} s: {reason}")]
    Divergence { time: f64, reason: String },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
