//! Trajectory planning, control and simulation for cooperative transport of
//! a cable-suspended payload by multiple aerial robots.

pub mod benchmark;
pub mod control;
pub mod env;
pub mod error;
pub mod flatness;
pub mod model;
pub mod pathfind;
pub mod sim;
pub mod traj;

pub use env::{EsdfGrid, MapSpec, Obstacle, OccupancyGrid};
pub use error::{Error, Result};
pub use flatness::{FlatSample, RobotFlatState};
pub use model::{
    CableState, ControlInput, PayloadState, Plant, RobotState, SystemConfig, Vec3, WorldState,
};
pub use traj::{SparseParams, Trajectory};
pub mod planner;

pub use control::{ControllerConfig, RobotController};
pub use planner::{optimize, PlanReport, PlannerConfig, Seed};
pub use sim::{run_scenario, RunMetrics, Scenario, SimSetup};
