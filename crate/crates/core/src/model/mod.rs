//! Merton jump-diffusion market, discretization grids and path simulation.

mod grids;
mod params;
mod paths;

pub use grids::{
    build_space_partition, build_time_grid, DiscretizationGrids, GridSpec, SpacePartition, TimeGrid,
};
pub use params::ModelParams;
pub use paths::{simulate_paths, JumpEvent, PathBundle, PathView};

pub(crate) use paths::PathStepper;
