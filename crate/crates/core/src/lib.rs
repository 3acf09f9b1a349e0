//! Monte Carlo lower and upper bounds for Bermudan min-puts under Merton
//! jump-diffusion.

pub mod analytic;
pub mod config;
pub mod dual_ab;
pub mod dual_tm;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod model;
pub mod normal;
pub mod policy;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod tables;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use estimate::{BoundEstimate, BoundKind};
pub use experiment::{run_experiment, Experiment, ExperimentReport};
pub use tables::{reproduce_table, TableOptions};
