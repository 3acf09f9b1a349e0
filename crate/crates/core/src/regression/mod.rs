//! Regression bases and the least-squares solver.

mod basis;
mod lstsq;

pub use basis::{evaluate_basis, BasisEvaluator, BasisExtras, BasisSpec, BasisVariant};
pub use lstsq::{solve_least_squares, FitResult, RANK_TOL};
