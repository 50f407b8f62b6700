//! Benchmark instances: discretized reaction-diffusion problems in matrix
//! form and analytic matrix-valued test functions.

mod analytic;
mod laplacian;
mod problem;

pub use analytic::{sample_analytic, AnalyticFunction, AnalyticId};
pub use laplacian::{build_laplacian_1d, first_derivative_1d, grid_nodes, spacing, Boundary};
pub use problem::{build_problem, MatrixFn, Nonlinearity, Params, PointwiseFn, ProblemSpec, PROBLEM_NAMES};
