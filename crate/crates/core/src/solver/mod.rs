//! Numerical solvers: bounded nonlinear least squares (trust-region
//! reflective) and a dense two-phase simplex for small linear programs.

pub mod simplex;
pub mod trf;

pub use simplex::{solve_lp, LinearProgram, LpOutcome};
pub use trf::{
    numeric_jacobian, solve_trf, AcceptedIterate, LeastSquaresProblem, SolveStatus, TrfError,
    TrfOptions, TrfSolution,
};
