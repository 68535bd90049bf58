//! Monte Carlo solvers for reflected BSDEs on simulated Brownian paths.
//!
//! Conditional expectations are least-squares projections on a polynomial
//! basis of the asset state; reflection is applied at every step
//! (`Y_k = max(L_k, C_k)`, `ΔK_k = Y_k − C_k`), so the discrete Skorokhod
//! condition holds exactly. The regression targets are the realised values
//! of the exercise policy implied by the reflection (Longstaff–Schwartz),
//! which avoids compounding the upward bias of `max` over fitted values.

mod insider;
mod io;
mod paths;
mod regression;
mod solver;

pub use insider::{
    alpha_slice, effective_sample_size, AtomDensity, girsanov_solve, ratio_slice, solve_enlarged_rbsde,
    solve_parametrized_atom, solve_parametrized_rbsde, transform_solution, Coupling, EnlargedOptions,
    EnlargedSolution, GirsanovSolution, MeasureChange, TransformedSolution, DEFAULT_DRIVER_DEGREE, ESS_WARN_FRACTION, MIN_ALPHA,
};
pub use io::{write_paths_csv, write_solution_csv, SolverManifest};
pub use paths::{simulate_paths, Dynamics, MarketModel, PathEnsemble};
pub use regression::{BasisSpec, Projection, RIDGE_LAMBDA};
pub use solver::{skorokhod_residual, solve_rbsde, Payoff, PayoffKind, RBSDESolution};
