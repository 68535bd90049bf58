//! Conditional densities `α_t(u)` of the information variable.
//!
//! Two backends: exact densities on finite lattices, built from the
//! conditional law of the information at each terminal node, and closed-form
//! densities of Brownian functionals (the noisy-endpoint model `G = B_T + X`)
//! evaluated on simulated paths.

mod gaussian;
mod grid;
mod lattice;
mod paths;

use serde::{Deserialize, Serialize};

pub use gaussian::{
    gaussian_bound_scan, gaussian_density, gaussian_logistic_ratio, gaussian_normalization_error,
    BrownianDensity, GaussianInfoModel, Independent, QUADRATURE_NODES,
};
pub use grid::{GridKind, UGrid, WEIGHT_TOL};
pub use lattice::{
    lattice_density, lattice_density_allowing_null, smooth_conditional_laws, verify_lattice_density,
    DensityReport, LatticeDensity, DEFAULT_SMOOTHING, LAW_TOL,
};
pub use paths::{novikov_moment, verify_path_density, write_path_density_csv, AtomMoment, PathDensityReport};

/// Outcome of a boundedness check on `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bounded: bool,
    pub max_alpha: f64,
    pub threshold: f64,
}

impl BoundCheck {
    pub fn from_values(values: impl Iterator<Item = f64>, threshold: f64) -> Self {
        let max_alpha = values.fold(f64::NEG_INFINITY, f64::max);
        BoundCheck {
            bounded: max_alpha <= threshold,
            max_alpha,
            threshold,
        }
    }
}

#[derive(Serialize)]
struct DensityRow {
    time: f64,
    id: usize,
    atom: f64,
    alpha: f64,
    logistic_ratio: Option<f64>,
}
