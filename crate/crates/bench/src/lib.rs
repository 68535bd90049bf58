//! Fixtures shared by the criterion benches.

use infoval_core::checks::{instances, VerifyOptions};
use infoval_core::density::{lattice_density, LatticeDensity};
use infoval_core::instances::Instance;
use infoval_core::lattice::{build_binomial, PayoffSpec};
use infoval_core::rbsde::{simulate_paths, MarketModel, PathEnsemble};
use infoval_core::{FiltrationLattice, Result};

/// CRR tree for the at-the-money put with `steps` steps.
pub fn crr_put(steps: usize) -> Result<(FiltrationLattice, PayoffSpec)> {
    let dt = 1.0 / steps as f64;
    let up = (0.2 * dt.sqrt()).exp();
    let down = 1.0 / up;
    let lattice = build_binomial(100.0, up, down, (1.0 - down) / (up - down), steps)?;
    let put = PayoffSpec::put(&lattice, 100.0)?;
    Ok((lattice, put))
}

/// The random lattice instances of the verification suite, with densities.
pub fn lattice_instances(count: usize) -> Result<Vec<(Instance, LatticeDensity)>> {
    let opts = VerifyOptions { instances: count, ..VerifyOptions::default() };
    instances(&opts)?
        .into_iter()
        .map(|i| {
            let d = lattice_density(&i.lattice, &i.g_map, &i.grid)?;
            Ok((i, d))
        })
        .collect()
}

/// Geometric Brownian paths for the benchmark put.
pub fn put_paths(n_paths: usize, n_steps: usize) -> Result<PathEnsemble> {
    simulate_paths(&MarketModel::geometric(100.0, 0.0, 0.2, 1.0), n_paths, n_steps, 7)
}
