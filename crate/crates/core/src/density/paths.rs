use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{BrownianDensity, DensityRow, UGrid};
use crate::error::{domain, Result};
use crate::rbsde::{alpha_slice, ratio_slice, PathEnsemble};
use crate::util::Estimate;

/// Monte Carlo diagnostics of a Brownian density on a path ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDensityReport {
    /// `max |Σ_i α(u_i) w_i − 1|` over retained points (grid quadrature error).
    pub max_normalization_error: f64,
    /// Largest `|mean α_k(u) − 1| / std_error` over steps and atoms.
    pub max_martingale_z: f64,
    /// Largest `|mean α_k(u) − 1|`.
    pub max_martingale_defect: f64,
    pub min_alpha: f64,
    pub max_alpha: f64,
    /// `[step][atom]` sample means of `α_k(u)`.
    pub means: Vec<Vec<Estimate>>,
}

/// Checks `E[α_k(u)] = α_0(u) = 1` at every step and atom, plus positivity
/// and the grid normalisation.
pub fn verify_path_density(
    paths: &PathEnsemble,
    density: &dyn BrownianDensity,
    grid: &UGrid,
) -> PathDensityReport {
    let n = paths.n_paths();
    let mut means = Vec::with_capacity(paths.n_steps() + 1);
    let (mut z_max, mut defect, mut norm): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..=paths.n_steps() {
        let slices: Vec<Vec<f64>> = grid.atoms().iter().map(|&u| alpha_slice(paths, density, k, u)).collect();
        let mut row = Vec::with_capacity(grid.len());
        for a in &slices {
            let est = Estimate::from_slice(a);
            defect = defect.max((est.mean - 1.0).abs());
            if est.std_error > 0.0 {
                z_max = z_max.max(est.z_score(1.0));
            }
            for &v in a {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            row.push(est);
        }
        for p in 0..n {
            let total: f64 = slices.iter().zip(grid.weights()).map(|(a, w)| a[p] * w).sum();
            norm = norm.max((total - 1.0).abs());
        }
        means.push(row);
    }
    PathDensityReport {
        max_normalization_error: norm,
        max_martingale_z: z_max,
        max_martingale_defect: defect,
        min_alpha: lo,
        max_alpha: hi,
        means,
    }
}

/// Finite-horizon exponential moment `E[exp(½ Σ_k (β/α)_k² dt)]` for one atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomMoment {
    pub atom: f64,
    pub moment: Estimate,
}

/// Monte Carlo stand-in for Novikov's condition: a finite, stable moment is
/// evidence (not proof) that the stochastic exponential is a true martingale.
pub fn novikov_moment(paths: &PathEnsemble, density: &dyn BrownianDensity, grid: &UGrid) -> Result<Vec<AtomMoment>> {
    let dt = paths.dt();
    let n = paths.n_paths();
    grid.atoms()
        .iter()
        .map(|&u| {
            let mut acc = vec![0.0; n];
            for k in 0..paths.n_steps() {
                let Some(r) = ratio_slice(paths, density, k, u) else {
                    return domain("density has no logistic ratio");
                };
                for (a, r) in acc.iter_mut().zip(&r) {
                    *a += 0.5 * r * r * dt;
                }
            }
            acc.iter_mut().for_each(|a| *a = a.exp());
            Ok(AtomMoment {
                atom: u,
                moment: Estimate::from_slice(&acc),
            })
        })
        .collect()
}

/// Writes `time,id,atom,alpha,logistic_ratio` rows for the first `max_paths` paths.
pub fn write_path_density_csv<W: Write>(
    paths: &PathEnsemble,
    density: &dyn BrownianDensity,
    grid: &UGrid,
    max_paths: usize,
    writer: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for k in 0..=paths.n_steps() {
        let t = paths.time(k);
        for p in 0..max_paths.min(paths.n_paths()) {
            let b = paths.brownian()[k][p];
            for &u in grid.atoms() {
                out.serialize(DensityRow {
                    time: t,
                    id: p,
                    atom: u,
                    alpha: density.alpha(t, b, u),
                    logistic_ratio: density.logistic_ratio(t, b, u),
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{GaussianInfoModel, Independent};
    use crate::rbsde::{simulate_paths, MarketModel};

    #[test]
    fn gaussian_density_is_a_martingale_on_paths() {
        let e = simulate_paths(&MarketModel::geometric(1.0, 0.0, 1.0, 1.0), 100_000, 2, 21).unwrap();
        let m = GaussianInfoModel::new(1.0, 1.0).unwrap();
        // t = 0.5 is step 1 of 2
        let a = alpha_slice(&e, &m, 1, 0.0);
        let est = Estimate::from_slice(&a);
        assert!(est.z_score(1.0) < 3.0, "{est:?}");
        let grid = m.grid(16, Default::default()).unwrap();
        let report = verify_path_density(&e, &m, &grid);
        assert!(report.min_alpha > 0.0);
        assert!(report.max_martingale_z < 4.5, "{}", report.max_martingale_z);
    }

    #[test]
    fn unit_density_has_no_defects() {
        let e = simulate_paths(&MarketModel::geometric(1.0, 0.0, 1.0, 1.0), 100, 3, 1).unwrap();
        let grid = UGrid::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let r = verify_path_density(&e, &Independent, &grid);
        assert_eq!(r.max_normalization_error, 0.0);
        assert_eq!(r.max_martingale_defect, 0.0);
        assert_eq!(r.max_martingale_z, 0.0);
        let nov = novikov_moment(&e, &Independent, &grid).unwrap();
        assert!(nov.iter().all(|m| m.moment.mean == 1.0));
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let e = simulate_paths(&MarketModel::geometric(1.0, 0.0, 1.0, 1.0), 10, 3, 1).unwrap();
        let m = GaussianInfoModel::new(1.0, 1.0).unwrap();
        let grid = m.grid(4, Default::default()).unwrap();
        let mut buf = Vec::new();
        write_path_density_csv(&e, &m, &grid, 5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 5 * 4);
        assert!(text.starts_with("time,id,atom,alpha,logistic_ratio"));
    }
}
