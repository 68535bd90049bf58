use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{BoundCheck, DensityRow};
use crate::density::UGrid;
use crate::error::{shape, Error, Result};
use crate::lattice::{FiltrationLattice, NodeProcess};

/// Tolerance on the conditional laws of the information variable and on the
/// prior they imply.
pub const LAW_TOL: f64 = 1e-10;

/// `α_k(node, u) = P(G = u | F_k) / P(G = u)` on every lattice node and grid atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeDensity {
    /// `[time][node][atom]`
    alpha: Vec<Vec<Vec<f64>>>,
    n_atoms: usize,
}

/// Whether atoms with zero conditional mass are rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NullMass {
    Reject,
    Allow,
}

impl LatticeDensity {
    /// `α ≡ 1`: information independent of the market.
    pub fn independent(lattice: &FiltrationLattice, n_atoms: usize) -> Self {
        let alpha = lattice
            .levels()
            .iter()
            .map(|l| vec![vec![1.0; n_atoms]; l.len()])
            .collect();
        LatticeDensity { alpha, n_atoms }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_levels(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self, k: usize, i: usize, atom: usize) -> f64 {
        self.alpha[k][i][atom]
    }

    /// Densities of every atom at node `(k, i)`.
    pub fn at(&self, k: usize, i: usize) -> &[f64] {
        &self.alpha[k][i]
    }

    /// `α(·, u_atom)` as an adapted process.
    pub fn atom_process(&self, atom: usize) -> NodeProcess {
        NodeProcess::from_levels_unchecked(
            self.alpha
                .iter()
                .map(|level| level.iter().map(|a| a[atom]).collect())
                .collect(),
        )
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.alpha.iter().flatten().flatten().copied()
    }

    pub fn check_shape(&self, lattice: &FiltrationLattice, grid: &UGrid) -> Result<()> {
        if self.n_atoms != grid.len() {
            return shape(format!(
                "density has {} atoms, grid has {}",
                self.n_atoms,
                grid.len()
            ));
        }
        if self.alpha.len() != lattice.n_steps() + 1
            || self
                .alpha
                .iter()
                .enumerate()
                .any(|(k, l)| l.len() != lattice.width(k))
        {
            return shape("density does not match the lattice");
        }
        Ok(())
    }

    /// Flags whether `max α ≤ threshold` over the lattice support.
    pub fn bound_check(&self, threshold: f64) -> BoundCheck {
        BoundCheck::from_values(self.values(), threshold)
    }

    /// Writes `time,id,atom,alpha,logistic_ratio` rows (no logistic ratio on lattices).
    pub fn write_csv<W: Write>(&self, grid: &UGrid, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for (k, level) in self.alpha.iter().enumerate() {
            for (i, node) in level.iter().enumerate() {
                for (a, &alpha) in node.iter().enumerate() {
                    out.serialize(DensityRow {
                        time: k as f64,
                        id: i,
                        atom: grid.atoms()[a],
                        alpha,
                        logistic_ratio: None,
                    })?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds the lattice density from the conditional law of the information
/// variable at each terminal node (`g_map[node][atom]`), aggregating
/// backwards to `P(G = u | F_k)` and dividing by the prior weights.
///
/// Rejects inputs violating the density hypothesis: any atom with zero
/// conditional mass, or conditional laws whose implied prior differs from
/// `grid.weights()`.
pub fn lattice_density(lattice: &FiltrationLattice, g_map: &[Vec<f64>], grid: &UGrid) -> Result<LatticeDensity> {
    build(lattice, g_map, grid, NullMass::Reject)
}

/// As [`lattice_density`] but lets atoms carry zero conditional mass on part
/// of the lattice (e.g. information that reveals the terminal node). Every
/// atom-wise consequence stays exact; insider values are undefined where
/// `α = 0`.
pub fn lattice_density_allowing_null(
    lattice: &FiltrationLattice,
    g_map: &[Vec<f64>],
    grid: &UGrid,
) -> Result<LatticeDensity> {
    build(lattice, g_map, grid, NullMass::Allow)
}

/// Mixes every conditional law with the prior at the given rate so that no
/// atom keeps zero conditional mass. Mixing with the prior (rather than the
/// uniform law) leaves the implied unconditional law unchanged.
pub fn smooth_conditional_laws(g_map: &[Vec<f64>], grid: &UGrid, rate: f64) -> Vec<Vec<f64>> {
    g_map
        .iter()
        .map(|law| {
            law.iter()
                .zip(grid.weights())
                .map(|(q, w)| (1.0 - rate) * q + rate * w)
                .collect()
        })
        .collect()
}

/// Default smoothing rate for degenerate conditional laws.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

fn build(lattice: &FiltrationLattice, g_map: &[Vec<f64>], grid: &UGrid, null: NullMass) -> Result<LatticeDensity> {
    let n = lattice.n_steps();
    let n_atoms = grid.len();
    if g_map.len() != lattice.width(n) {
        return shape(format!(
            "{} conditional laws for {} terminal nodes",
            g_map.len(),
            lattice.width(n)
        ));
    }
    for (i, law) in g_map.iter().enumerate() {
        if law.len() != n_atoms {
            return shape(format!(
                "conditional law at terminal node {i} has {} atoms, grid has {n_atoms}",
                law.len()
            ));
        }
        if law.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
            return Err(Error::Domain(format!(
                "conditional law at terminal node {i} has a negative or non-finite entry"
            )));
        }
        let total: f64 = law.iter().sum();
        if (total - 1.0).abs() > LAW_TOL {
            return Err(Error::Domain(format!(
                "conditional law at terminal node {i} sums to {total}"
            )));
        }
    }

    let mut cond: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n + 1];
    cond[n] = g_map.to_vec();
    for k in (0..n).rev() {
        cond[k] = lattice
            .level(k)
            .iter()
            .map(|node| {
                let mut law = vec![0.0; n_atoms];
                for tr in &node.children {
                    for (acc, q) in law.iter_mut().zip(&cond[k + 1][tr.child]) {
                        *acc += tr.prob * q;
                    }
                }
                law
            })
            .collect();
    }

    for (a, (&implied, &w)) in cond[0][0].iter().zip(grid.weights()).enumerate() {
        if (implied - w).abs() > LAW_TOL {
            return Err(Error::EquivalenceViolation(format!(
                "implied prior of atom {a} is {implied}, grid weight is {w}"
            )));
        }
    }

    if null == NullMass::Reject {
        for (k, level) in cond.iter().enumerate() {
            for (i, law) in level.iter().enumerate() {
                if let Some(a) = law.iter().position(|&q| q <= 0.0) {
                    return Err(Error::EquivalenceViolation(format!(
                        "atom {a} has zero conditional mass at node ({k}, {i})"
                    )));
                }
            }
        }
    }

    let alpha = cond
        .into_iter()
        .map(|level| {
            level
                .into_iter()
                .map(|law| law.iter().zip(grid.weights()).map(|(q, w)| q / w).collect())
                .collect()
        })
        .collect();
    Ok(LatticeDensity { alpha, n_atoms })
}

/// Diagnostics of a lattice density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    /// `max |Σ_i α(node, u_i) w_i − 1|`
    pub max_normalization_error: f64,
    /// `max |E[α_{k+1}(u) | F_k] − α_k(u)|`
    pub max_martingale_defect: f64,
    /// `max |α_0(u) − 1|`
    pub max_initial_defect: f64,
    pub min_alpha: f64,
    pub max_alpha: f64,
}

pub fn verify_lattice_density(
    density: &LatticeDensity,
    lattice: &FiltrationLattice,
    grid: &UGrid,
) -> Result<DensityReport> {
    density.check_shape(lattice, grid)?;
    let mut norm: f64 = 0.0;
    let mut mart: f64 = 0.0;
    for k in 0..=lattice.n_steps() {
        for i in 0..lattice.width(k) {
            let total: f64 = density.at(k, i).iter().zip(grid.weights()).map(|(a, w)| a * w).sum();
            norm = norm.max((total - 1.0).abs());
        }
    }
    for a in 0..grid.len() {
        let process = density.atom_process(a);
        for k in 0..lattice.n_steps() {
            let cont = lattice.expect_next(k, process.level(k + 1));
            for (c, x) in cont.iter().zip(process.level(k)) {
                mart = mart.max((c - x).abs());
            }
        }
    }
    let initial = density.at(0, 0).iter().map(|a| (a - 1.0).abs()).fold(0.0, f64::max);
    Ok(DensityReport {
        max_normalization_error: norm,
        max_martingale_defect: mart,
        max_initial_defect: initial,
        min_alpha: density.values().fold(f64::INFINITY, f64::min),
        max_alpha: density.values().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_binomial;

    fn one_step() -> (FiltrationLattice, UGrid) {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        // atoms ordered: 0.5 (down), 2 (up)
        let grid = UGrid::new(vec![0.5, 2.0], vec![0.5, 0.5]).unwrap();
        (lat, grid)
    }

    #[test]
    fn independent_information_gives_unit_density() {
        let lat = build_binomial(1.0, 1.2, 0.9, 0.3, 3).unwrap();
        let grid = UGrid::new(vec![-1.0, 0.0, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let g_map = vec![grid.weights().to_vec(); lat.width(3)];
        let d = lattice_density(&lat, &g_map, &grid).unwrap();
        assert!(d.values().all(|a| (a - 1.0).abs() < 1e-15));
        let report = verify_lattice_density(&d, &lat, &grid).unwrap();
        assert!(report.max_martingale_defect < 1e-15);
        assert!(report.max_normalization_error < 1e-15);
    }

    #[test]
    fn revealing_terminal_state_is_rejected_then_smoothed() {
        let (lat, grid) = one_step();
        // terminal node 0 is the down state 0.5, node 1 the up state 2
        let reveal = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let err = lattice_density(&lat, &reveal, &grid).unwrap_err();
        assert!(matches!(err, Error::EquivalenceViolation(_)));

        let soft = vec![vec![0.99, 0.01], vec![0.01, 0.99]];
        let d = lattice_density(&lat, &soft, &grid).unwrap();
        assert!((d.alpha(1, 1, 1) - 1.98).abs() < 1e-15);
        assert!((d.alpha(1, 1, 0) - 0.02).abs() < 1e-15);
        for i in 0..2 {
            let total: f64 = d.at(1, i).iter().zip(grid.weights()).map(|(a, w)| a * w).sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_density_when_null_mass_is_allowed() {
        let (lat, grid) = one_step();
        let reveal = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = lattice_density_allowing_null(&lat, &reveal, &grid).unwrap();
        assert_eq!(d.at(0, 0), &[1.0, 1.0]);
        assert_eq!(d.at(1, 1), &[0.0, 2.0]);
        assert_eq!(d.at(1, 0), &[2.0, 0.0]);
    }

    #[test]
    fn smoothing_preserves_prior_and_positivity() {
        let (lat, grid) = one_step();
        let reveal = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let smooth = smooth_conditional_laws(&reveal, &grid, DEFAULT_SMOOTHING);
        let d = lattice_density(&lat, &smooth, &grid).unwrap();
        assert!(d.values().all(|a| a > 0.0));
        let report = verify_lattice_density(&d, &lat, &grid).unwrap();
        assert!(report.max_martingale_defect <= 1e-12);
    }

    #[test]
    fn prior_mismatch_is_an_equivalence_violation() {
        let (lat, _) = one_step();
        let grid = UGrid::new(vec![0.5, 2.0], vec![0.3, 0.7]).unwrap();
        let g_map = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert!(matches!(
            lattice_density(&lat, &g_map, &grid),
            Err(Error::EquivalenceViolation(_))
        ));
    }

    #[test]
    fn bound_check_on_unit_density() {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 2).unwrap();
        let d = LatticeDensity::independent(&lat, 4);
        let b = d.bound_check(10.0);
        assert!(b.bounded);
        assert_eq!(b.max_alpha, 1.0);
    }

    #[test]
    fn csv_export_has_one_row_per_entry() {
        let (lat, grid) = one_step();
        let d = lattice_density(&lat, &[vec![0.99, 0.01], vec![0.01, 0.99]], &grid).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&grid, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2);
        assert!(text.starts_with("time,id,atom,alpha,logistic_ratio"));
    }
}
