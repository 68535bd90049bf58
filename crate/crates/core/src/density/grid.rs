use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{domain, Result};

/// Weight-sum tolerance of a [`UGrid`].
pub const WEIGHT_TOL: f64 = 1e-12;

/// Discretised law of the information variable: strictly increasing atoms
/// with strictly positive weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UGrid {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

/// How the atoms of a Gaussian prior are placed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Mid-quantiles `(i + 1/2)/n` with equal weights.
    #[default]
    Quantile,
    /// Gauss–Hermite nodes and weights.
    GaussHermite,
}

impl UGrid {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return domain(format!(
                "grid needs matching non-empty atoms and weights ({} vs {})",
                atoms.len(),
                weights.len()
            ));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return domain("grid atoms must be finite");
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return domain("grid atoms must be strictly increasing");
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return domain("grid weights must be strictly positive");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return domain(format!("grid weights sum to {total}, expected 1"));
        }
        Ok(UGrid { atoms, weights })
    }

    /// Single atom carrying all the mass.
    pub fn point(atom: f64) -> Self {
        UGrid {
            atoms: vec![atom],
            weights: vec![1.0],
        }
    }

    /// Grid for a centred normal law with the given variance.
    pub fn gaussian(variance: f64, n: usize, kind: GridKind) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return domain(format!("variance must be positive, got {variance}"));
        }
        let Some(size) = NonZeroUsize::new(n) else {
            return domain("grid needs at least one atom");
        };
        match kind {
            GridKind::Quantile => {
                let normal = Normal::new(0.0, variance.sqrt()).expect("positive sd");
                let atoms = (0..n)
                    .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
                    .collect();
                Self::new(atoms, vec![1.0 / n as f64; n])
            }
            GridKind::GaussHermite => {
                let rule = GaussHermite::new(size);
                let scale = (2.0 * variance).sqrt();
                let norm = std::f64::consts::PI.sqrt();
                let mut pairs: Vec<(f64, f64)> = rule
                    .as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (scale * x, w / norm))
                    .collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let total: f64 = pairs.iter().map(|p| p.1).sum();
                let (atoms, weights) = pairs.into_iter().map(|(x, w)| (x, w / total)).unzip();
                Self::new(atoms, weights)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    /// `Σ_i f(u_i) w_i`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.iter().map(|(u, w)| f(u) * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_inputs() {
        assert!(UGrid::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_ok());
        assert!(UGrid::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(UGrid::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(UGrid::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(UGrid::new(vec![], vec![]).is_err());
    }

    #[test]
    fn quantile_grid_moments() {
        let g = UGrid::gaussian(2.0, 32, GridKind::Quantile).unwrap();
        assert_eq!(g.len(), 32);
        assert!(g.integrate(|u| u).abs() < 1e-12);
        // mid-quantile grids under-represent the tails a little
        let var = g.integrate(|u| u * u);
        assert!(var < 2.0 && var > 1.85, "{var}");
    }

    #[test]
    fn hermite_grid_is_exact_on_moments() {
        let g = UGrid::gaussian(2.0, 16, GridKind::GaussHermite).unwrap();
        assert!((g.integrate(|u| u * u) - 2.0).abs() < 1e-10);
        assert!((g.integrate(|u| u.powi(4)) - 12.0).abs() < 1e-9);
    }
}
