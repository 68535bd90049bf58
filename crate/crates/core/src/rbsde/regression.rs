use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::util::chunked;

/// Ridge penalty used when the normal equations are not positive definite.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Spread below which a regressor slice is treated as constant.
const DEGENERATE_SPREAD: f64 = 1e-12;

/// Regression basis: monomials `1, x, …, x^degree` of the standardised state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    /// Multiply every basis function by the atom's density `α_k(u)`, so the
    /// projection can represent `α_k(u)·g(S_k)` exactly. Used by the
    /// parametrised route, whose targets carry the density factor.
    #[serde(default)]
    pub density_scaled: bool,
    /// Exercise only where the barrier is positive, deciding with a fit
    /// restricted to those paths.
    #[serde(default = "yes")]
    pub itm_only: bool,
}

fn yes() -> bool {
    true
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec {
            degree: 3,
            density_scaled: false,
            itm_only: true,
        }
    }
}

impl BasisSpec {
    pub fn monomials(degree: usize) -> Self {
        BasisSpec {
            degree,
            ..Self::default()
        }
    }

    pub fn size(&self) -> usize {
        self.degree + 1
    }
}

/// Least-squares projection onto `scale_p · φ_j(x_p)` for one time slice,
/// optionally weighted. The Gram matrix is factorised once and reused for
/// every target.
pub struct Projection<'a> {
    x: Vec<f64>,
    scale: Option<&'a [f64]>,
    weights: Option<&'a [f64]>,
    degree: usize,
    factor: Factor,
    /// Whether the ridge fallback was needed.
    pub ridged: bool,
}

enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    /// Pseudo-inverse for the pathological case where even the ridged
    /// system fails to factorise.
    Pinv(DMatrix<f64>),
}

impl<'a> Projection<'a> {
    /// Fits on regressor `x` (one value per path). A constant `x` reduces the
    /// basis to the intercept.
    pub fn fit(
        x: &[f64],
        basis: BasisSpec,
        scale: Option<&'a [f64]>,
        weights: Option<&'a [f64]>,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return shape("empty regression slice");
        }
        for (name, v) in [("scale", scale), ("weights", weights)] {
            if let Some(v) = v {
                if v.len() != n {
                    return shape(format!("{name} has {} entries, regressor has {n}", v.len()));
                }
            }
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let degenerate = !(sd > DEGENERATE_SPREAD * mean.abs().max(1.0));
        let degree = if degenerate { 0 } else { basis.degree.min(n.saturating_sub(1)) };
        let x: Vec<f64> = if degenerate {
            vec![0.0; n]
        } else {
            x.iter().map(|v| (v - mean) / sd).collect()
        };
        let mut proj = Projection {
            x,
            scale,
            weights,
            degree,
            factor: Factor::Pinv(DMatrix::zeros(0, 0)),
            ridged: false,
        };
        let m = degree + 1;
        let parts = chunked(n, |r| {
            let mut g = vec![0.0; m * m];
            let mut f = vec![0.0; m];
            let mut wsum = 0.0;
            for p in r {
                proj.features(p, &mut f);
                let w = proj.weight(p);
                wsum += w;
                for i in 0..m {
                    for j in 0..=i {
                        g[i * m + j] += w * f[i] * f[j];
                    }
                }
            }
            (g, wsum)
        });
        let mut gram = DMatrix::zeros(m, m);
        let mut wsum = 0.0;
        for (g, w) in parts {
            wsum += w;
            for i in 0..m {
                for j in 0..=i {
                    gram[(i, j)] += g[i * m + j];
                }
            }
        }
        if !(wsum > 0.0) {
            return shape("regression weights sum to zero");
        }
        for i in 0..m {
            for j in 0..i {
                gram[(j, i)] = gram[(i, j)];
            }
        }
        gram /= wsum;
        proj.factor = match gram.clone().cholesky() {
            Some(c) if c.l().diagonal().iter().all(|d| *d > 1e-7) => Factor::Cholesky(c),
            _ => {
                log::warn!("regression normal equations ill-conditioned; using ridge with lambda {RIDGE_LAMBDA}");
                proj.ridged = true;
                let ridged = &gram + DMatrix::identity(m, m) * RIDGE_LAMBDA;
                match ridged.clone().cholesky() {
                    Some(c) => Factor::Cholesky(c),
                    None => Factor::Pinv(
                        ridged
                            .pseudo_inverse(1e-14)
                            .unwrap_or_else(|_| DMatrix::zeros(m, m)),
                    ),
                }
            }
        };
        Ok(proj)
    }

    fn weight(&self, p: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[p])
    }

    fn features(&self, p: usize, out: &mut [f64]) {
        let s = self.scale.map_or(1.0, |s| s[p]);
        let mut v = s;
        for f in out.iter_mut() {
            *f = v;
            v *= self.x[p];
        }
    }

    pub fn basis_size(&self) -> usize {
        self.degree + 1
    }

    /// Regression coefficients for `target`.
    pub fn coefficients(&self, target: &[f64]) -> Result<DVector<f64>> {
        let n = self.x.len();
        if target.len() != n {
            return shape(format!("target has {} entries, regressor has {n}", target.len()));
        }
        let m = self.degree + 1;
        let parts = chunked(n, |r| {
            let mut b = vec![0.0; m];
            let mut f = vec![0.0; m];
            let mut wsum = 0.0;
            for p in r {
                self.features(p, &mut f);
                let w = self.weight(p);
                wsum += w;
                for i in 0..m {
                    b[i] += w * f[i] * target[p];
                }
            }
            (b, wsum)
        });
        let mut rhs = DVector::zeros(m);
        let mut wsum = 0.0;
        for (b, w) in parts {
            wsum += w;
            for i in 0..m {
                rhs[i] += b[i];
            }
        }
        rhs /= wsum;
        Ok(match &self.factor {
            Factor::Cholesky(c) => c.solve(&rhs),
            Factor::Pinv(p) => p * rhs,
        })
    }

    /// Fitted values `Ê[target | x]` at every path.
    pub fn project(&self, target: &[f64]) -> Result<Vec<f64>> {
        let beta = self.coefficients(target)?;
        let m = self.degree + 1;
        let mut f = vec![0.0; m];
        Ok((0..self.x.len())
            .map(|p| {
                self.features(p, &mut f);
                f.iter().zip(beta.iter()).map(|(a, b)| a * b).sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_a_cubic() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 20.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v * v).collect();
        let p = Projection::fit(&x, BasisSpec::default(), None, None).unwrap();
        let fit = p.project(&y).unwrap();
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
        }
        assert!(!p.ridged);
    }

    #[test]
    fn constant_regressor_gives_mean() {
        let x = vec![3.0; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = Projection::fit(&x, BasisSpec::default(), None, None).unwrap();
        assert_eq!(p.basis_size(), 1);
        assert!(p.project(&y).unwrap().iter().all(|v| (v - 4.5).abs() < 1e-12));
        let w: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
        let p = Projection::fit(&x, BasisSpec::default(), None, Some(&w)).unwrap();
        assert!(p.project(&y).unwrap().iter().all(|v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn scaled_basis_represents_scaled_targets() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let s: Vec<f64> = x.iter().map(|v| (0.3 * v).exp()).collect();
        let y: Vec<f64> = x.iter().zip(&s).map(|(v, a)| a * (2.0 + v)).collect();
        let p = Projection::fit(&x, BasisSpec::default(), Some(&s), None).unwrap();
        for (a, b) in p.project(&y).unwrap().iter().zip(&y) {
            assert!((a - b).abs() < 1e-8 * b.abs());
        }
    }

    #[test]
    fn duplicated_columns_fall_back_to_ridge() {
        // two distinct values only: cubic basis is rank 2
        let x: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v).collect();
        let p = Projection::fit(&x, BasisSpec::default(), None, None).unwrap();
        assert!(p.ridged);
        for (a, b) in p.project(&y).unwrap().iter().zip(&y) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
