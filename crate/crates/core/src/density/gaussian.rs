use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use super::{BoundCheck, GridKind, UGrid};
use crate::error::{domain, Result};

/// Default number of Gauss–Legendre nodes for normalisation checks.
pub const QUADRATURE_NODES: usize = 200;

/// Slack allowed when a time computed as `k · dt` overshoots the horizon.
const TIME_SLACK: f64 = 1e-9;

/// A density process that is a function of `(t, B_t)` for each atom `u`,
/// optionally with its logistic ratio `β_t(u)/α_t(u)`.
pub trait BrownianDensity: Sync {
    fn alpha(&self, t: f64, b: f64, u: f64) -> f64;

    /// `β/α`, the information drift of the Brownian motion; `None` when unknown.
    fn logistic_ratio(&self, t: f64, b: f64, u: f64) -> Option<f64>;
}

/// Information independent of the market: `α ≡ 1`, `β/α ≡ 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Independent;

impl BrownianDensity for Independent {
    fn alpha(&self, _t: f64, _b: f64, _u: f64) -> f64 {
        1.0
    }

    fn logistic_ratio(&self, _t: f64, _b: f64, _u: f64) -> Option<f64> {
        Some(0.0)
    }
}

/// Noisy information about the Brownian endpoint: `G = B_T + X` with
/// `X ~ N(0, ε)` independent of the market, so `G ~ N(0, T + ε)` and
///
/// ```text
/// α_t(u) = sqrt((T+ε)/(T−t+ε)) · exp(−(u−B_t)²/(2(T−t+ε)) + u²/(2(T+ε)))
/// β_t(u)/α_t(u) = (u − B_t)/(T − t + ε)
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianInfoModel {
    horizon: f64,
    noise_var: f64,
}

impl GaussianInfoModel {
    pub fn new(horizon: f64, noise_var: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return domain(format!(
                "noise variance must be positive (got {noise_var}): with zero noise the conditional \
                 law of G at maturity is singular and the density hypothesis fails"
            ));
        }
        Ok(GaussianInfoModel { horizon, noise_var })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Variance `T + ε` of the prior law of `G`.
    pub fn prior_variance(&self) -> f64 {
        self.horizon + self.noise_var
    }

    pub fn grid(&self, n: usize, kind: GridKind) -> Result<UGrid> {
        UGrid::gaussian(self.prior_variance(), n, kind)
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t > self.horizon + TIME_SLACK {
            return domain(format!("time {t} outside [0, {}]", self.horizon));
        }
        Ok(t.min(self.horizon))
    }

    fn remaining(&self, t: f64) -> f64 {
        self.horizon - t.min(self.horizon) + self.noise_var
    }

    fn alpha_unchecked(&self, t: f64, b: f64, u: f64) -> f64 {
        let v = self.remaining(t);
        let prior = self.prior_variance();
        (prior / v).sqrt() * (-(u - b).powi(2) / (2.0 * v) + u * u / (2.0 * prior)).exp()
    }

    fn ratio_unchecked(&self, t: f64, b: f64, u: f64) -> f64 {
        (u - b) / self.remaining(t)
    }
}

impl BrownianDensity for GaussianInfoModel {
    fn alpha(&self, t: f64, b: f64, u: f64) -> f64 {
        self.alpha_unchecked(t, b, u)
    }

    fn logistic_ratio(&self, t: f64, b: f64, u: f64) -> Option<f64> {
        Some(self.ratio_unchecked(t, b, u))
    }
}

/// Closed-form `α_t(u)` of the noisy-endpoint model at Brownian value `b_t`.
pub fn gaussian_density(model: &GaussianInfoModel, b_t: f64, t: f64, u: f64) -> Result<f64> {
    let t = model.check_time(t)?;
    Ok(model.alpha_unchecked(t, b_t, u))
}

/// `β_t(u)/α_t(u) = (u − B_t)/(T − t + ε)`.
pub fn gaussian_logistic_ratio(model: &GaussianInfoModel, b_t: f64, t: f64, u: f64) -> Result<f64> {
    let t = model.check_time(t)?;
    Ok(model.ratio_unchecked(t, b_t, u))
}

/// `|∫ α_t(u) dP^G(u) − 1|` by Gauss–Legendre quadrature on
/// `[−6√(T+ε), 6√(T+ε)]`.
pub fn gaussian_normalization_error(model: &GaussianInfoModel, b_t: f64, t: f64, nodes: usize) -> Result<f64> {
    let t = model.check_time(t)?;
    let Some(deg) = NonZeroUsize::new(nodes) else {
        return domain("quadrature needs at least one node");
    };
    let prior = model.prior_variance();
    let half = 6.0 * prior.sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * prior).sqrt();
    let rule = GaussLegendre::new(deg);
    let integral = rule.integrate(-half, half, |u| {
        model.alpha_unchecked(t, b_t, u) * norm * (-u * u / (2.0 * prior)).exp()
    });
    Ok((integral - 1.0).abs())
}

/// Grid scan of `α_t(u)` over `t ∈ [0, T]`, `u ∈ u_range`, `B_t ∈ b_range`
/// with `points` samples per axis; reports the maximum against `threshold`.
pub fn gaussian_bound_scan(
    model: &GaussianInfoModel,
    u_range: (f64, f64),
    b_range: (f64, f64),
    points: usize,
    threshold: f64,
) -> BoundCheck {
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if points < 2 {
            return vec![lo];
        }
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect()
    };
    let ts = axis((0.0, model.horizon));
    let us = axis(u_range);
    let bs = axis(b_range);
    let mut values = Vec::with_capacity(ts.len() * us.len() * bs.len());
    for &t in &ts {
        for &u in &us {
            values.extend(bs.iter().map(|&b| model.alpha_unchecked(t, b, u)));
        }
    }
    BoundCheck::from_values(values.into_iter(), threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_density_is_one() {
        let m = GaussianInfoModel::new(1.0, 0.7).unwrap();
        for u in [-3.0, -0.5, 0.0, 1.3, 4.0] {
            assert!((gaussian_density(&m, 0.0, 0.0, u).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn midpoint_value() {
        let m = GaussianInfoModel::new(1.0, 1.0).unwrap();
        let a = gaussian_density(&m, 0.0, 0.5, 0.0).unwrap();
        assert!((a - (2.0f64 / 1.5).sqrt()).abs() < 1e-15);
        assert!((a - 1.154_700_538_379_251_5).abs() < 1e-15);
    }

    #[test]
    fn maturity_value() {
        let m = GaussianInfoModel::new(1.0, 0.5).unwrap();
        for u in [-1.0, 0.0, 0.8] {
            let a = gaussian_density(&m, u, 1.0, u).unwrap();
            let expected = (1.5f64 / 0.5).sqrt() * (u * u / 3.0).exp();
            assert!((a - expected).abs() < 1e-14 * expected);
        }
    }

    #[test]
    fn rejects_times_past_horizon_and_zero_noise() {
        let m = GaussianInfoModel::new(1.0, 1.0).unwrap();
        assert!(gaussian_density(&m, 0.0, 1.5, 0.0).is_err());
        assert!(gaussian_density(&m, 0.0, -0.1, 0.0).is_err());
        let err = GaussianInfoModel::new(1.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("density hypothesis"));
    }

    #[test]
    fn logistic_ratio_values() {
        let m = GaussianInfoModel::new(1.0, 1.0).unwrap();
        assert_eq!(gaussian_logistic_ratio(&m, 0.3, 0.4, 0.3).unwrap(), 0.0);
        assert!((gaussian_logistic_ratio(&m, 0.0, 0.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn logistic_ratio_is_log_derivative() {
        let m = GaussianInfoModel::new(1.0, 1.0).unwrap();
        let h = 1e-5;
        for &(t, b, u) in &[(0.2, 0.1, 1.0), (0.7, -0.8, 0.3), (0.95, 1.2, -2.0)] {
            let up = gaussian_density(&m, b + h, t, u).unwrap().ln();
            let dn = gaussian_density(&m, b - h, t, u).unwrap().ln();
            let fd = (up - dn) / (2.0 * h);
            let exact = gaussian_logistic_ratio(&m, b, t, u).unwrap();
            assert!((fd - exact).abs() < 1e-6, "{fd} vs {exact}");
        }
    }

    #[test]
    fn quadrature_normalisation() {
        let m = GaussianInfoModel::new(1.0, 1.0).unwrap();
        for &(t, b) in &[(0.0, 0.0), (0.5, 1.0), (1.0, -2.0)] {
            let err = gaussian_normalization_error(&m, b, t, QUADRATURE_NODES).unwrap();
            assert!(err < 1e-6, "t={t} b={b}: {err}");
        }
    }

    #[test]
    fn bound_scan_grows_as_noise_shrinks() {
        let wide = GaussianInfoModel::new(1.0, 1.0).unwrap();
        let narrow = GaussianInfoModel::new(1.0, 0.01).unwrap();
        let a = gaussian_bound_scan(&wide, (-3.0, 3.0), (-3.0, 3.0), 61, 100.0);
        let b = gaussian_bound_scan(&narrow, (-3.0, 3.0), (-3.0, 3.0), 61, 100.0);
        assert!(a.bounded);
        // peak at t = T, u = B_T = ±3
        let peak = 2.0f64.sqrt() * (9.0f64 / 4.0).exp();
        assert!((a.max_alpha - peak).abs() < 1e-12 * peak);
        assert!(!b.bounded);
        assert!(b.max_alpha > a.max_alpha);
    }

    #[test]
    fn independent_density() {
        assert_eq!(Independent.alpha(0.3, 1.0, 2.0), 1.0);
        assert_eq!(Independent.logistic_ratio(0.3, 1.0, 2.0), Some(0.0));
    }
}
