use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Asset dynamics driven by the Brownian motion `B`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    /// `dS = μS dt + σS dB`, simulated exactly in log space.
    #[default]
    Geometric,
    /// `dS = μ dt + σ dB`.
    Arithmetic,
}

/// Market parameters for path simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub horizon: f64,
    #[serde(default)]
    pub dynamics: Dynamics,
}

impl MarketModel {
    pub fn geometric(s0: f64, mu: f64, sigma: f64, horizon: f64) -> Self {
        MarketModel {
            s0,
            mu,
            sigma,
            horizon,
            dynamics: Dynamics::Geometric,
        }
    }

    pub fn arithmetic(s0: f64, mu: f64, sigma: f64, horizon: f64) -> Self {
        MarketModel {
            s0,
            mu,
            sigma,
            horizon,
            dynamics: Dynamics::Arithmetic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.s0, self.mu, self.sigma, self.horizon].iter().all(|x| x.is_finite());
        if !finite {
            return domain("market parameters must be finite");
        }
        if !(self.horizon > 0.0) {
            return domain(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.sigma < 0.0 {
            return domain(format!("volatility must be nonnegative, got {}", self.sigma));
        }
        if self.dynamics == Dynamics::Geometric && !(self.s0 > 0.0) {
            return domain(format!("geometric dynamics need s0 > 0, got {}", self.s0));
        }
        Ok(())
    }

    /// State at time `t` given the Brownian value `b`.
    pub fn state(&self, t: f64, b: f64) -> f64 {
        match self.dynamics {
            Dynamics::Geometric => {
                self.s0 * ((self.mu - 0.5 * self.sigma * self.sigma) * t + self.sigma * b).exp()
            }
            Dynamics::Arithmetic => self.s0 + self.mu * t + self.sigma * b,
        }
    }
}

/// Simulated Brownian paths and the asset driven by them. Storage is
/// time-major: `brownian()[k][p]` is `B` at step `k` on path `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    model: MarketModel,
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
    brownian: Vec<Vec<f64>>,
    state: Vec<Vec<f64>>,
}

impl PathEnsemble {
    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.model.horizon
        } else {
            k as f64 * self.dt
        }
    }

    pub fn brownian(&self) -> &[Vec<f64>] {
        &self.brownian
    }

    pub fn state(&self) -> &[Vec<f64>] {
        &self.state
    }

    /// `ΔB_k = B_{k+1} − B_k` on every path.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        self.brownian[k + 1]
            .iter()
            .zip(&self.brownian[k])
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Applies `f(t, S)` to every retained point, time-major.
    pub fn map_state(&self, f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<Vec<f64>> {
        self.state
            .iter()
            .enumerate()
            .map(|(k, level)| {
                let t = self.time(k);
                level.iter().map(|&s| f(t, s)).collect()
            })
            .collect()
    }
}

/// Simulates `n_paths` Brownian paths on `n_steps` equal steps over the
/// model horizon. Path `p` draws its increments from its own ChaCha stream
/// (`seed`, stream `p`), so the ensemble does not depend on the thread count.
pub fn simulate_paths(model: &MarketModel, n_paths: usize, n_steps: usize, seed: u64) -> Result<PathEnsemble> {
    model.validate()?;
    if n_paths < 2 {
        return domain(format!("need at least 2 paths, got {n_paths}"));
    }
    if n_steps < 1 {
        return domain("need at least one time step");
    }
    let dt = model.horizon / n_steps as f64;
    let sd = dt.sqrt();
    let increments: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            (0..n_steps)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sd * z
                })
                .collect()
        })
        .collect();
    let mut brownian = vec![vec![0.0; n_paths]; n_steps + 1];
    for k in 0..n_steps {
        let (done, rest) = brownian.split_at_mut(k + 1);
        for (p, b) in rest[0].iter_mut().enumerate() {
            *b = done[k][p] + increments[p][k];
        }
    }
    let mut ensemble = PathEnsemble {
        model: *model,
        n_paths,
        n_steps,
        dt,
        seed,
        brownian,
        state: Vec::new(),
    };
    ensemble.state = (0..=n_steps)
        .map(|k| {
            let t = ensemble.time(k);
            ensemble.brownian[k].iter().map(|&b| model.state(t, b)).collect()
        })
        .collect();
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::Estimate;

    #[test]
    fn constant_state_without_volatility_or_drift() {
        let m = MarketModel::geometric(100.0, 0.0, 0.0, 1.0);
        let e = simulate_paths(&m, 50, 10, 3).unwrap();
        assert!(e.state().iter().flatten().all(|&s| s == 100.0));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let m = MarketModel::geometric(100.0, 0.05, 0.2, 1.0);
        let a = simulate_paths(&m, 300, 12, 42).unwrap();
        let b = simulate_paths(&m, 300, 12, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_paths(&m, 300, 12, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn increments_have_brownian_moments() {
        let m = MarketModel::geometric(1.0, 0.0, 0.3, 2.0);
        let e = simulate_paths(&m, 20_000, 4, 9).unwrap();
        assert!(e.brownian()[0].iter().all(|&b| b == 0.0));
        for k in 0..4 {
            let db = e.increment(k);
            let mean = Estimate::from_slice(&db);
            assert!(mean.z_score(0.0) < 4.0);
            let sq: Vec<f64> = db.iter().map(|x| x * x).collect();
            let var = Estimate::from_slice(&sq);
            assert!(var.z_score(e.dt()) < 4.0);
        }
    }

    #[test]
    fn geometric_terminal_mean() {
        let m = MarketModel::geometric(100.0, 0.1, 0.25, 1.0);
        let e = simulate_paths(&m, 100_000, 5, 1).unwrap();
        let est = Estimate::from_slice(&e.state()[5]);
        assert!(est.z_score(100.0 * 0.1f64.exp()) < 3.0, "{est:?}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let m = MarketModel::geometric(100.0, 0.0, 0.2, 1.0);
        assert!(simulate_paths(&m, 1, 10, 0).is_err());
        assert!(simulate_paths(&m, 10, 0, 0).is_err());
        assert!(simulate_paths(&MarketModel::geometric(-1.0, 0.0, 0.2, 1.0), 10, 2, 0).is_err());
        assert!(simulate_paths(&MarketModel::geometric(1.0, 0.0, -0.2, 1.0), 10, 2, 0).is_err());
    }
}
