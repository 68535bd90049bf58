//! Insider valuation routes on path ensembles.
//!
//! For an atom `u` of the information variable three routes estimate the
//! insider value `Ŷ(u)`:
//!
//! * parametrised + transform: solve with barrier `L α(u)` and terminal
//!   `ξ α_N(u)`, then divide by `α`;
//! * enlarged filtration: solve with the original payoff and driver
//!   `(β/α)(u)·Z`, the information drift of `B` under the enlarged filtration;
//! * Girsanov: solve the driver-free equation under the measure with
//!   likelihood `α(u)`, i.e. with every regression weighted by the density.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::paths::PathEnsemble;
use super::regression::{BasisSpec, Projection};
use super::solver::{check_process, decision, reflect_backward, Payoff, RBSDESolution, StepOutput};
use crate::density::{BrownianDensity, UGrid};
use crate::error::{domain, Error, Result};
use crate::util::{par_sum, Estimate};

/// Densities below this are treated as degenerate when dividing by `α`.
pub const MIN_ALPHA: f64 = 1e-300;

/// Fraction of the path count below which the effective sample size of the
/// Girsanov weights triggers a warning.
pub const ESS_WARN_FRACTION: f64 = 0.05;

/// `α_k(u)` on every path.
pub fn alpha_slice(paths: &PathEnsemble, density: &dyn BrownianDensity, k: usize, u: f64) -> Vec<f64> {
    let t = paths.time(k);
    paths.brownian()[k].iter().map(|&b| density.alpha(t, b, u)).collect()
}

/// `(β/α)_k(u)` on every path, if the density provides it.
pub fn ratio_slice(paths: &PathEnsemble, density: &dyn BrownianDensity, k: usize, u: f64) -> Option<Vec<f64>> {
    let t = paths.time(k);
    paths.brownian()[k]
        .iter()
        .map(|&b| density.logistic_ratio(t, b, u))
        .collect()
}

/// The density of one atom evaluated on every retained point of an
/// ensemble, shared by the solvers of that atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomDensity {
    pub u: f64,
    /// Grid index of the atom, used in error reports.
    pub atom: usize,
    /// `α_k(u)` per `[step][path]`.
    pub alpha: Vec<Vec<f64>>,
    /// `(β/α)_k(u)` per `[step][path]`, when the density provides it.
    pub ratio: Option<Vec<Vec<f64>>>,
}

impl AtomDensity {
    pub fn evaluate(paths: &PathEnsemble, density: &dyn BrownianDensity, u: f64, atom: usize) -> Self {
        let steps = 0..=paths.n_steps();
        let alpha = steps.clone().map(|k| alpha_slice(paths, density, k, u)).collect();
        let ratio = steps.map(|k| ratio_slice(paths, density, k, u)).collect();
        AtomDensity { u, atom, alpha, ratio }
    }

    fn check_positive(&self) -> Result<()> {
        for (k, alpha) in self.alpha.iter().enumerate() {
            check_alpha(alpha, k, self.atom)?;
        }
        Ok(())
    }

    fn check_shape(&self, paths: &PathEnsemble) -> Result<()> {
        check_process(paths, &self.alpha, "density")?;
        if let Some(r) = &self.ratio {
            check_process(paths, r, "logistic ratio")?;
        }
        Ok(())
    }
}

fn check_alpha(alpha: &[f64], k: usize, atom: usize) -> Result<()> {
    match alpha.iter().position(|a| !(*a >= MIN_ALPHA)) {
        Some(p) => Err(Error::DegenerateDensity {
            alpha: alpha[p],
            time: k,
            node: p,
            atom,
        }),
        None => Ok(()),
    }
}

fn times(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Reflected solve for the product-space payoff of one atom: barrier
/// `L_k α_k(u)`, terminal `ξ α_N(u)`, no driver.
pub fn solve_parametrized_atom(
    paths: &PathEnsemble,
    payoff: &Payoff,
    density: &AtomDensity,
    basis: BasisSpec,
) -> Result<RBSDESolution> {
    density.check_shape(paths)?;
    let n = paths.n_steps();
    let dt = paths.dt();
    let scaled = |k: usize| -> Vec<f64> {
        paths.state()[k]
            .iter()
            .zip(&density.alpha[k])
            .map(|(&s, a)| payoff.value(s) * a)
            .collect()
    };
    reflect_backward(n, scaled(n), scaled, basis.itm_only, |k, next, _, itm| {
        let scale = basis.density_scaled.then_some(density.alpha[k].as_slice());
        let x = &paths.state()[k];
        let proj = Projection::fit(x, basis, scale, None)?;
        let db = paths.increment(k);
        let (decision, ridged) = decision(x, basis, scale, None, itm, next, None)?;
        Ok(StepOutput {
            continuation: proj.project(next)?,
            decision,
            z: proj.project(&times(next, &db))?.into_iter().map(|v| v / dt).collect(),
            drift: None,
            ridged: proj.ridged || ridged,
        })
    })
}

/// One parametrised solve per grid atom. Each solution holds three
/// `(steps + 1) × paths` arrays; for large ensembles prefer
/// [`solve_parametrized_atom`] one atom at a time.
pub fn solve_parametrized_rbsde(
    paths: &PathEnsemble,
    payoff: &Payoff,
    density: &dyn BrownianDensity,
    grid: &UGrid,
    basis: BasisSpec,
) -> Result<Vec<RBSDESolution>> {
    grid.atoms()
        .iter()
        .enumerate()
        .map(|(a, &u)| solve_parametrized_atom(paths, payoff, &AtomDensity::evaluate(paths, density, u, a), basis))
        .collect()
}

/// `(Ŷ, Ẑ, K̂)` recovered from a parametrised solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedSolution {
    pub solution: RBSDESolution,
    /// False when the density has no logistic ratio; `Ẑ` is then zero-filled.
    pub z_available: bool,
}

/// `Ŷ = Y/α`, `ΔK̂_k = ΔK_k/α_k`, `Ẑ = Z/α − (β/α)Ŷ`. The Skorokhod residual
/// is re-measured against the original barrier.
pub fn transform_solution(
    parametrized: &RBSDESolution,
    paths: &PathEnsemble,
    payoff: &Payoff,
    density: &AtomDensity,
) -> Result<TransformedSolution> {
    check_process(paths, &parametrized.y, "parametrised solution")?;
    density.check_shape(paths)?;
    density.check_positive()?;
    let n = paths.n_steps();
    let z_available = density.ratio.is_some();
    let mut y = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut dk = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let alpha = &density.alpha[k];
        let yk: Vec<f64> = parametrized.y[k].iter().zip(alpha).map(|(v, a)| v / a).collect();
        dk.push(parametrized.dk[k].iter().zip(alpha).map(|(v, a)| v / a).collect());
        let zk = match &density.ratio {
            Some(r) if k < n => parametrized.z[k]
                .iter()
                .zip(alpha)
                .zip(r[k].iter().zip(&yk))
                .map(|((z, a), (r, yh))| z / a - r * yh)
                .collect(),
            _ => vec![0.0; paths.n_paths()],
        };
        y.push(yk);
        z.push(zk);
    }
    if !z_available {
        log::warn!("density has no logistic ratio; transformed Z omitted");
    }
    let barrier = payoff.barrier(paths);
    let realized = parametrized.realized.iter().zip(&density.alpha[0]).map(|(v, a)| v / a).collect();
    let mut solution = RBSDESolution {
        y,
        z,
        dk,
        skorokhod: 0.0,
        ridged_steps: parametrized.ridged_steps,
        realized,
    };
    solution.skorokhod = super::solver::skorokhod_residual(&solution, &barrier)?;
    Ok(TransformedSolution {
        solution,
        z_available,
    })
}

/// How the `Z`-dependent driver of the enlarged equation is resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// `Z_k` is estimated from `V_{k+1}` inside the same backward step, so
    /// the driver `(β/α)_k Z_k` is known before `Y_k` is formed. This is the
    /// fixed point of the sweep iteration and needs a single sweep.
    #[default]
    InStep,
    /// Sweep `s` uses the `Z` of sweep `s − 1` (sweep 0 has `f ≡ 0`).
    Lagged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnlargedOptions {
    pub coupling: Coupling,
    pub max_sweeps: usize,
    /// Relative change in `Y_0` between sweeps accepted as converged.
    pub tolerance: f64,
    /// Polynomial degree of the regressions estimating `Z` and the driver.
    /// The driver multiplies `Z` by an unbounded ratio, so it needs a more
    /// flexible fit than the continuation value.
    pub driver_degree: usize,
}

pub const DEFAULT_DRIVER_DEGREE: usize = 6;

impl Default for EnlargedOptions {
    fn default() -> Self {
        EnlargedOptions {
            coupling: Coupling::InStep,
            max_sweeps: 5,
            tolerance: 1e-4,
            driver_degree: DEFAULT_DRIVER_DEGREE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnlargedSolution {
    pub solution: RBSDESolution,
    pub sweeps: usize,
    pub last_change: f64,
}

/// Reflected solve in the filtration enlarged by `G = u`: original barrier
/// and terminal value, driver `f_k = (β/α)_k(u) Z_k`.
pub fn solve_enlarged_rbsde(
    paths: &PathEnsemble,
    payoff: &Payoff,
    density: &AtomDensity,
    basis: BasisSpec,
    options: EnlargedOptions,
) -> Result<EnlargedSolution> {
    density.check_shape(paths)?;
    let Some(ratios) = &density.ratio else {
        return domain("the enlarged-filtration solver needs the logistic ratio of the density");
    };
    let n = paths.n_steps();
    let dt = paths.dt();
    let basis = BasisSpec {
        density_scaled: false,
        ..basis
    };
    let driver_basis = BasisSpec {
        degree: options.driver_degree,
        ..basis
    };
    let barrier = payoff.barrier(paths);
    let terminal = payoff.terminal(paths);
    let sweep = |previous_z: Option<&[Vec<f64>]>, in_step: bool| {
        reflect_backward(n, terminal.clone(), |k| barrier[k].clone(), basis.itm_only, |k, next, _, itm| {
            let x = &paths.state()[k];
            let proj = Projection::fit(x, basis, None, None)?;
            let zproj = Projection::fit(x, driver_basis, None, None)?;
            let db = paths.increment(k);
            let z: Vec<f64> = zproj.project(&times(next, &db))?.into_iter().map(|v| v / dt).collect();
            let mut continuation = proj.project(next)?;
            // In-step: regress r_k V_{k+1} ΔB_k directly; r_k is known at k, so
            // this estimates r_k Z_k dt without forcing r_k through the basis.
            let drift = if in_step {
                let target: Vec<f64> = ratios[k].iter().zip(next).zip(&db).map(|((r, v), b)| r * v * b).collect();
                Some(zproj.project(&target)?)
            } else {
                previous_z.map(|zp| ratios[k].iter().zip(&zp[k]).map(|(r, z)| r * z * dt).collect::<Vec<f64>>())
            };
            if let Some(d) = &drift {
                for (c, d) in continuation.iter_mut().zip(d) {
                    *c += d;
                }
            }
            let (decision, ridged) = decision(x, basis, None, None, itm, next, drift.as_deref())?;
            Ok(StepOutput {
                continuation,
                decision,
                z,
                drift,
                ridged: proj.ridged || zproj.ridged || ridged,
            })
        })
    };
    match options.coupling {
        Coupling::InStep => Ok(EnlargedSolution {
            solution: sweep(None, true)?,
            sweeps: 1,
            last_change: 0.0,
        }),
        Coupling::Lagged => {
            let mut current = sweep(None, false)?;
            let mut change = f64::INFINITY;
            for s in 1..options.max_sweeps.max(1) {
                let next = sweep(Some(&current.z), false)?;
                change = (next.y0() - current.y0()).abs() / current.y0().abs().max(f64::MIN_POSITIVE);
                current = next;
                if change <= options.tolerance {
                    return Ok(EnlargedSolution {
                        solution: current,
                        sweeps: s + 1,
                        last_change: change,
                    });
                }
            }
            Err(Error::NonConvergence {
                sweeps: options.max_sweeps,
                change,
            })
        }
    }
}

/// Likelihood ratios `q_T(u) = α_N(u)` of the insider measures, per atom and path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureChange {
    /// `[atom][path]`
    pub weights: Vec<Vec<f64>>,
    pub normalized: bool,
}

impl MeasureChange {
    pub fn from_density(paths: &PathEnsemble, density: &dyn BrownianDensity, grid: &UGrid) -> Self {
        let weights = grid
            .atoms()
            .par_iter()
            .map(|&u| alpha_slice(paths, density, paths.n_steps(), u))
            .collect();
        MeasureChange {
            weights,
            normalized: false,
        }
    }

    /// Sample mean (with standard error) of each atom's weights.
    pub fn means(&self) -> Vec<Estimate> {
        self.weights.iter().map(|w| Estimate::from_slice(w)).collect()
    }

    /// Rescales each atom's weights to sample mean one.
    pub fn normalize(&mut self) {
        for w in &mut self.weights {
            let m = w.iter().sum::<f64>() / w.len() as f64;
            w.iter_mut().for_each(|v| *v /= m);
        }
        self.normalized = true;
    }

    /// `(Σw)² / Σw²` per atom.
    pub fn effective_sample_sizes(&self) -> Vec<f64> {
        self.weights.iter().map(|w| effective_sample_size(w)).collect()
    }
}

pub fn effective_sample_size(w: &[f64]) -> f64 {
    let s = par_sum(w.len(), |p| w[p]);
    let s2 = par_sum(w.len(), |p| w[p] * w[p]);
    s * s / s2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirsanovSolution {
    pub solution: RBSDESolution,
    /// Smallest per-step effective sample size, as a fraction of the path count.
    pub min_step_ess: f64,
    /// Effective sample size of the accumulated weight `q_T = α_N(u)`, as a fraction.
    pub terminal_ess: f64,
    /// Sample mean of `q_T`; one up to Monte Carlo error.
    pub terminal_weight: Estimate,
}

/// Driver-free reflected solve under the insider measure `α(u)·P`. The
/// regression at step `k` targets the realised payoff `L_τ` of the current
/// policy, weighted by the likelihood ratio `α_τ(u)/α_k(u)` accumulated
/// along the path up to its exercise time and renormalised to mean one.
pub fn girsanov_solve(
    paths: &PathEnsemble,
    payoff: &Payoff,
    density: &AtomDensity,
    basis: BasisSpec,
) -> Result<GirsanovSolution> {
    density.check_shape(paths)?;
    density.check_positive()?;
    let n = paths.n_steps();
    let n_paths = paths.n_paths();
    let dt = paths.dt();
    let basis = BasisSpec {
        density_scaled: false,
        ..basis
    };
    let barrier = payoff.barrier(paths);
    let terminal_alpha = &density.alpha[n];
    // α at each path's current exercise time
    let mut alpha_tau = terminal_alpha.clone();
    let mut min_ess = f64::INFINITY;
    let solution = reflect_backward(n, payoff.terminal(paths), |k| barrier[k].clone(), basis.itm_only, |k, next, stopped, itm| {
        for p in 0..n_paths {
            if stopped[p] {
                alpha_tau[p] = density.alpha[k + 1][p];
            }
        }
        let mut w: Vec<f64> = alpha_tau.iter().zip(&density.alpha[k]).map(|(a1, a0)| a1 / a0).collect();
        let mean = par_sum(n_paths, |p| w[p]) / n_paths as f64;
        w.iter_mut().for_each(|v| *v /= mean);
        min_ess = min_ess.min(effective_sample_size(&w) / n_paths as f64);
        let x = &paths.state()[k];
        let proj = Projection::fit(x, basis, None, Some(&w))?;
        let db = paths.increment(k);
        let continuation = proj.project(next)?;
        let (decision, ridged) = decision(x, basis, None, Some(&w), itm, next, None)?;
        let mean_db = proj.project(&db)?;
        let z = proj
            .project(&times(next, &db))?
            .into_iter()
            .zip(continuation.iter().zip(&mean_db))
            .map(|(ydb, (c, m))| (ydb - c * m) / dt)
            .collect();
        Ok(StepOutput {
            continuation,
            decision,
            z,
            drift: None,
            ridged: proj.ridged || ridged,
        })
    })?;
    let terminal_ess = effective_sample_size(terminal_alpha) / n_paths as f64;
    if min_ess < ESS_WARN_FRACTION || terminal_ess < ESS_WARN_FRACTION {
        log::warn!(
            "Girsanov weights for atom {} degenerate: step ESS {min_ess:.4}, terminal ESS {terminal_ess:.4} of the path count",
            density.u
        );
    }
    Ok(GirsanovSolution {
        solution,
        min_step_ess: min_ess,
        terminal_ess,
        terminal_weight: Estimate::from_slice(terminal_alpha),
    })
}
