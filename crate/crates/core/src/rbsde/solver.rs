use serde::{Deserialize, Serialize};

use super::paths::PathEnsemble;
use super::regression::{BasisSpec, Projection};
use crate::error::{domain, shape, Result};
use crate::util::{par_sum, Estimate};

/// Exercise payoff as a function of the asset state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffKind {
    Call,
    Put,
    Straddle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub kind: PayoffKind,
    pub strike: f64,
}

impl Payoff {
    pub fn put(strike: f64) -> Self {
        Payoff {
            kind: PayoffKind::Put,
            strike,
        }
    }

    pub fn call(strike: f64) -> Self {
        Payoff {
            kind: PayoffKind::Call,
            strike,
        }
    }

    pub fn straddle(strike: f64) -> Self {
        Payoff {
            kind: PayoffKind::Straddle,
            strike,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self.kind {
            PayoffKind::Call => (s - self.strike).max(0.0),
            PayoffKind::Put => (self.strike - s).max(0.0),
            PayoffKind::Straddle => (s - self.strike).abs(),
        }
    }

    /// Barrier process `L_k = payoff(S_k)` on every path, time-major.
    pub fn barrier(&self, paths: &PathEnsemble) -> Vec<Vec<f64>> {
        paths.map_state(|_, s| self.value(s))
    }

    /// Terminal condition `ξ = payoff(S_N)`.
    pub fn terminal(&self, paths: &PathEnsemble) -> Vec<f64> {
        paths.state()[paths.n_steps()].iter().map(|&s| self.value(s)).collect()
    }
}

/// Discrete solution `(Y, Z, K)` of a reflected BSDE on a path ensemble,
/// stored time-major (`y[k][p]`). `ΔK_k` is the push applied at step `k`,
/// so `K_0 = 0` and `K_{k+1} = K_k + ΔK_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBSDESolution {
    pub y: Vec<Vec<f64>>,
    /// `Z_k`; the terminal slice is zero.
    pub z: Vec<Vec<f64>>,
    pub dk: Vec<Vec<f64>>,
    /// Mean over paths of `Σ_k (Y_k − L_k) ΔK_k`, measured against the
    /// barrier the solution was computed with.
    pub skorokhod: f64,
    /// Number of time steps whose regression fell back to ridge.
    pub ridged_steps: usize,
    /// Realised time-0 value of following the estimated exercise policy on
    /// each path (payoff at exercise plus accumulated driver). Its mean
    /// reproduces `Y_0` and its spread gives the Monte Carlo error.
    pub realized: Vec<f64>,
}

impl RBSDESolution {
    pub fn n_steps(&self) -> usize {
        self.y.len() - 1
    }

    pub fn n_paths(&self) -> usize {
        self.y[0].len()
    }

    /// `Y_0` (identical on every path, since `F_0` is trivial).
    pub fn y0(&self) -> f64 {
        self.y[0][0]
    }

    /// Standard error of `Y_0` from the realised path values.
    pub fn y0_std_error(&self) -> f64 {
        Estimate::from_slice(&self.realized).std_error
    }

    /// Cumulative `K_k` on every path.
    pub fn k(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dk.len());
        let mut acc = vec![0.0; self.n_paths()];
        out.push(acc.clone());
        for dk in &self.dk[..self.n_steps()] {
            for (a, d) in acc.iter_mut().zip(dk) {
                *a += d;
            }
            out.push(acc.clone());
        }
        out
    }

    /// Sample second moments `(mean Z², mean K_N²)` over all paths and
    /// non-terminal steps.
    pub fn second_moments(&self) -> (f64, f64) {
        let n = self.n_paths();
        let steps = self.n_steps();
        let z2 = self.z[..steps]
            .iter()
            .map(|z| par_sum(n, |p| z[p] * z[p]))
            .sum::<f64>()
            / (n * steps) as f64;
        let k_n = par_sum(n, |p| {
            let k: f64 = self.dk[..steps].iter().map(|d| d[p]).sum();
            k * k
        }) / n as f64;
        (z2, k_n)
    }
}

/// Mean over paths of `Σ_k (Y_k − L_k) ΔK_k`.
pub fn skorokhod_residual(solution: &RBSDESolution, barrier: &[Vec<f64>]) -> Result<f64> {
    if barrier.len() != solution.y.len() || barrier.iter().any(|b| b.len() != solution.n_paths()) {
        return shape("barrier does not match the solution");
    }
    Ok(residual(solution, |k| barrier[k].clone()))
}

fn residual(solution: &RBSDESolution, barrier: impl Fn(usize) -> Vec<f64>) -> f64 {
    let n = solution.n_paths();
    let mut total = 0.0;
    for k in 0..solution.n_steps() {
        let l = barrier(k);
        let (y, dk) = (&solution.y[k], &solution.dk[k]);
        total += par_sum(n, |p| (y[p] - l[p]) * dk[p]);
    }
    total / n as f64
}

/// Output of one backward step.
pub(crate) struct StepOutput {
    /// Regression estimate `C_k` of the continuation value over all paths.
    pub continuation: Vec<f64>,
    /// Estimate fitted on in-the-money paths only, used there for the
    /// exercise decision; `None` when no restricted fit was made.
    pub decision: Option<Vec<f64>>,
    pub z: Vec<f64>,
    /// Driver contribution `f_k dt` added to the carried value of paths
    /// that continue; `None` for `f ≡ 0`.
    pub drift: Option<Vec<f64>>,
    pub ridged: bool,
}

/// Discretely reflected backward recursion.
/// `step(k, V_{k+1}, stopped_{k+1}, itm_k)` estimates `C_k` and `Z_k` by
/// regressing the realised value `V_{k+1}` of following the current
/// exercise policy; then
///
/// * `Y_k = max(L_k, C_k)` and `ΔK_k = Y_k − C_k` (the reported solution);
/// * `V_k = L_k` where `L_k ≥ C_k` (exercise), else `V_{k+1} + f_k dt`.
///
/// Regressing realised values rather than the previous regression output
/// keeps the estimator from compounding the upward bias of `max` over
/// noisy fits at every step, while `Y`, `Z`, `K` keep the reflected form and
/// the discrete Skorokhod identity holds exactly.
///
/// With `itm_only`, paths with `L_k ≤ 0` never exercise (a worthless
/// exercise is never better than continuing a nonnegative claim) and the
/// decision on the others uses the fit restricted to them.
pub(crate) fn reflect_backward(
    n_steps: usize,
    terminal: Vec<f64>,
    barrier: impl Fn(usize) -> Vec<f64>,
    itm_only: bool,
    mut step: impl FnMut(usize, &[f64], &[bool], Option<&[bool]>) -> Result<StepOutput>,
) -> Result<RBSDESolution> {
    let n = terminal.len();
    let mut y = vec![Vec::new(); n_steps + 1];
    let mut z = vec![Vec::new(); n_steps + 1];
    let mut dk = vec![Vec::new(); n_steps + 1];
    let l_n = barrier(n_steps);
    if let Some(p) = (0..n).find(|&p| l_n[p] > terminal[p]) {
        return domain(format!(
            "terminal barrier {} exceeds terminal value {} on path {p}",
            l_n[p], terminal[p]
        ));
    }
    let mut carried = terminal.clone();
    let mut stopped = vec![true; n];
    y[n_steps] = terminal;
    z[n_steps] = vec![0.0; n];
    dk[n_steps] = vec![0.0; n];
    let mut ridged_steps = 0;
    for k in (0..n_steps).rev() {
        let l = barrier(k);
        let itm: Option<Vec<bool>> = itm_only.then(|| l.iter().map(|&v| v > 0.0).collect());
        let out = step(k, &carried, &stopped, itm.as_deref())?;
        ridged_steps += usize::from(out.ridged);
        let mut yk = Vec::with_capacity(n);
        let mut dkk = Vec::with_capacity(n);
        for p in 0..n {
            let in_money = itm.as_ref().is_none_or(|m| m[p]);
            let c = match &out.decision {
                Some(d) if in_money => d[p],
                _ => out.continuation[p],
            };
            let l = l[p];
            if l >= c {
                yk.push(l);
                dkk.push(l - c);
                if in_money {
                    carried[p] = l;
                    stopped[p] = true;
                } else {
                    if let Some(d) = &out.drift {
                        carried[p] += d[p];
                    }
                    stopped[p] = false;
                }
            } else {
                yk.push(c);
                dkk.push(0.0);
                if let Some(d) = &out.drift {
                    carried[p] += d[p];
                }
                stopped[p] = false;
            }
        }
        y[k] = yk;
        dk[k] = dkk;
        z[k] = out.z;
    }
    let mut solution = RBSDESolution {
        y,
        z,
        dk,
        skorokhod: 0.0,
        ridged_steps,
        realized: carried,
    };
    solution.skorokhod = residual(&solution, barrier);
    Ok(solution)
}

/// Minimum number of in-the-money paths per basis function for a restricted fit.
const MIN_ITM_PER_BASIS: usize = 4;

/// Fit restricted to the paths flagged in `mask` (combined with `weights`);
/// `None` when too few paths are flagged.
pub(crate) fn masked_projection<'a>(
    x: &[f64],
    basis: BasisSpec,
    scale: Option<&'a [f64]>,
    weights: Option<&[f64]>,
    mask: &[bool],
    storage: &'a mut Vec<f64>,
) -> Result<Option<Projection<'a>>> {
    let count = mask.iter().filter(|&&m| m).count();
    if count < MIN_ITM_PER_BASIS * basis.size() {
        return Ok(None);
    }
    *storage = mask
        .iter()
        .enumerate()
        .map(|(p, &m)| if m { weights.map_or(1.0, |w| w[p]) } else { 0.0 })
        .collect();
    Ok(Some(Projection::fit(x, basis, scale, Some(storage.as_slice()))?))
}

/// Decision estimate from the restricted fit, plus an optional drift term.
pub(crate) fn decision(
    x: &[f64],
    basis: BasisSpec,
    scale: Option<&[f64]>,
    weights: Option<&[f64]>,
    mask: Option<&[bool]>,
    target: &[f64],
    drift: Option<&[f64]>,
) -> Result<(Option<Vec<f64>>, bool)> {
    let Some(mask) = mask else {
        return Ok((None, false));
    };
    let mut storage = Vec::new();
    let Some(proj) = masked_projection(x, basis, scale, weights, mask, &mut storage)? else {
        return Ok((None, false));
    };
    let mut d = proj.project(target)?;
    if let Some(f) = drift {
        for (d, f) in d.iter_mut().zip(f) {
            *d += f;
        }
    }
    Ok((Some(d), proj.ridged))
}

pub(crate) fn check_process(paths: &PathEnsemble, values: &[Vec<f64>], name: &str) -> Result<()> {
    if values.len() != paths.n_steps() + 1 || values.iter().any(|v| v.len() != paths.n_paths()) {
        return shape(format!(
            "{name} must have {} time slices of {} paths",
            paths.n_steps() + 1,
            paths.n_paths()
        ));
    }
    Ok(())
}

/// Regression scheme for the reflected BSDE with a given driver `f`:
/// `C_k = Ê[V_{k+1} | S_k] + f_k dt`, `Z_k = Ê[V_{k+1} ΔB_k | S_k] / dt`, where
/// `V` is the realised value of the current exercise policy (see the module docs).
pub fn solve_rbsde(
    paths: &PathEnsemble,
    barrier: &[Vec<f64>],
    terminal: &[f64],
    driver: Option<&[Vec<f64>]>,
    basis: BasisSpec,
) -> Result<RBSDESolution> {
    check_process(paths, barrier, "barrier")?;
    if terminal.len() != paths.n_paths() {
        return shape("terminal values must have one entry per path");
    }
    if let Some(f) = driver {
        check_process(paths, f, "driver")?;
    }
    let basis = BasisSpec {
        density_scaled: false,
        ..basis
    };
    let dt = paths.dt();
    reflect_backward(
        paths.n_steps(),
        terminal.to_vec(),
        |k| barrier[k].clone(),
        basis.itm_only,
        |k, next, _, itm| {
            let proj = Projection::fit(&paths.state()[k], basis, None, None)?;
            let db = paths.increment(k);
            let mut continuation = proj.project(next)?;
            let drift: Option<Vec<f64>> = driver.map(|f| f[k].iter().map(|f| f * dt).collect());
            if let Some(d) = &drift {
                for (c, d) in continuation.iter_mut().zip(d) {
                    *c += d;
                }
            }
            let ydb: Vec<f64> = next.iter().zip(&db).map(|(y, b)| y * b).collect();
            let z = proj.project(&ydb)?.into_iter().map(|v| v / dt).collect();
            let (decision, ridged) = decision(&paths.state()[k], basis, None, None, itm, next, drift.as_deref())?;
            Ok(StepOutput {
                continuation,
                decision,
                z,
                drift,
                ridged: proj.ridged || ridged,
            })
        },
    )
}
