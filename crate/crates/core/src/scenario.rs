//! The noisy-endpoint example end to end: a Brownian market, an American
//! claim, and an insider who knows `G = B_T + X` with `X ~ N(0, ε)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::density::{
    gaussian_bound_scan, lattice_density, novikov_moment, smooth_conditional_laws, verify_path_density,
    BoundCheck, GaussianInfoModel, GridKind, UGrid, DEFAULT_SMOOTHING,
};
use crate::error::{Error, Result};
use crate::lattice::{FiltrationLattice, Node, PayoffSpec, Transition};
use crate::product::{value_insider, ORACLE_MAX_ATOMS, ORACLE_MAX_STEPS, ORACLE_NODE_CAP};
use crate::rbsde::{
    DEFAULT_DRIVER_DEGREE,
    girsanov_solve, simulate_paths, AtomDensity, solve_enlarged_rbsde, solve_parametrized_atom, solve_rbsde, transform_solution,
    BasisSpec, Coupling, Dynamics, EnlargedOptions, MarketModel, PathEnsemble, Payoff, PayoffKind,
};
use crate::util::Estimate;

/// Version of the report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub market: MarketConfig,
    pub payoff: PayoffConfig,
    pub info: InfoConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    /// Matched binomial surrogate valued exactly; omitted when absent.
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub s0: f64,
    #[serde(default)]
    pub mu: f64,
    pub sigma: f64,
    pub horizon: f64,
    #[serde(default)]
    pub dynamics: Dynamics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: PayoffKind,
    pub strike: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoConfig {
    pub epsilon: f64,
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    #[serde(default)]
    pub grid: GridKind,
}

fn default_atoms() -> usize {
    32
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub basis_degree: usize,
    /// Density-scaled basis for the parametrised route.
    pub density_scaled_basis: bool,
    /// Exercise decisions regress on in-the-money paths only.
    pub itm_only: bool,
    /// Also run the enlarged-filtration and Girsanov routes.
    pub all_routes: bool,
    pub coupling: Coupling,
    pub max_sweeps: usize,
    pub sweep_tolerance: f64,
    /// Basis degree for `Z` and the driver in the enlarged route.
    pub driver_degree: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            n_paths: 100_000,
            n_steps: 50,
            seed: 2024,
            basis_degree: 3,
            density_scaled_basis: true,
            itm_only: true,
            all_routes: true,
            coupling: Coupling::InStep,
            max_sweeps: 5,
            sweep_tolerance: 1e-4,
            driver_degree: DEFAULT_DRIVER_DEGREE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub steps: usize,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let m = &self.market;
        if !(m.sigma > 0.0 && m.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", m.sigma));
        }
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", m.horizon));
        }
        if !m.mu.is_finite() || !m.s0.is_finite() || (m.dynamics == Dynamics::Geometric && !(m.s0 > 0.0)) {
            return bad("s0 must be positive and mu finite".into());
        }
        if !(self.payoff.strike > 0.0 && self.payoff.strike.is_finite()) {
            return bad(format!("strike must be positive, got {}", self.payoff.strike));
        }
        if !(self.info.epsilon > 0.0 && self.info.epsilon.is_finite()) {
            return bad(format!(
                "epsilon must be positive (got {}): the density hypothesis requires the conditional law \
                 of G to stay equivalent to its prior up to maturity, which fails when the noise vanishes",
                self.info.epsilon
            ));
        }
        if self.info.atoms == 0 {
            return bad("need at least one atom".into());
        }
        let n = &self.numerics;
        if n.n_steps < 2 {
            return bad(format!("n_steps must be at least 2, got {}", n.n_steps));
        }
        if n.n_paths < 2 {
            return bad(format!("n_paths must be at least 2, got {}", n.n_paths));
        }
        if n.basis_degree > 8 || n.driver_degree > 8 {
            return bad(format!("basis degrees above 8 are not supported (got {} and {})", n.basis_degree, n.driver_degree));
        }
        if let Some(l) = self.lattice {
            if l.steps == 0 {
                return bad("lattice steps must be positive".into());
            }
        }
        Ok(())
    }

    pub fn model(&self) -> MarketModel {
        MarketModel {
            s0: self.market.s0,
            mu: self.market.mu,
            sigma: self.market.sigma,
            horizon: self.market.horizon,
            dynamics: self.market.dynamics,
        }
    }

    pub fn payoff(&self) -> Payoff {
        Payoff {
            kind: self.payoff.kind,
            strike: self.payoff.strike,
        }
    }

    pub fn info_model(&self) -> Result<GaussianInfoModel> {
        GaussianInfoModel::new(self.market.horizon, self.info.epsilon)
    }

    pub fn grid(&self) -> Result<UGrid> {
        self.info_model()?.grid(self.info.atoms, self.info.grid)
    }

    pub fn basis(&self) -> BasisSpec {
        BasisSpec {
            degree: self.numerics.basis_degree,
            density_scaled: self.numerics.density_scaled_basis,
            itm_only: self.numerics.itm_only,
        }
    }

    pub fn enlarged_options(&self) -> EnlargedOptions {
        EnlargedOptions {
            coupling: self.numerics.coupling,
            max_sweeps: self.numerics.max_sweeps,
            tolerance: self.numerics.sweep_tolerance,
            driver_degree: self.numerics.driver_degree,
        }
    }
}

/// Per-atom results of the Monte Carlo routes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomReport {
    pub atom: f64,
    pub weight: f64,
    /// `Ŷ_0(u)` from the parametrised solve and transform.
    pub transform: f64,
    pub transform_std_error: f64,
    pub enlarged: Option<f64>,
    pub girsanov: Option<f64>,
    /// `Ŷ_0(u) − Y_0` (transform route).
    pub cei: f64,
    pub cei_std_error: f64,
    /// Largest pairwise relative gap among the available routes.
    pub max_route_gap: f64,
    pub enlarged_sweeps: Option<usize>,
    pub girsanov_step_ess: Option<f64>,
    pub girsanov_terminal_ess: Option<f64>,
    pub terminal_weight: Option<Estimate>,
    pub skorokhod_parametrized: f64,
    pub skorokhod_transformed: f64,
    pub skorokhod_enlarged: Option<f64>,
    pub skorokhod_girsanov: Option<f64>,
    /// Sample second moments of the transformed `Ẑ` and `K̂_T`.
    pub z_second_moment: f64,
    pub k_second_moment: f64,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostics {
    pub max_normalization_error: f64,
    pub max_martingale_z: f64,
    pub min_alpha: f64,
    pub max_alpha: f64,
    pub bound: BoundCheck,
    /// Largest Monte Carlo exponential moment of the information drift.
    pub max_novikov_moment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub base_value: f64,
    pub base_std_error: f64,
    pub base_skorokhod: f64,
    pub ridged_steps: usize,
    /// `Σ_i Ŷ_0(u_i) w_i`.
    pub projection_value: f64,
    /// `Σ_i (Ŷ_0(u_i) − Y_0) w_i` with the standard error of its per-path estimator.
    pub expected_cei: Estimate,
    pub max_route_gap: f64,
    pub atoms: Vec<AtomReport>,
    pub density: DensityDiagnostics,
    pub lattice: Option<LatticeOracleReport>,
    pub errors: Vec<String>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the per-atom table.
    pub fn write_atoms_csv<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            atom: f64,
            weight: f64,
            transform: f64,
            enlarged: Option<f64>,
            girsanov: Option<f64>,
            cei: f64,
            cei_std_error: f64,
            max_route_gap: f64,
        }
        let mut out = csv::Writer::from_writer(writer);
        for a in &self.atoms {
            out.serialize(Row {
                atom: a.atom,
                weight: a.weight,
                transform: a.transform,
                enlarged: a.enlarged,
                girsanov: a.girsanov,
                cei: a.cei,
                cei_std_error: a.cei_std_error,
                max_route_gap: a.max_route_gap,
            })?;
        }
        out.flush()?;
        Ok(())
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Runs the full Monte Carlo valuation. Route failures for individual atoms
/// are recorded in the report; path simulation and the base solve are hard
/// errors.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let model = config.model();
    let info = config.info_model()?;
    let grid = config.grid()?;
    let payoff = config.payoff();
    let basis = config.basis();
    let paths = simulate_paths(&model, config.numerics.n_paths, config.numerics.n_steps, config.numerics.seed)?;
    let n_paths = paths.n_paths();

    let barrier = payoff.barrier(&paths);
    let base = solve_rbsde(&paths, &barrier, &payoff.terminal(&paths), None, basis)?;
    drop(barrier);
    let base_v0 = base.realized.clone();
    let base_value = base.y0();
    let base_std_error = base.y0_std_error();
    let base_skorokhod = base.skorokhod;
    let mut ridged_steps = base.ridged_steps;
    drop(base);

    // Σ_i w_i V_0(u_i, p) − V_0(p): realised per-path estimator of the expected CEI
    let mut cei_paths: Vec<f64> = base_v0.iter().map(|v| -v).collect();
    let mut atoms = Vec::with_capacity(grid.len());
    for (a, (u, w)) in grid.iter().enumerate() {
        let row = solve_atom(config, &paths, &payoff, &info, u, w, a, base_value, &base_v0, &mut cei_paths)?;
        ridged_steps += row.1;
        atoms.push(row.0);
    }
    let expected_cei = {
        let est = Estimate::from_slice(&cei_paths);
        let mean: f64 = atoms.iter().map(|r| r.cei * r.weight).sum();
        Estimate {
            mean,
            std_error: est.std_error,
        }
    };
    let projection_value = atoms.iter().map(|r| r.transform * r.weight).sum();
    let max_route_gap = atoms.iter().map(|r| r.max_route_gap).fold(0.0, f64::max);

    let density = density_diagnostics(&paths, &info, &grid)?;
    let mut errors: Vec<String> = atoms
        .iter()
        .flat_map(|r| r.errors.iter().map(move |e| format!("atom {}: {e}", r.atom)))
        .collect();
    let lattice = match config.lattice {
        Some(l) => match matched_lattice_oracle(config, l.steps) {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push(format!("lattice oracle: {e}"));
                None
            }
        },
        None => None,
    };
    let _ = n_paths;
    Ok(ScenarioReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        base_value,
        base_std_error,
        base_skorokhod,
        ridged_steps,
        projection_value,
        expected_cei,
        max_route_gap,
        atoms,
        density,
        lattice,
        errors,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_atom(
    config: &ScenarioConfig,
    paths: &PathEnsemble,
    payoff: &Payoff,
    info: &GaussianInfoModel,
    u: f64,
    weight: f64,
    atom: usize,
    base_value: f64,
    base_v0: &[f64],
    cei_paths: &mut [f64],
) -> Result<(AtomReport, usize)> {
    let basis = config.basis();
    let mut errors = Vec::new();
    let field = AtomDensity::evaluate(paths, info, u, atom);
    let param = solve_parametrized_atom(paths, payoff, &field, basis)?;
    let ridged = param.ridged_steps;
    let skorokhod_parametrized = param.skorokhod;
    // α_0 ≡ 1, so the realised values are already on the insider scale
    let diffs: Vec<f64> = param.realized.iter().zip(base_v0).map(|(a, b)| a - b).collect();
    for (acc, v) in cei_paths.iter_mut().zip(&param.realized) {
        *acc += weight * v;
    }
    let transform_std_error = param.y0_std_error();
    let transformed = transform_solution(&param, paths, payoff, &field)?;
    drop(param);
    let transform = transformed.solution.y0();
    let skorokhod_transformed = transformed.solution.skorokhod;
    let (z_second_moment, k_second_moment) = transformed.solution.second_moments();
    drop(transformed);

    let mut routes = vec![transform];
    let (mut enlarged, mut sweeps, mut skorokhod_enlarged) = (None, None, None);
    let (mut girsanov, mut step_ess, mut terminal_ess, mut terminal_weight, mut skorokhod_girsanov) =
        (None, None, None, None, None);
    if config.numerics.all_routes {
        match solve_enlarged_rbsde(paths, payoff, &field, basis, config.enlarged_options()) {
            Ok(s) => {
                enlarged = Some(s.solution.y0());
                sweeps = Some(s.sweeps);
                skorokhod_enlarged = Some(s.solution.skorokhod);
                routes.push(s.solution.y0());
            }
            Err(e) => errors.push(format!("enlarged route: {e}")),
        }
        match girsanov_solve(paths, payoff, &field, basis) {
            Ok(s) => {
                girsanov = Some(s.solution.y0());
                step_ess = Some(s.min_step_ess);
                terminal_ess = Some(s.terminal_ess);
                terminal_weight = Some(s.terminal_weight);
                skorokhod_girsanov = Some(s.solution.skorokhod);
                routes.push(s.solution.y0());
            }
            Err(e) => errors.push(format!("Girsanov route: {e}")),
        }
    }
    let mut max_route_gap: f64 = 0.0;
    for i in 0..routes.len() {
        for j in i + 1..routes.len() {
            max_route_gap = max_route_gap.max(relative_gap(routes[i], routes[j]));
        }
    }
    Ok((
        AtomReport {
            atom: u,
            weight,
            transform,
            transform_std_error,
            enlarged,
            girsanov,
            cei: transform - base_value,
            cei_std_error: Estimate::from_slice(&diffs).std_error,
            max_route_gap,
            enlarged_sweeps: sweeps,
            girsanov_step_ess: step_ess,
            girsanov_terminal_ess: terminal_ess,
            terminal_weight,
            skorokhod_parametrized,
            skorokhod_transformed,
            skorokhod_enlarged,
            skorokhod_girsanov,
            z_second_moment,
            k_second_moment,
            errors,
        },
        ridged,
    ))
}

/// Threshold for the boundedness report of `α`.
const BOUND_THRESHOLD: f64 = 100.0;

fn density_diagnostics(paths: &PathEnsemble, info: &GaussianInfoModel, grid: &UGrid) -> Result<DensityDiagnostics> {
    let report = verify_path_density(paths, info, grid);
    let u_max = grid.atoms().iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let b_max = 4.0 * info.horizon().sqrt();
    let bound = gaussian_bound_scan(info, (-u_max, u_max), (-b_max, b_max), 41, BOUND_THRESHOLD);
    let novikov = novikov_moment(paths, info, grid)?;
    Ok(DensityDiagnostics {
        max_normalization_error: report.max_normalization_error,
        max_martingale_z: report.max_martingale_z,
        min_alpha: report.min_alpha,
        max_alpha: report.max_alpha,
        bound,
        max_novikov_moment: novikov.iter().map(|m| m.moment.mean).fold(0.0, f64::max),
    })
}

/// Exact values on the binomial surrogate of the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeOracleReport {
    pub steps: usize,
    pub base_value: f64,
    pub projection_value: f64,
    pub expected_cei: f64,
    /// Smallest per-atom CEI over the tree.
    pub min_cei: f64,
    /// Smallest `projection − base` over the tree.
    pub min_conditional_cei: f64,
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
    pub insider_values: Vec<Option<f64>>,
}

/// Recombining random walk `B` with steps `±√dt` (probability ½ each) and
/// state `S = model.state(t, B)`.
pub fn brownian_lattice(model: &MarketModel, steps: usize) -> Result<FiltrationLattice> {
    let dt = model.horizon / steps as f64;
    let h = dt.sqrt();
    let levels = (0..=steps)
        .map(|k| {
            (0..=k)
                .map(|i| Node {
                    state: model.state(k as f64 * dt, (2.0 * i as f64 - k as f64) * h),
                    children: if k < steps {
                        vec![
                            Transition { child: i, prob: 0.5 },
                            Transition { child: i + 1, prob: 0.5 },
                        ]
                    } else {
                        Vec::new()
                    },
                })
                .collect()
        })
        .collect();
    FiltrationLattice::from_levels(levels)
}

/// Bin edges for the grid atoms: prior quantiles for quantile grids,
/// midpoints between atoms otherwise.
fn bin_edges(grid: &UGrid, kind: GridKind, prior_sd: f64) -> Vec<f64> {
    let n = grid.len();
    let mut edges = vec![f64::NEG_INFINITY];
    match kind {
        GridKind::Quantile => {
            let normal = Normal::new(0.0, prior_sd).expect("positive spread");
            edges.extend((1..n).map(|i| normal.inverse_cdf(i as f64 / n as f64)));
        }
        GridKind::GaussHermite => {
            edges.extend(grid.atoms().windows(2).map(|w| 0.5 * (w[0] + w[1])));
        }
    }
    edges.push(f64::INFINITY);
    edges
}

/// Discretised `B_T + X` on the binomial surrogate: given terminal walk value
/// `b`, atom `i` carries `P(B_T + X ∈ bin_i | b)`. Grid weights are the
/// implied prior. Valued exactly by the product-space machinery.
pub fn matched_lattice_oracle(config: &ScenarioConfig, steps: usize) -> Result<LatticeOracleReport> {
    config.validate()?;
    let atoms = config.info.atoms;
    if steps > ORACLE_MAX_STEPS || atoms > ORACLE_MAX_ATOMS {
        return Err(Error::Explosion {
            count: ((steps + 1) * (steps + 2) / 2 * atoms) as u128,
            cap: ORACLE_NODE_CAP.min(((ORACLE_MAX_STEPS + 1) * (ORACLE_MAX_STEPS + 2) / 2 * ORACLE_MAX_ATOMS) as u128),
        });
    }
    let model = config.model();
    let lattice = brownian_lattice(&model, steps)?;
    let info = config.info_model()?;
    let point_grid = config.grid()?;
    let edges = bin_edges(&point_grid, config.info.grid, info.prior_variance().sqrt());
    let noise = Normal::new(0.0, info.noise_var().sqrt()).expect("positive noise");
    let h = (model.horizon / steps as f64).sqrt();
    let g_map: Vec<Vec<f64>> = (0..=steps)
        .map(|i| {
            let b = (2.0 * i as f64 - steps as f64) * h;
            let law: Vec<f64> = edges.windows(2).map(|e| noise.cdf(e[1] - b) - noise.cdf(e[0] - b)).collect();
            let total: f64 = law.iter().sum();
            law.into_iter().map(|q| q / total).collect()
        })
        .collect();
    let reach = lattice.reach_probabilities();
    let mut prior = vec![0.0; atoms];
    for (law, r) in g_map.iter().zip(&reach[steps]) {
        for (p, q) in prior.iter_mut().zip(law) {
            *p += r * q;
        }
    }
    let total: f64 = prior.iter().sum();
    prior.iter_mut().for_each(|p| *p /= total);
    let grid = UGrid::new(point_grid.atoms().to_vec(), prior)?;
    let density = match lattice_density(&lattice, &g_map, &grid) {
        Ok(d) => d,
        Err(Error::EquivalenceViolation(msg)) => {
            log::warn!("smoothing degenerate surrogate laws: {msg}");
            let smooth = smooth_conditional_laws(&g_map, &grid, DEFAULT_SMOOTHING);
            lattice_density(&lattice, &smooth, &grid)?
        }
        Err(e) => return Err(e),
    };
    let payoff = config.payoff();
    let spec = PayoffSpec::from_state_fn(&lattice, |s| payoff.value(s))?;
    let val = value_insider(&lattice, &spec, &density, &grid)?;
    let summary = val.summary(&grid);
    Ok(LatticeOracleReport {
        steps,
        base_value: summary.base_value,
        projection_value: summary.projection_value,
        expected_cei: summary.expected_cei,
        min_cei: summary.min_cei,
        min_conditional_cei: summary.min_conditional_cei,
        atoms: summary.atoms,
        weights: summary.weights,
        insider_values: summary.insider_value,
    })
}
