//! Insider valuation on finite lattices.
//!
//! A stopping rule of the enlarged filtration is a family `{τ(u)}` of market
//! rules, one per value of `G`, so the product-space problem splits into one
//! Snell envelope per atom with reward `R(u, ·) = L α(u)` (`ξ α_N(u)` at
//! maturity). The insider value is `Y_t(u)/α_t(u)`; its conditional average
//! is the projection value, and the gap to the ordinary Snell value is the
//! cost of extra information (CEI).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{LatticeDensity, UGrid};
use crate::error::{domain, shape, Error, Result};
use crate::lattice::{snell_envelope, FiltrationLattice, NodeProcess, PayoffSpec, SnellResult, StoppingRule};

/// Below this density the insider value `Y/α` is not computed.
pub const MIN_DENSITY: f64 = 1e-300;

/// Tolerance below zero within which a CEI is reported as clipped.
pub const CEI_TOL: f64 = 1e-12;

/// Largest lattice the conditioned dynamic-programming oracle accepts.
pub const ORACLE_MAX_STEPS: usize = 12;
pub const ORACLE_MAX_ATOMS: usize = 64;
/// Cap on refined nodes (lattice nodes × atoms) visited by the oracle.
pub const ORACLE_NODE_CAP: u128 = 1 << 20;

/// `R(u, t)` per `[time][node][atom]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductPayoff {
    values: Vec<Vec<Vec<f64>>>,
    n_atoms: usize,
}

impl ProductPayoff {
    pub fn value(&self, k: usize, i: usize, atom: usize) -> f64 {
        self.values[k][i][atom]
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// The reward of one atom as an ordinary lattice payoff.
    pub fn atom_payoff(&self, lattice: &FiltrationLattice, atom: usize) -> Result<PayoffSpec> {
        let n = self.values.len() - 1;
        let barrier = NodeProcess::from_levels(
            lattice,
            self.values
                .iter()
                .map(|level| level.iter().map(|r| r[atom]).collect())
                .collect(),
        )?;
        let terminal = self.values[n].iter().map(|r| r[atom]).collect();
        PayoffSpec::new(lattice, barrier, terminal)
    }
}

/// `R(u, k) = L_k α_k(u)` for `k < N` and `ξ α_N(u)` at `N`.
pub fn product_payoff(lattice: &FiltrationLattice, payoff: &PayoffSpec, density: &LatticeDensity) -> Result<ProductPayoff> {
    payoff.check_lattice(lattice)?;
    if density.n_levels() != lattice.n_steps() + 1 {
        return shape("density does not match the lattice");
    }
    let n = lattice.n_steps();
    let values = (0..=n)
        .map(|k| {
            (0..lattice.width(k))
                .map(|i| {
                    let base = if k == n { payoff.terminal()[i] } else { payoff.barrier().get(k, i) };
                    density.at(k, i).iter().map(|a| base * a).collect()
                })
                .collect()
        })
        .collect();
    Ok(ProductPayoff {
        values,
        n_atoms: density.n_atoms(),
    })
}

/// One Snell envelope per atom, `Y_t(u) = ess sup_τ E[R(u, τ) | F_t]`.
pub fn parametrized_snell(
    lattice: &FiltrationLattice,
    product: &ProductPayoff,
    grid: &UGrid,
) -> Result<Vec<SnellResult>> {
    if product.n_atoms() != grid.len() {
        return shape(format!("payoff has {} atoms, grid has {}", product.n_atoms(), grid.len()));
    }
    (0..grid.len())
        .into_par_iter()
        .map(|a| snell_envelope(lattice, &product.atom_payoff(lattice, a)?))
        .collect()
}

/// `V^G_t = Y_t(u)/α_t(u)` at one node and atom.
pub fn insider_value(
    parametrized: &[SnellResult],
    density: &LatticeDensity,
    t: usize,
    node: usize,
    atom: usize,
) -> Result<f64> {
    let alpha = density.alpha(t, node, atom);
    if !(alpha >= MIN_DENSITY) {
        return Err(Error::DegenerateDensity {
            alpha,
            time: t,
            node,
            atom,
        });
    }
    Ok(parametrized[atom].value_at(t, node) / alpha)
}

/// `Σ_i Y_t(u_i) w_i`, the value of the best rule of the enlarged filtration
/// seen from the market filtration. Equals `Σ_i Ŷ_t(u_i) α_t(u_i) w_i`.
pub fn projection_value(parametrized: &[SnellResult], grid: &UGrid, t: usize, node: usize) -> f64 {
    parametrized
        .iter()
        .zip(grid.weights())
        .map(|(y, w)| y.value_at(t, node) * w)
        .sum()
}

/// `Σ_i Ŷ_t(u_i) w_i`: the insider value integrated against the prior rather
/// than the conditional law. Agrees with [`projection_value`] at `t = 0`
/// only; reported for comparison.
pub fn projection_value_prior(
    parametrized: &[SnellResult],
    density: &LatticeDensity,
    grid: &UGrid,
    t: usize,
    node: usize,
) -> Result<f64> {
    (0..grid.len())
        .map(|a| Ok(insider_value(parametrized, density, t, node, a)? * grid.weights()[a]))
        .sum()
}

/// CEI at one point; `clipped` marks values in `[−CEI_TOL, 0)` reported as zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cei {
    pub value: f64,
    pub clipped: bool,
}

/// `CEI = V^G − Y`.
pub fn cei(insider: f64, base: f64) -> Cei {
    let raw = insider - base;
    if raw < 0.0 && raw >= -CEI_TOL {
        Cei {
            value: 0.0,
            clipped: true,
        }
    } else {
        Cei {
            value: raw,
            clipped: false,
        }
    }
}

/// `P(G = u_atom | F_k)` per node, aggregated backwards from the terminal laws.
fn conditional_mass(lattice: &FiltrationLattice, g_map: &[Vec<f64>], atom: usize) -> Vec<Vec<f64>> {
    let n = lattice.n_steps();
    let mut q = vec![Vec::new(); n + 1];
    q[n] = g_map.iter().map(|law| law[atom]).collect();
    for k in (0..n).rev() {
        q[k] = lattice.expect_next(k, &q[k + 1]);
    }
    q
}

fn check_oracle_input(lattice: &FiltrationLattice, g_map: &[Vec<f64>], grid: &UGrid) -> Result<()> {
    let n = lattice.n_steps();
    let refined = (lattice.node_count() * grid.len()) as u128;
    if n > ORACLE_MAX_STEPS || grid.len() > ORACLE_MAX_ATOMS || refined > ORACLE_NODE_CAP {
        log::debug!(
            "oracle limits: {n} steps (max {ORACLE_MAX_STEPS}), {} atoms (max {ORACLE_MAX_ATOMS})",
            grid.len()
        );
        return Err(Error::Explosion {
            count: refined.max(if n > ORACLE_MAX_STEPS || grid.len() > ORACLE_MAX_ATOMS {
                ORACLE_NODE_CAP + 1
            } else {
                0
            }),
            cap: ORACLE_NODE_CAP,
        });
    }
    if g_map.len() != lattice.width(n) || g_map.iter().any(|l| l.len() != grid.len()) {
        return shape("conditional laws do not match the lattice and grid");
    }
    Ok(())
}

/// Dynamic programming on the tree refined by `G`: conditioning on `G = u`
/// turns each transition `p` into `p · P(G=u | child) / P(G=u | node)`, and
/// the insider value is the ordinary Snell envelope of the original payoff
/// under these transitions. Returns the value per `[node][atom]` at level
/// `t`; `None` where `G = u` is impossible given the node.
pub fn enlarged_dp_oracle(
    lattice: &FiltrationLattice,
    payoff: &PayoffSpec,
    g_map: &[Vec<f64>],
    grid: &UGrid,
    t: usize,
) -> Result<Vec<Vec<Option<f64>>>> {
    payoff.check_lattice(lattice)?;
    check_oracle_input(lattice, g_map, grid)?;
    let n = lattice.n_steps();
    if t > n {
        return shape(format!("time {t} beyond horizon {n}"));
    }
    let per_atom: Vec<Vec<Option<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|a| {
            let q = conditional_mass(lattice, g_map, a);
            let mut value: Vec<Option<f64>> = (0..lattice.width(n))
                .map(|i| (q[n][i] > 0.0).then(|| payoff.terminal()[i]))
                .collect();
            for k in (t..n).rev() {
                value = lattice
                    .level(k)
                    .iter()
                    .enumerate()
                    .map(|(i, node)| {
                        if q[k][i] <= 0.0 {
                            return None;
                        }
                        let cont: f64 = node
                            .children
                            .iter()
                            .filter(|tr| q[k + 1][tr.child] > 0.0)
                            .map(|tr| {
                                let p = tr.prob * q[k + 1][tr.child] / q[k][i];
                                p * value[tr.child].unwrap_or(0.0)
                            })
                            .sum();
                        Some(payoff.barrier().get(k, i).max(cont))
                    })
                    .collect();
            }
            value
        })
        .collect();
    Ok((0..lattice.width(t))
        .map(|i| per_atom.iter().map(|v| v[i]).collect())
        .collect())
}

/// Value of following `rule` from time `t` when `G = u_atom` is known:
/// `E[R(τ) | F_t, G = u]` per node at level `t` (`None` where impossible).
pub fn conditional_rule_value(
    lattice: &FiltrationLattice,
    payoff: &PayoffSpec,
    g_map: &[Vec<f64>],
    atom: usize,
    rule: &StoppingRule,
    t: usize,
) -> Result<Vec<Option<f64>>> {
    payoff.check_lattice(lattice)?;
    let n = lattice.n_steps();
    if t > n || g_map.len() != lattice.width(n) || g_map.iter().any(|l| atom >= l.len()) {
        return shape("rule evaluation inputs do not match the lattice");
    }
    let q = conditional_mass(lattice, g_map, atom);
    let mut value: Vec<f64> = payoff.terminal().to_vec();
    for k in (t..n).rev() {
        value = lattice
            .level(k)
            .iter()
            .enumerate()
            .map(|(i, node)| {
                if rule.stops_at(k, i) {
                    return payoff.barrier().get(k, i);
                }
                if q[k][i] <= 0.0 {
                    return 0.0;
                }
                node.children
                    .iter()
                    .map(|tr| tr.prob * q[k + 1][tr.child] / q[k][i] * value[tr.child])
                    .sum()
            })
            .collect();
    }
    Ok(value
        .into_iter()
        .enumerate()
        .map(|(i, v)| (q[t][i] > 0.0).then_some(v))
        .collect())
}

/// Insider value, projection value, base value and CEI on every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsiderValuation {
    /// `Y_t(u)` per `[time][node][atom]`.
    pub parametrized_value: Vec<Vec<Vec<f64>>>,
    /// `V^G_t(u)` per `[time][node][atom]`; `None` where `α = 0`.
    pub insider_value: Vec<Vec<Vec<Option<f64>>>>,
    /// Projection value per `[time][node]`.
    pub projection_value: Vec<Vec<f64>>,
    /// Ordinary Snell value per `[time][node]`.
    pub base_value: Vec<Vec<f64>>,
    /// `V^G − Y` per `[time][node][atom]`; `None` where `α = 0`.
    pub cei: Vec<Vec<Vec<Option<Cei>>>>,
}

impl InsiderValuation {
    /// `E[CEI_0] = Σ_i (V^G_0(u_i) − Y_0) w_i`.
    pub fn expected_cei(&self, grid: &UGrid) -> f64 {
        self.cei[0][0]
            .iter()
            .zip(grid.weights())
            .map(|(c, w)| c.map_or(0.0, |c| c.value) * w)
            .sum()
    }

    /// `E[CEI_t | F_t] = projection − base` at one node: the value of the
    /// information before it is revealed. Nonnegative, since every market
    /// rule is also an insider rule; per-atom CEI can be negative (bad news).
    pub fn conditional_cei(&self, t: usize, node: usize) -> f64 {
        self.projection_value[t][node] - self.base_value[t][node]
    }

    /// Smallest conditional CEI over all nodes.
    pub fn min_conditional_cei(&self) -> f64 {
        self.projection_value
            .iter()
            .zip(&self.base_value)
            .flat_map(|(p, b)| p.iter().zip(b).map(|(p, b)| p - b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest per-atom CEI over all nodes and atoms.
    pub fn min_cei(&self) -> f64 {
        self.cei
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .map(|c| c.value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn summary(&self, grid: &UGrid) -> ValuationSummary {
        ValuationSummary {
            base_value: self.base_value[0][0],
            projection_value: self.projection_value[0][0],
            expected_cei: self.expected_cei(grid),
            min_cei: self.min_cei(),
            min_conditional_cei: self.min_conditional_cei(),
            atoms: grid.atoms().to_vec(),
            weights: grid.weights().to_vec(),
            insider_value: self.insider_value[0][0].clone(),
        }
    }

    /// Writes `time,node,atom,y_u,alpha,insider_value,cei` rows.
    pub fn write_csv<W: Write>(&self, density: &LatticeDensity, grid: &UGrid, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            time: usize,
            node: usize,
            atom: f64,
            y_u: f64,
            alpha: f64,
            insider_value: Option<f64>,
            cei: Option<f64>,
        }
        let mut out = csv::Writer::from_writer(writer);
        for (k, level) in self.parametrized_value.iter().enumerate() {
            for (i, ys) in level.iter().enumerate() {
                for (a, &y) in ys.iter().enumerate() {
                    out.serialize(Row {
                        time: k,
                        node: i,
                        atom: grid.atoms()[a],
                        y_u: y,
                        alpha: density.alpha(k, i, a),
                        insider_value: self.insider_value[k][i][a],
                        cei: self.cei[k][i][a].map(|c| c.value),
                    })?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Scalar summary at time zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuationSummary {
    pub base_value: f64,
    pub projection_value: f64,
    pub expected_cei: f64,
    /// Smallest per-atom CEI over the tree.
    pub min_cei: f64,
    /// Smallest `projection − base` over the tree.
    pub min_conditional_cei: f64,
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
    pub insider_value: Vec<Option<f64>>,
}

impl ValuationSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Full insider valuation of `payoff` under `density`.
pub fn value_insider(
    lattice: &FiltrationLattice,
    payoff: &PayoffSpec,
    density: &LatticeDensity,
    grid: &UGrid,
) -> Result<InsiderValuation> {
    density.check_shape(lattice, grid)?;
    if (0..grid.len()).any(|a| density.alpha(0, 0, a) <= 0.0) {
        return domain("density vanishes at the root");
    }
    let product = product_payoff(lattice, payoff, density)?;
    let param = parametrized_snell(lattice, &product, grid)?;
    let base = snell_envelope(lattice, payoff)?;
    let n = lattice.n_steps();
    let mut parametrized_value = Vec::with_capacity(n + 1);
    let mut insider = Vec::with_capacity(n + 1);
    let mut projection = Vec::with_capacity(n + 1);
    let mut base_value = Vec::with_capacity(n + 1);
    let mut ceis = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let width = lattice.width(k);
        let mut pv = Vec::with_capacity(width);
        let mut iv = Vec::with_capacity(width);
        let mut cv = Vec::with_capacity(width);
        for i in 0..width {
            let y = base.value_at(k, i);
            let v: Vec<Option<f64>> = (0..grid.len())
                .map(|a| {
                    let v = insider_value(&param, density, k, i, a).ok();
                    // ξα_N/α_N = ξ; use the identity rather than the rounded quotient
                    if k == n { v.map(|_| payoff.terminal()[i]) } else { v }
                })
                .collect();
            cv.push(v.iter().map(|v| v.map(|v| cei(v, y))).collect());
            pv.push(param.iter().map(|p| p.value_at(k, i)).collect());
            iv.push(v);
        }
        parametrized_value.push(pv);
        insider.push(iv);
        projection.push((0..width).map(|i| projection_value(&param, grid, k, i)).collect());
        base_value.push(base.value.level(k).to_vec());
        ceis.push(cv);
    }
    Ok(InsiderValuation {
        parametrized_value,
        insider_value: insider,
        projection_value: projection,
        base_value,
        cei: ceis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{lattice_density, lattice_density_allowing_null, smooth_conditional_laws};
    use crate::lattice::{brute_force_value, build_binomial, evaluate_rule, DEFAULT_RULE_CAP};

    /// Strike-1.5 put on the one-step (1, 2, 0.5, 0.5) tree, `G` = terminal state.
    fn hand_case() -> (FiltrationLattice, PayoffSpec, Vec<Vec<f64>>, UGrid) {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let put = PayoffSpec::put(&lat, 1.5).unwrap();
        // terminal node 0 is the down state 0.5, node 1 the up state 2;
        // atoms ordered [0.5, 2]
        let g_map = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let grid = UGrid::new(vec![0.5, 2.0], vec![0.5, 0.5]).unwrap();
        (lat, put, g_map, grid)
    }

    #[test]
    fn one_step_put_hand_values() {
        let (lat, put, g_map, grid) = hand_case();
        let density = lattice_density_allowing_null(&lat, &g_map, &grid).unwrap();
        let val = value_insider(&lat, &put, &density, &grid).unwrap();
        assert_eq!(val.base_value[0][0], 0.5);
        // atom 0 is u = 0.5 (down: put pays 1), atom 1 is u = 2 (up: pays 0)
        assert_eq!(val.insider_value[0][0], vec![Some(1.0), Some(0.5)]);
        assert_eq!(val.projection_value[0][0], 0.75);
        assert_eq!(val.expected_cei(&grid), 0.25);
        assert_eq!(val.cei[0][0][0].unwrap().value, 0.5);
        assert_eq!(val.cei[0][0][1].unwrap().value, 0.0);
        let oracle = enlarged_dp_oracle(&lat, &put, &g_map, &grid, 0).unwrap();
        assert_eq!(oracle[0], vec![Some(1.0), Some(0.5)]);
        // brute force per atom on the product payoff
        let product = product_payoff(&lat, &put, &density).unwrap();
        for (a, expect) in [(0, 1.0), (1, 0.5)] {
            let bf = brute_force_value(&lat, &product.atom_payoff(&lat, a).unwrap(), 0, DEFAULT_RULE_CAP).unwrap();
            assert_eq!(bf.values[0], expect);
            assert_eq!(bf.rules_enumerated, 2);
        }
    }

    #[test]
    fn smoothed_product_payoff() {
        let (lat, put, g_map, grid) = hand_case();
        let smooth = vec![vec![0.99, 0.01], vec![0.01, 0.99]];
        let _ = g_map;
        let density = lattice_density(&lat, &smooth, &grid).unwrap();
        let product = product_payoff(&lat, &put, &density).unwrap();
        // up node (1), atom u = 2 (index 1): α = 1.98, ξ = 0
        assert!((density.alpha(1, 1, 1) - 1.98).abs() < 1e-15);
        assert_eq!(product.value(1, 1, 1), 0.0);
        assert_eq!(product.value(0, 0, 0), 0.5);
        assert_eq!(product.value(0, 0, 1), 0.5);
    }

    #[test]
    fn terminal_cei_is_zero_and_independence_gives_zero() {
        let lat = build_binomial(100.0, 1.1, 0.9, 0.45, 4).unwrap();
        let put = PayoffSpec::put(&lat, 100.0).unwrap();
        let grid = UGrid::new(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
        let density = LatticeDensity::independent(&lat, 3);
        let val = value_insider(&lat, &put, &density, &grid).unwrap();
        assert!(val.cei.iter().flatten().flatten().all(|c| c.unwrap().value == 0.0));
        let base = snell_envelope(&lat, &put).unwrap();
        assert_eq!(val.projection_value[0][0], base.value_at(0, 0));

        let g_map: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let x = 0.1 + 0.2 * i as f64;
                let raw = [1.0 - x, 1.0, x];
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        let reach = lat.reach_probabilities();
        let prior: Vec<f64> = (0..3).map(|a| (0..5).map(|i| reach[4][i] * g_map[i][a]).sum()).collect();
        let grid = UGrid::new(vec![-1.0, 0.0, 1.0], prior).unwrap();
        let density = lattice_density(&lat, &g_map, &grid).unwrap();
        let val = value_insider(&lat, &put, &density, &grid).unwrap();
        for c in val.cei[4].iter().flatten() {
            assert_eq!(c.unwrap().value, 0.0);
        }
        assert!(val.min_conditional_cei() >= -CEI_TOL);
        let oracle = enlarged_dp_oracle(&lat, &put, &g_map, &grid, 0).unwrap();
        for a in 0..3 {
            assert!((oracle[0][a].unwrap() - val.insider_value[0][0][a].unwrap()).abs() < 1e-12);
        }
        // smoothing with the prior keeps the grid consistent
        let smooth = smooth_conditional_laws(&g_map, &grid, 1e-3);
        assert!(lattice_density(&lat, &smooth, &grid).is_ok());
    }

    #[test]
    fn per_atom_rule_attains_its_value() {
        let lat = build_binomial(1.0, 1.3, 0.8, 0.5, 3).unwrap();
        let put = PayoffSpec::put(&lat, 1.05).unwrap();
        let g_map: Vec<Vec<f64>> = (0..4).map(|i| vec![0.2 + 0.15 * i as f64, 0.8 - 0.15 * i as f64]).collect();
        let reach = lat.reach_probabilities();
        let prior: Vec<f64> = (0..2).map(|a| (0..4).map(|i| reach[3][i] * g_map[i][a]).sum()).collect();
        let grid = UGrid::new(vec![0.0, 1.0], prior).unwrap();
        let density = lattice_density(&lat, &g_map, &grid).unwrap();
        let product = product_payoff(&lat, &put, &density).unwrap();
        let param = parametrized_snell(&lat, &product, &grid).unwrap();
        for (a, snell) in param.iter().enumerate() {
            let v = conditional_rule_value(&lat, &put, &g_map, a, &snell.rule, 0).unwrap();
            assert!((v[0].unwrap() - snell.value_at(0, 0)).abs() < 1e-12);
            // the same rule under the product payoff
            let r = evaluate_rule(&lat, &product.atom_payoff(&lat, a).unwrap(), &snell.rule, 0).unwrap();
            assert!((r[0] - snell.value_at(0, 0)).abs() < 1e-12);
        }
        let prior_form = projection_value_prior(&param, &density, &grid, 0, 0).unwrap();
        assert!((prior_form - projection_value(&param, &grid, 0, 0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_density_and_caps() {
        let (lat, put, g_map, grid) = hand_case();
        let density = lattice_density_allowing_null(&lat, &g_map, &grid).unwrap();
        let product = product_payoff(&lat, &put, &density).unwrap();
        let param = parametrized_snell(&lat, &product, &grid).unwrap();
        assert!(matches!(
            insider_value(&param, &density, 1, 1, 0),
            Err(Error::DegenerateDensity { .. })
        ));
        let big = build_binomial(1.0, 1.1, 0.9, 0.5, 13).unwrap();
        let put = PayoffSpec::put(&big, 1.0).unwrap();
        let laws = vec![vec![1.0]; 14];
        assert!(matches!(
            enlarged_dp_oracle(&big, &put, &laws, &UGrid::point(0.0), 0),
            Err(Error::Explosion { .. })
        ));
    }

    #[test]
    fn bad_news_gives_negative_atom_cei() {
        // two-step put; G reveals the terminal state up to a small noise.
        // Learning that the price ends high makes the put worth less than
        // to an uninformed holder, although the information has positive
        // value before it is revealed.
        let lat = build_binomial(1.0, 1.25, 0.8, 0.5, 2).unwrap();
        let put = PayoffSpec::put(&lat, 1.0).unwrap();
        let g_map = vec![vec![0.9, 0.05, 0.05], vec![0.05, 0.9, 0.05], vec![0.05, 0.05, 0.9]];
        let reach = lat.reach_probabilities();
        let prior: Vec<f64> = (0..3).map(|a| (0..3).map(|i| reach[2][i] * g_map[i][a]).sum()).collect();
        let grid = UGrid::new(vec![-1.0, 0.0, 1.0], prior).unwrap();
        let density = lattice_density(&lat, &g_map, &grid).unwrap();
        let val = value_insider(&lat, &put, &density, &grid).unwrap();
        assert!(val.cei[0][0][2].unwrap().value < -0.01);
        assert!(val.conditional_cei(0, 0) > 0.0);
        assert!(val.min_conditional_cei() >= -CEI_TOL);
    }

    #[test]
    fn cei_clipping() {
        assert_eq!(cei(1.0, 1.0 + 1e-13), Cei { value: 0.0, clipped: true });
        assert!(!cei(1.0, 1.1).clipped);
        assert!(cei(1.0, 1.1).value < 0.0);
    }
}
