//! Finite filtered probability spaces.
//!
//! A [`FiltrationLattice`] is a discrete-time tree (optionally recombining)
//! standing in for `(Ω, F, 𝔽, P)`: level `k` holds the atoms of `F_k`, every
//! non-terminal node carries strictly positive transition probabilities to
//! its children, and the root is unique so `F_0` is trivial.
//!
//! On top of the lattice this module provides exact conditional
//! expectations, the discrete Snell envelope and an exhaustive enumeration
//! of node-wise stopping rules used as an oracle for the envelope.

use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};

/// Tolerance on the sum of outgoing transition probabilities.
pub const PROB_TOL: f64 = 1e-12;

/// Default cap on the number of stopping rules [`brute_force_value`] will enumerate.
pub const DEFAULT_RULE_CAP: u128 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub child: usize,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub state: f64,
    #[serde(default)]
    pub children: Vec<Transition>,
}

/// Discrete surrogate of a filtered probability space. Nodes are identified
/// by `(time, index)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeDoc", into = "LatticeDoc")]
pub struct FiltrationLattice {
    levels: Vec<Vec<Node>>,
}

#[derive(Serialize, Deserialize)]
struct LatticeDoc {
    levels: Vec<Vec<Node>>,
}

impl TryFrom<LatticeDoc> for FiltrationLattice {
    type Error = Error;

    fn try_from(doc: LatticeDoc) -> Result<Self> {
        FiltrationLattice::from_levels(doc.levels)
    }
}

impl From<FiltrationLattice> for LatticeDoc {
    fn from(lattice: FiltrationLattice) -> Self {
        LatticeDoc {
            levels: lattice.levels,
        }
    }
}

impl FiltrationLattice {
    /// Builds a lattice from explicit levels, checking every structural invariant.
    pub fn from_levels(levels: Vec<Vec<Node>>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidLattice(msg));
        if levels.len() < 2 {
            return invalid("a lattice needs at least one time step".into());
        }
        if levels[0].len() != 1 {
            return invalid(format!(
                "time 0 must hold exactly one node, found {}",
                levels[0].len()
            ));
        }
        let last = levels.len() - 1;
        for (k, level) in levels.iter().enumerate() {
            if level.is_empty() {
                return invalid(format!("time {k} has no nodes"));
            }
            let mut has_parent = vec![false; levels.get(k + 1).map_or(0, Vec::len)];
            for (i, node) in level.iter().enumerate() {
                if !node.state.is_finite() {
                    return invalid(format!("node ({k}, {i}) has a non-finite state"));
                }
                if k == last {
                    if !node.children.is_empty() {
                        return invalid(format!("terminal node ({k}, {i}) has children"));
                    }
                    continue;
                }
                if node.children.is_empty() {
                    return invalid(format!("node ({k}, {i}) has no children"));
                }
                let mut total = 0.0;
                for (j, tr) in node.children.iter().enumerate() {
                    if tr.child >= has_parent.len() {
                        return invalid(format!(
                            "node ({k}, {i}) points at missing child {}",
                            tr.child
                        ));
                    }
                    if node.children[..j].iter().any(|o| o.child == tr.child) {
                        return invalid(format!(
                            "node ({k}, {i}) lists child {} twice",
                            tr.child
                        ));
                    }
                    if !(tr.prob > 0.0 && tr.prob.is_finite()) {
                        return invalid(format!(
                            "node ({k}, {i}) has non-positive transition probability {}",
                            tr.prob
                        ));
                    }
                    has_parent[tr.child] = true;
                    total += tr.prob;
                }
                if (total - 1.0).abs() > PROB_TOL {
                    return invalid(format!(
                        "node ({k}, {i}) transition probabilities sum to {total}"
                    ));
                }
            }
            if let Some(orphan) = has_parent.iter().position(|p| !p) {
                return invalid(format!("node ({}, {orphan}) has no parent", k + 1));
            }
        }
        Ok(FiltrationLattice { levels })
    }

    /// Number of time steps `N`; levels are indexed `0..=N`.
    pub fn n_steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &[Node] {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<Node>] {
        &self.levels
    }

    pub fn width(&self, k: usize) -> usize {
        self.levels[k].len()
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn states(&self, k: usize) -> Vec<f64> {
        self.levels[k].iter().map(|n| n.state).collect()
    }

    /// `E[X_{k+1} | F_k]` for values given at level `k + 1`.
    pub fn expect_next(&self, k: usize, next: &[f64]) -> Vec<f64> {
        self.levels[k]
            .iter()
            .map(|node| {
                node.children
                    .iter()
                    .map(|tr| tr.prob * next[tr.child])
                    .sum()
            })
            .collect()
    }

    /// Unconditional probability of reaching each node.
    pub fn reach_probabilities(&self) -> Vec<Vec<f64>> {
        let mut reach: Vec<Vec<f64>> = self.levels.iter().map(|l| vec![0.0; l.len()]).collect();
        reach[0][0] = 1.0;
        for k in 0..self.n_steps() {
            for (i, node) in self.levels[k].iter().enumerate() {
                let p = reach[k][i];
                for tr in &node.children {
                    reach[k + 1][tr.child] += p * tr.prob;
                }
            }
        }
        reach
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Recombining binomial lattice: node `(k, i)` has seen `i` up-moves and
/// carries state `s0 · up^i · down^(k-i)`.
pub fn build_binomial(s0: f64, up: f64, down: f64, p: f64, n_steps: usize) -> Result<FiltrationLattice> {
    check_binomial(s0, up, down, p, n_steps)?;
    let levels = (0..=n_steps)
        .map(|k| {
            (0..=k)
                .map(|i| Node {
                    state: s0 * up.powi(i as i32) * down.powi((k - i) as i32),
                    children: if k == n_steps {
                        Vec::new()
                    } else {
                        vec![
                            Transition { child: i, prob: 1.0 - p },
                            Transition { child: i + 1, prob: p },
                        ]
                    },
                })
                .collect()
        })
        .collect();
    FiltrationLattice::from_levels(levels)
}

/// Non-recombining binomial tree: node `(k, i)` encodes the path in the bits
/// of `i` (bit set = up-move), so every node is a distinct atom of `F_k`.
pub fn binomial_tree(s0: f64, up: f64, down: f64, p: f64, n_steps: usize) -> Result<FiltrationLattice> {
    check_binomial(s0, up, down, p, n_steps)?;
    if n_steps > 20 {
        return domain(format!("non-recombining tree with {n_steps} steps is too large"));
    }
    let levels = (0..=n_steps)
        .map(|k| {
            (0..1usize << k)
                .map(|i| {
                    let ups = i.count_ones() as i32;
                    Node {
                        state: s0 * up.powi(ups) * down.powi(k as i32 - ups),
                        children: if k == n_steps {
                            Vec::new()
                        } else {
                            vec![
                                Transition { child: 2 * i, prob: 1.0 - p },
                                Transition { child: 2 * i + 1, prob: p },
                            ]
                        },
                    }
                })
                .collect()
        })
        .collect();
    FiltrationLattice::from_levels(levels)
}

fn check_binomial(s0: f64, up: f64, down: f64, p: f64, n_steps: usize) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("probability must lie in (0, 1), got {p}"));
    }
    if !(down > 0.0 && up > down && up.is_finite()) {
        return domain(format!("need up > down > 0, got up = {up}, down = {down}"));
    }
    if !s0.is_finite() {
        return domain("initial state must be finite");
    }
    if n_steps == 0 {
        return domain("n_steps must be at least 1");
    }
    Ok(())
}

/// Real-valued adapted process: one value per lattice node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeProcess {
    values: Vec<Vec<f64>>,
}

impl NodeProcess {
    pub fn from_fn(lattice: &FiltrationLattice, mut f: impl FnMut(usize, usize, &Node) -> f64) -> Self {
        let values = lattice
            .levels()
            .iter()
            .enumerate()
            .map(|(k, level)| level.iter().enumerate().map(|(i, n)| f(k, i, n)).collect())
            .collect();
        NodeProcess { values }
    }

    pub fn constant(lattice: &FiltrationLattice, c: f64) -> Self {
        Self::from_fn(lattice, |_, _, _| c)
    }

    pub fn from_levels(lattice: &FiltrationLattice, values: Vec<Vec<f64>>) -> Result<Self> {
        let process = NodeProcess { values };
        process.check_shape(lattice)?;
        Ok(process)
    }

    pub(crate) fn from_levels_unchecked(values: Vec<Vec<f64>>) -> Self {
        NodeProcess { values }
    }

    pub fn check_shape(&self, lattice: &FiltrationLattice) -> Result<()> {
        if self.values.len() != lattice.n_steps() + 1 {
            return shape(format!(
                "process has {} levels, lattice has {}",
                self.values.len(),
                lattice.n_steps() + 1
            ));
        }
        for (k, level) in self.values.iter().enumerate() {
            if level.len() != lattice.width(k) {
                return shape(format!(
                    "process has {} values at time {k}, lattice has {} nodes",
                    level.len(),
                    lattice.width(k)
                ));
            }
        }
        Ok(())
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k][i]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

/// `E[X_s | F_t]` for values `X_s` given on level `s`, returned on level `t ≤ s`.
pub fn conditional_expectation(
    lattice: &FiltrationLattice,
    values: &[f64],
    s: usize,
    t: usize,
) -> Result<Vec<f64>> {
    if s > lattice.n_steps() || t > s {
        return shape(format!(
            "cannot condition level {s} on level {t} in a {}-step lattice",
            lattice.n_steps()
        ));
    }
    if values.len() != lattice.width(s) {
        return shape(format!(
            "{} values supplied for {} nodes at time {s}",
            values.len(),
            lattice.width(s)
        ));
    }
    let mut current = values.to_vec();
    for k in (t..s).rev() {
        current = lattice.expect_next(k, &current);
    }
    Ok(current)
}

/// Payoff `R = L 1_[0,T) + ξ 1_{T}`: barrier `L` on every node and terminal
/// value `ξ` on the last level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    barrier: NodeProcess,
    terminal: Vec<f64>,
}

impl PayoffSpec {
    pub fn new(lattice: &FiltrationLattice, barrier: NodeProcess, terminal: Vec<f64>) -> Result<Self> {
        barrier.check_shape(lattice)?;
        let n = lattice.n_steps();
        if terminal.len() != lattice.width(n) {
            return shape(format!(
                "{} terminal values for {} terminal nodes",
                terminal.len(),
                lattice.width(n)
            ));
        }
        for (i, (&l, &x)) in barrier.level(n).iter().zip(&terminal).enumerate() {
            if !(0.0 <= l && l <= x) || !x.is_finite() {
                return domain(format!(
                    "terminal node {i} violates 0 <= L_T <= xi (L_T = {l}, xi = {x})"
                ));
            }
        }
        if barrier.iter().any(|v| !v.is_finite()) {
            return domain("barrier must be finite");
        }
        Ok(PayoffSpec { barrier, terminal })
    }

    /// Exercise value `f(state)` at every node, same function at maturity.
    pub fn from_state_fn(lattice: &FiltrationLattice, f: impl Fn(f64) -> f64) -> Result<Self> {
        let barrier = NodeProcess::from_fn(lattice, |_, _, node| f(node.state));
        let terminal = barrier.level(lattice.n_steps()).to_vec();
        Self::new(lattice, barrier, terminal)
    }

    pub fn put(lattice: &FiltrationLattice, strike: f64) -> Result<Self> {
        Self::from_state_fn(lattice, |s| (strike - s).max(0.0))
    }

    pub fn call(lattice: &FiltrationLattice, strike: f64) -> Result<Self> {
        Self::from_state_fn(lattice, |s| (s - strike).max(0.0))
    }

    pub fn constant(lattice: &FiltrationLattice, c: f64) -> Result<Self> {
        Self::from_state_fn(lattice, |_| c)
    }

    pub fn barrier(&self) -> &NodeProcess {
        &self.barrier
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub(crate) fn check_lattice(&self, lattice: &FiltrationLattice) -> Result<()> {
        self.barrier.check_shape(lattice)?;
        if self.terminal.len() != lattice.width(lattice.n_steps()) {
            return shape("payoff terminal slice does not match the lattice");
        }
        Ok(())
    }
}

/// Node-wise exercise flags; the induced stopping time is the first flagged
/// node along each path. Terminal nodes are always flagged.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingRule {
    flags: Vec<Vec<bool>>,
}

impl StoppingRule {
    pub fn new(lattice: &FiltrationLattice, flags: Vec<Vec<bool>>) -> Result<Self> {
        if flags.len() != lattice.n_steps() + 1
            || flags.iter().enumerate().any(|(k, l)| l.len() != lattice.width(k))
        {
            return shape("stopping flags do not match the lattice");
        }
        if flags[lattice.n_steps()].iter().any(|f| !f) {
            return domain("every terminal node must be flagged");
        }
        Ok(StoppingRule { flags })
    }

    /// Rule that stops at the first node at or after time `t`.
    pub fn immediate(lattice: &FiltrationLattice, t: usize) -> Self {
        let flags = (0..=lattice.n_steps())
            .map(|k| vec![k >= t; lattice.width(k)])
            .collect();
        StoppingRule { flags }
    }

    pub fn stops_at(&self, k: usize, i: usize) -> bool {
        self.flags[k][i]
    }

    pub fn flags(&self) -> &[Vec<bool>] {
        &self.flags
    }
}

/// Value of following `rule` from time `t` on: `E[R(τ) | F_t]` per node at level `t`.
pub fn evaluate_rule(
    lattice: &FiltrationLattice,
    payoff: &PayoffSpec,
    rule: &StoppingRule,
    t: usize,
) -> Result<Vec<f64>> {
    payoff.check_lattice(lattice)?;
    let n = lattice.n_steps();
    if t > n {
        return shape(format!("time {t} beyond horizon {n}"));
    }
    let mut value = payoff.terminal().to_vec();
    for k in (t..n).rev() {
        let cont = lattice.expect_next(k, &value);
        value = cont
            .into_iter()
            .enumerate()
            .map(|(i, c)| if rule.stops_at(k, i) { payoff.barrier().get(k, i) } else { c })
            .collect();
    }
    Ok(value)
}

/// Discrete Snell envelope with its optimal rule and reflection increments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnellResult {
    /// `Y_k = max(L_k, E[Y_{k+1} | F_k])`, `Y_N = ξ`.
    pub value: NodeProcess,
    /// First node where `Y = L` (ties stop), terminal nodes always.
    pub rule: StoppingRule,
    /// `ΔK_k = max(0, Y_k − E[Y_{k+1} | F_k])`; zero on the terminal level.
    pub increments: NodeProcess,
}

impl SnellResult {
    pub fn value_at(&self, k: usize, i: usize) -> f64 {
        self.value.get(k, i)
    }

    /// `Σ_nodes (Y − L)·ΔK`; zero for a genuine discrete reflection.
    pub fn skorokhod_residual(&self, payoff: &PayoffSpec) -> f64 {
        self.value
            .iter()
            .zip(payoff.barrier().iter())
            .zip(self.increments.iter())
            .map(|((y, l), dk)| (y - l) * dk)
            .sum()
    }
}

pub fn snell_envelope(lattice: &FiltrationLattice, payoff: &PayoffSpec) -> Result<SnellResult> {
    payoff.check_lattice(lattice)?;
    let n = lattice.n_steps();
    let mut value = vec![Vec::new(); n + 1];
    let mut increments = vec![Vec::new(); n + 1];
    let mut flags = vec![Vec::new(); n + 1];
    value[n] = payoff.terminal().to_vec();
    increments[n] = vec![0.0; lattice.width(n)];
    flags[n] = vec![true; lattice.width(n)];
    for k in (0..n).rev() {
        let cont = lattice.expect_next(k, &value[k + 1]);
        let barrier = payoff.barrier().level(k);
        let mut y = Vec::with_capacity(cont.len());
        let mut dk = Vec::with_capacity(cont.len());
        let mut stop = Vec::with_capacity(cont.len());
        for (&c, &l) in cont.iter().zip(barrier) {
            if l >= c {
                y.push(l);
                dk.push(l - c);
                stop.push(true);
            } else {
                y.push(c);
                dk.push(0.0);
                stop.push(false);
            }
        }
        value[k] = y;
        increments[k] = dk;
        flags[k] = stop;
    }
    Ok(SnellResult {
        value: NodeProcess { values: value },
        rule: StoppingRule { flags },
        increments: NodeProcess { values: increments },
    })
}

/// Outcome of exhaustive stopping-rule enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    /// Maximal `E[R(τ) | F_t]` per node at level `t`.
    pub values: Vec<f64>,
    /// A rule attaining the maximum of the reach-weighted sum of `values`.
    pub rule: StoppingRule,
    pub rules_enumerated: u128,
}

/// Literal supremum over every adapted node-wise stopping rule valued in
/// `[t, N]`, found by enumerating all `2^m` flag patterns on the `m`
/// non-terminal nodes at times `t..N`.
pub fn brute_force_value(
    lattice: &FiltrationLattice,
    payoff: &PayoffSpec,
    t: usize,
    cap: u128,
) -> Result<BruteForce> {
    payoff.check_lattice(lattice)?;
    let n = lattice.n_steps();
    if t > n {
        return shape(format!("time {t} beyond horizon {n}"));
    }
    let free: Vec<(usize, usize)> = (t..n)
        .flat_map(|k| (0..lattice.width(k)).map(move |i| (k, i)))
        .collect();
    let m = free.len();
    let count = if m >= 127 { u128::MAX } else { 1u128 << m };
    if count > cap {
        return Err(Error::Explosion { count, cap });
    }
    let reach = lattice.reach_probabilities();
    let mut flags: Vec<Vec<bool>> = (0..=n).map(|k| vec![k == n; lattice.width(k)]).collect();
    let mut best = vec![f64::NEG_INFINITY; lattice.width(t)];
    let mut best_score = f64::NEG_INFINITY;
    let mut best_mask = 0u128;
    // scratch buffers, one per level
    let mut value: Vec<Vec<f64>> = (0..=n).map(|k| vec![0.0; lattice.width(k)]).collect();
    value[n].copy_from_slice(payoff.terminal());
    for mask in 0..count {
        for (bit, &(k, i)) in free.iter().enumerate() {
            flags[k][i] = (mask >> bit) & 1 == 1;
        }
        for k in (t..n).rev() {
            let (lower, upper) = value.split_at_mut(k + 1);
            let next = &upper[0];
            for (i, node) in lattice.level(k).iter().enumerate() {
                lower[k][i] = if flags[k][i] {
                    payoff.barrier().get(k, i)
                } else {
                    node.children.iter().map(|tr| tr.prob * next[tr.child]).sum()
                };
            }
        }
        let at_t = &value[t];
        let mut score = 0.0;
        for (i, &v) in at_t.iter().enumerate() {
            if v > best[i] {
                best[i] = v;
            }
            score += reach[t][i] * v;
        }
        if score > best_score {
            best_score = score;
            best_mask = mask;
        }
    }
    for (bit, &(k, i)) in free.iter().enumerate() {
        flags[k][i] = (best_mask >> bit) & 1 == 1;
    }
    Ok(BruteForce {
        values: best,
        rule: StoppingRule { flags },
        rules_enumerated: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn one_step_binomial_states() {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        assert_eq!(lat.n_steps(), 1);
        assert_eq!(sorted(lat.states(1)), vec![0.5, 2.0]);
    }

    #[test]
    fn three_step_power_table() {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 3).unwrap();
        assert_eq!(sorted(lat.states(3)), vec![0.125, 0.5, 2.0, 8.0]);
    }

    #[test]
    fn two_step_path_probability() {
        let lat = build_binomial(100.0, 1.1, 0.9, 0.4, 2).unwrap();
        assert_eq!(lat.states(0), vec![100.0]);
        let states = lat.states(2);
        for (s, expected) in states.iter().zip([81.0, 99.0, 121.0]) {
            assert!((s - expected).abs() < 1e-12);
        }
        let reach = lat.reach_probabilities();
        assert!((reach[2][2] - 0.16).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_binomial_parameters() {
        assert!(matches!(build_binomial(1.0, 2.0, 0.5, 1.0, 1), Err(Error::Domain(_))));
        assert!(matches!(build_binomial(1.0, 0.5, 2.0, 0.5, 1), Err(Error::Domain(_))));
        assert!(matches!(build_binomial(1.0, 2.0, 0.0, 0.5, 1), Err(Error::Domain(_))));
        assert!(matches!(build_binomial(1.0, 2.0, 0.5, 0.5, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_malformed_levels() {
        let node = |children: Vec<Transition>| Node { state: 1.0, children };
        // probabilities summing to 0.9
        let bad = vec![
            vec![node(vec![Transition { child: 0, prob: 0.9 }])],
            vec![node(vec![])],
        ];
        assert!(matches!(FiltrationLattice::from_levels(bad), Err(Error::InvalidLattice(_))));
        // orphan at time 1
        let orphan = vec![
            vec![node(vec![Transition { child: 0, prob: 1.0 }])],
            vec![node(vec![]), node(vec![])],
        ];
        assert!(FiltrationLattice::from_levels(orphan).is_err());
        // two roots
        let roots = vec![vec![node(vec![]), node(vec![])]];
        assert!(FiltrationLattice::from_levels(roots).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let lat = binomial_tree(1.0, 1.5, 0.5, 0.3, 3).unwrap();
        let text = lat.to_json().unwrap();
        assert_eq!(FiltrationLattice::from_json(&text).unwrap(), lat);
        let broken = text.replacen("0.3", "0.4", 1);
        assert!(FiltrationLattice::from_json(&broken).is_err());
    }

    #[test]
    fn conditional_expectation_cases() {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let e = conditional_expectation(&lat, &[0.5, 2.0], 1, 0).unwrap();
        assert!((e[0] - 1.25).abs() < 1e-15);

        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 4).unwrap();
        let c = conditional_expectation(&lat, &[3.0; 5], 4, 2).unwrap();
        assert!(c.iter().all(|&v| (v - 3.0).abs() < 1e-15));

        // p = 1/3 with up = 2, down = 1/2 makes the state a martingale
        let lat = build_binomial(1.0, 2.0, 0.5, 1.0 / 3.0, 3).unwrap();
        for k in 0..3 {
            let e = conditional_expectation(&lat, &lat.states(k + 1), k + 1, k).unwrap();
            for (i, node) in lat.level(k).iter().enumerate() {
                let direct: f64 = node
                    .children
                    .iter()
                    .map(|tr| tr.prob * lat.level(k + 1)[tr.child].state)
                    .sum();
                assert!((e[i] - direct).abs() < 1e-15);
                assert!((e[i] - node.state).abs() < 1e-12);
            }
        }
        assert!(matches!(conditional_expectation(&lat, &[1.0], 3, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn tower_property() {
        let lat = binomial_tree(1.0, 1.3, 0.8, 0.35, 4).unwrap();
        let terminal: Vec<f64> = lat.states(4).iter().map(|s| s * s - 0.3).collect();
        let direct = conditional_expectation(&lat, &terminal, 4, 0).unwrap()[0];
        let mid = conditional_expectation(&lat, &terminal, 4, 2).unwrap();
        let via = conditional_expectation(&lat, &mid, 2, 0).unwrap()[0];
        assert!((direct - via).abs() < 1e-14);
        let reach = lat.reach_probabilities();
        let full: f64 = reach[4].iter().zip(&terminal).map(|(p, x)| p * x).sum();
        assert!((direct - full).abs() < 1e-14);
    }

    #[test]
    fn snell_constant_payoff_stops_immediately() {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 3).unwrap();
        let payoff = PayoffSpec::constant(&lat, 2.5).unwrap();
        let snell = snell_envelope(&lat, &payoff).unwrap();
        assert!(snell.value.iter().all(|v| v == 2.5));
        assert_eq!(snell.rule, StoppingRule::immediate(&lat, 0));
        let bf = brute_force_value(&lat, &payoff, 0, DEFAULT_RULE_CAP).unwrap();
        assert_eq!(bf.values, vec![2.5]);
    }

    #[test]
    fn snell_one_step_put_ties_stop() {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let payoff = PayoffSpec::put(&lat, 1.5).unwrap();
        assert_eq!(payoff.barrier().get(0, 0), 0.5);
        let snell = snell_envelope(&lat, &payoff).unwrap();
        assert_eq!(snell.value_at(0, 0), 0.5);
        assert!(snell.rule.stops_at(0, 0));
        assert_eq!(snell.increments.get(0, 0), 0.0);
        let bf = brute_force_value(&lat, &payoff, 0, DEFAULT_RULE_CAP).unwrap();
        assert_eq!(bf.rules_enumerated, 2);
        assert_eq!(bf.values, vec![0.5]);
    }

    #[test]
    fn snell_three_step_put_matches_enumeration() {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 3).unwrap();
        let payoff = PayoffSpec::put(&lat, 1.0).unwrap();
        let snell = snell_envelope(&lat, &payoff).unwrap();
        for t in 0..=3 {
            let bf = brute_force_value(&lat, &payoff, t, DEFAULT_RULE_CAP).unwrap();
            for (i, v) in bf.values.iter().enumerate() {
                assert!((v - snell.value_at(t, i)).abs() < 1e-12);
            }
        }
        let attained = evaluate_rule(&lat, &payoff, &snell.rule, 0).unwrap();
        assert!((attained[0] - snell.value_at(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn snell_envelope_invariants() {
        let lat = binomial_tree(1.0, 1.4, 0.7, 0.45, 4).unwrap();
        let payoff = PayoffSpec::put(&lat, 1.1).unwrap();
        let snell = snell_envelope(&lat, &payoff).unwrap();
        for k in 0..4 {
            let cont = lat.expect_next(k, snell.value.level(k + 1));
            for i in 0..lat.width(k) {
                let y = snell.value_at(k, i);
                assert!(y >= cont[i]);
                assert!(y >= payoff.barrier().get(k, i));
                let dk = snell.increments.get(k, i);
                assert!(dk >= 0.0);
                if dk > 0.0 {
                    assert_eq!(y, payoff.barrier().get(k, i));
                }
            }
        }
        assert_eq!(snell.value.level(4), payoff.terminal());
        assert!(snell.skorokhod_residual(&payoff).abs() < 1e-12);
    }

    #[test]
    fn brute_force_respects_cap() {
        let lat = binomial_tree(1.0, 2.0, 0.5, 0.5, 4).unwrap();
        let payoff = PayoffSpec::put(&lat, 1.0).unwrap();
        let err = brute_force_value(&lat, &payoff, 0, 1 << 10).unwrap_err();
        assert!(matches!(err, Error::Explosion { count, .. } if count == 1 << 15));
    }

    #[test]
    fn payoff_rejects_terminal_barrier_above_xi() {
        let lat = build_binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let barrier = NodeProcess::constant(&lat, 1.0);
        assert!(PayoffSpec::new(&lat, barrier, vec![0.5, 2.0]).is_err());
    }
}
