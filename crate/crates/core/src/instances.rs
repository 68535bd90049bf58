//! Random small lattice instances for oracle cross-checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::UGrid;
use crate::error::Result;
use crate::lattice::{FiltrationLattice, Node, NodeProcess, PayoffSpec, Transition};

/// Shape limits for generated instances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceLimits {
    pub max_steps: usize,
    pub max_atoms: usize,
    pub max_branching: usize,
    /// Cap on non-terminal nodes, which bounds brute-force enumeration at `2^cap`.
    pub max_free_nodes: usize,
    /// Chance that a child edge reuses a node already created at the next level.
    pub recombine_prob: f64,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        InstanceLimits {
            max_steps: 4,
            max_atoms: 8,
            max_branching: 3,
            max_free_nodes: 16,
            recombine_prob: 0.2,
        }
    }
}

/// A lattice, a payoff on it, and the terminal conditional laws of a finite
/// information variable together with the prior they imply.
#[derive(Clone, Debug)]
pub struct Instance {
    pub lattice: FiltrationLattice,
    pub payoff: PayoffSpec,
    pub g_map: Vec<Vec<f64>>,
    pub grid: UGrid,
}

/// Deterministic stream of random instances.
pub struct InstanceGenerator {
    rng: ChaCha8Rng,
    limits: InstanceLimits,
}

impl InstanceGenerator {
    pub fn new(seed: u64, limits: InstanceLimits) -> Self {
        InstanceGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            limits,
        }
    }

    pub fn with_steps(seed: u64, steps: usize) -> Self {
        Self::new(
            seed,
            InstanceLimits {
                max_steps: steps,
                ..InstanceLimits::default()
            },
        )
    }

    pub fn instance(&mut self) -> Result<Instance> {
        let lattice = loop {
            let steps = self.rng.random_range(1..=self.limits.max_steps);
            if let Some(levels) = self.levels(steps) {
                break FiltrationLattice::from_levels(levels)?;
            }
        };
        let payoff = self.payoff(&lattice)?;
        let n_atoms = self.rng.random_range(1..=self.limits.max_atoms);
        let n = lattice.n_steps();
        let g_map: Vec<Vec<f64>> = (0..lattice.width(n)).map(|_| self.law(n_atoms)).collect();
        let reach = lattice.reach_probabilities();
        let mut prior = vec![0.0; n_atoms];
        for (law, r) in g_map.iter().zip(&reach[n]) {
            for (p, q) in prior.iter_mut().zip(law) {
                *p += r * q;
            }
        }
        let atoms = (0..n_atoms).map(|a| a as f64 - (n_atoms / 2) as f64).collect();
        let grid = UGrid::new(atoms, prior)?;
        Ok(Instance {
            lattice,
            payoff,
            g_map,
            grid,
        })
    }

    /// Builds tree levels, or `None` when the free-node cap is exceeded.
    fn levels(&mut self, steps: usize) -> Option<Vec<Vec<Node>>> {
        let mut levels = vec![vec![Node {
            state: 1.0,
            children: Vec::new(),
        }]];
        let mut free = 0;
        for k in 0..steps {
            free += levels[k].len();
            if free > self.limits.max_free_nodes {
                return None;
            }
            let mut next: Vec<Node> = Vec::new();
            for i in 0..levels[k].len() {
                let parent = levels[k][i].state;
                let branching = self.rng.random_range(1..=self.limits.max_branching);
                let mut children: Vec<usize> = Vec::with_capacity(branching);
                for _ in 0..branching {
                    let reuse = !next.is_empty() && self.rng.random_bool(self.limits.recombine_prob);
                    let child = if reuse {
                        self.rng.random_range(0..next.len())
                    } else {
                        let shock: f64 = self.rng.random_range(-0.4..0.4);
                        next.push(Node {
                            state: parent * shock.exp(),
                            children: Vec::new(),
                        });
                        next.len() - 1
                    };
                    if !children.contains(&child) {
                        children.push(child);
                    }
                }
                let raw: Vec<f64> = children.iter().map(|_| self.rng.random_range(0.1..1.0)).collect();
                let total: f64 = raw.iter().sum();
                levels[k][i].children = children
                    .into_iter()
                    .zip(raw)
                    .map(|(child, r)| Transition { child, prob: r / total })
                    .collect();
            }
            levels.push(next);
        }
        Some(levels)
    }

    /// Either a put on the state or an arbitrary nonnegative payoff.
    fn payoff(&mut self, lattice: &FiltrationLattice) -> Result<PayoffSpec> {
        if self.rng.random_bool(0.5) {
            let strike = self.rng.random_range(0.7..1.3);
            return PayoffSpec::put(lattice, strike);
        }
        let rng = &mut self.rng;
        let barrier = NodeProcess::from_fn(lattice, |_, _, _| rng.random_range(0.0..2.0));
        let n = lattice.n_steps();
        let terminal = barrier
            .level(n)
            .to_vec()
            .into_iter()
            .map(|l| l + self.rng.random_range(0.0..1.0))
            .collect();
        PayoffSpec::new(lattice, barrier, terminal)
    }

    fn law(&mut self, n_atoms: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n_atoms).map(|_| self.rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_respect_limits_and_are_reproducible() {
        let mut a = InstanceGenerator::new(3, InstanceLimits::default());
        let mut b = InstanceGenerator::new(3, InstanceLimits::default());
        let mut recombined = false;
        for _ in 0..50 {
            let x = a.instance().unwrap();
            let y = b.instance().unwrap();
            assert_eq!(x.lattice, y.lattice);
            assert_eq!(x.g_map, y.g_map);
            let lat = &x.lattice;
            assert!(lat.n_steps() <= 4);
            assert!(x.grid.len() <= 8);
            let free: usize = (0..lat.n_steps()).map(|k| lat.width(k)).sum();
            assert!(free <= 16);
            for k in 1..=lat.n_steps() {
                let edges: usize = lat.level(k - 1).iter().map(|n| n.children.len()).sum();
                recombined |= edges > lat.width(k);
            }
        }
        assert!(recombined);
    }
}
