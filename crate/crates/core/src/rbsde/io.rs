use std::io::Write;

use serde::{Deserialize, Serialize};

use super::insider::EnlargedOptions;
use super::paths::{MarketModel, PathEnsemble};
use super::regression::{BasisSpec, RIDGE_LAMBDA};
use super::solver::RBSDESolution;
use crate::error::Result;

/// Reproducibility record of a Monte Carlo solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverManifest {
    pub model: MarketModel,
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub basis: BasisSpec,
    pub ridge_lambda: f64,
    pub enlarged: EnlargedOptions,
}

impl SolverManifest {
    pub fn new(paths: &PathEnsemble, basis: BasisSpec, enlarged: EnlargedOptions) -> Self {
        SolverManifest {
            model: *paths.model(),
            seed: paths.seed(),
            n_paths: paths.n_paths(),
            n_steps: paths.n_steps(),
            basis,
            ridge_lambda: RIDGE_LAMBDA,
            enlarged,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Serialize)]
struct PathRow {
    time: f64,
    path: usize,
    brownian: f64,
    state: f64,
}

#[derive(Serialize)]
struct SolutionRow {
    time: f64,
    path: usize,
    y: f64,
    z: f64,
    k: f64,
}

/// Writes `time,path,brownian,state` for the first `max_paths` paths.
pub fn write_paths_csv<W: Write>(paths: &PathEnsemble, max_paths: usize, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let shown = max_paths.min(paths.n_paths());
    for p in 0..shown {
        for k in 0..=paths.n_steps() {
            out.serialize(PathRow {
                time: paths.time(k),
                path: p,
                brownian: paths.brownian()[k][p],
                state: paths.state()[k][p],
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `time,path,y,z,k` for the first `max_paths` paths.
pub fn write_solution_csv<W: Write>(
    solution: &RBSDESolution,
    paths: &PathEnsemble,
    max_paths: usize,
    writer: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let k = solution.k();
    for p in 0..max_paths.min(solution.n_paths()) {
        for t in 0..=solution.n_steps() {
            out.serialize(SolutionRow {
                time: paths.time(t),
                path: p,
                y: solution.y[t][p],
                z: solution.z[t][p],
                k: k[t][p],
            })?;
        }
    }
    out.flush()?;
    Ok(())
}
