//! Deterministic parallel reductions and sample statistics.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fixed chunk length for parallel reductions. Chunk boundaries depend only
/// on the problem size, so per-chunk partial results combined in chunk order
/// are identical for every thread count.
pub const CHUNK: usize = 2048;

/// Evaluates `f` on consecutive fixed-size index ranges covering `0..n`,
/// in parallel, returning the partial results in range order.
pub fn chunked<A, F>(n: usize, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(Range<usize>) -> A + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Deterministic parallel sum of `f(i)` over `0..n`.
pub fn par_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    chunked(n, |r| r.map(&f).sum::<f64>()).into_iter().sum()
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Two-pass estimate over `f(0..n)`.
    pub fn from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(usize) -> f64 + Sync,
    {
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = par_sum(n, &f) / n as f64;
        if n == 1 {
            return Estimate {
                mean,
                std_error: 0.0,
            };
        }
        let ss = par_sum(n, |i| {
            let d = f(i) - mean;
            d * d
        });
        Estimate {
            mean,
            std_error: (ss / (n - 1) as f64 / n as f64).sqrt(),
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i| values[i])
    }

    /// `|mean − target| / std_error` (infinite when the error is zero and the mean is off).
    pub fn z_score(&self, target: f64) -> f64 {
        let gap = (self.mean - target).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.std_error
        }
    }
}
