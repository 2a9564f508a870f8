//! Seed-split Monte-Carlo machinery.
//!
//! Sample `i` always lives in block `i / BLOCK_SIZE`, and each block draws
//! from its own ChaCha stream `(seed, block)`. Blocks run on the rayon pool
//! and their partial sums are merged in block order, so results do not
//! depend on the number of worker threads.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::matrixkit::{Matrix, SymMatrix};
use crate::report::sym_rows;

pub const BLOCK_SIZE: usize = 4096;

pub fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

pub fn block_ranges(total: usize) -> Vec<Range<usize>> {
    (0..total.div_ceil(BLOCK_SIZE))
        .map(|b| b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(total))
        .collect()
}

/// Monte-Carlo estimate of a symmetric matrix expectation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McInfoEstimate {
    #[serde(rename = "J", serialize_with = "sym_rows")]
    pub j: SymMatrix,
    /// Per-entry standard error of the mean.
    #[serde(serialize_with = "sym_rows")]
    pub std_err: SymMatrix,
    #[serde(rename = "N")]
    pub samples: usize,
    pub seed: u64,
}

impl McInfoEstimate {
    pub fn max_std_err(&self) -> f64 {
        self.std_err.iter().fold(0.0_f64, |a, v| a.max(*v))
    }

    /// Entrywise `|J − reference| ≤ k·std_err`.
    pub fn within_std_errs(&self, reference: &Matrix, k: f64) -> bool {
        self.j
            .iter()
            .zip(reference.iter())
            .zip(self.std_err.iter())
            .all(|((a, b), s)| (a - b).abs() <= k * s)
    }

    /// PSD up to Monte-Carlo noise: min eigenvalue ≥ −3·max std error.
    pub fn psd_within_noise(&self) -> bool {
        self.j.min_eigenvalue() >= -3.0 * self.max_std_err() - crate::matrixkit::PSD_TOL
    }

    /// Adds a deterministic matrix (e.g. prior information) to the estimate.
    pub fn offset(mut self, add: &SymMatrix) -> Self {
        self.j = self.j.add(add);
        self
    }
}

struct Partial {
    sum: Matrix,
    sum_sq: Matrix,
}

/// Sample mean of `integrand` over `samples` draws with per-entry standard
/// errors.
///
/// Sums are taken of deviations from the first sample, so a constant
/// integrand reproduces its value exactly.
pub fn mc_mean<F>(samples: usize, seed: u64, integrand: F) -> Result<McInfoEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Matrix> + Sync,
{
    assert!(samples > 0, "Monte-Carlo estimate needs at least one sample");
    let shift = integrand(&mut block_rng(seed, 0))?;
    let (r, c) = shift.shape();
    let partials: Vec<Result<Partial>> = block_ranges(samples)
        .into_par_iter()
        .enumerate()
        .map(|(block, range)| {
            let mut rng = block_rng(seed, block);
            let mut acc = Partial {
                sum: Matrix::zeros(r, c),
                sum_sq: Matrix::zeros(r, c),
            };
            for _ in range {
                let d = integrand(&mut rng)? - &shift;
                acc.sum_sq += d.component_mul(&d);
                acc.sum += d;
            }
            Ok(acc)
        })
        .collect();

    let mut sum = Matrix::zeros(r, c);
    let mut sum_sq = Matrix::zeros(r, c);
    for p in partials {
        let p = p?;
        sum += p.sum;
        sum_sq += p.sum_sq;
    }
    let n = samples as f64;
    let mean = &shift + &sum / n;
    let std_err = if samples > 1 {
        Matrix::from_fn(r, c, |i, j| {
            let var = ((sum_sq[(i, j)] - sum[(i, j)] * sum[(i, j)] / n) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
    } else {
        Matrix::zeros(r, c)
    };
    Ok(McInfoEstimate {
        j: SymMatrix::symmetrize(&mean),
        std_err: SymMatrix::symmetrize(&std_err),
        samples,
        seed,
    })
}
