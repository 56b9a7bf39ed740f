//! Paired bootstrap significance test.
//!
//! Resample `i` draws from its own ChaCha stream (`set_stream(i)` under the
//! run seed), so each resample is fixed by `(seed, i)` alone and resamples can
//! be sharded over threads without changing the result. Paired differences
//! are sorted before resampling, which makes `p` independent of task order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// mean(a) - mean(b)
    pub delta: f64,
    /// Fraction of resamples whose delta exceeds twice the observed delta.
    pub p: f64,
    pub b_samples: u64,
}

pub fn paired_bootstrap(scores_a: &[f64], scores_b: &[f64], b_samples: u64, seed: u64) -> Result<BootstrapResult, EvalError> {
    if scores_a.len() != scores_b.len() {
        return Err(EvalError::LengthMismatch { a: scores_a.len(), b: scores_b.len() });
    }
    if scores_a.is_empty() || b_samples == 0 {
        return Err(EvalError::EmptyBootstrap);
    }
    let mut diffs: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    diffs.sort_by(f64::total_cmp);
    let n = diffs.len();
    let observed: f64 = diffs.iter().sum();
    let threshold = 2.0 * observed;
    let base = ChaCha8Rng::seed_from_u64(seed);

    let exceed = (0..b_samples)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = base.clone();
            rng.set_stream(i);
            let mut sum = 0.0;
            for _ in 0..n {
                sum += diffs[rng.gen_range(0..n)];
            }
            // Comparing sums is comparing means: both sides share the factor 1/n.
            sum > threshold
        })
        .count();

    Ok(BootstrapResult { delta: observed / n as f64, p: exceed as f64 / b_samples as f64, b_samples })
}
