//! Percentile bootstrap confidence intervals over battle-level resamples.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bt_fit, split_ties, BattleOutcome, BtOptions, EloParams, ModelId, RatingError};

/// Bootstrap output: per-model 95% interval plus resample accounting.
#[derive(Debug, Clone)]
pub struct BootstrapCi {
    pub intervals: BTreeMap<ModelId, (f64, f64)>,
    pub resamples_used: usize,
    /// Resamples whose comparison graph was disconnected or degenerate.
    pub discarded: usize,
}

/// Percentile 95% intervals from refitting on `n_resamples` battle-level
/// resamples drawn with replacement. Deterministic for a fixed seed:
/// resampling order and the reduction order are both fixed.
pub fn bootstrap_ci(
    outcomes: &[BattleOutcome],
    params: &EloParams,
    opts: &BtOptions,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapCi, RatingError> {
    if n_resamples < 100 {
        return Err(RatingError::TooFewResamples(n_resamples));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: BTreeMap<ModelId, Vec<f64>> = BTreeMap::new();
    let mut discarded = 0usize;
    let mut used = 0usize;

    for _ in 0..n_resamples {
        let resample: Vec<BattleOutcome> = (0..outcomes.len())
            .map(|_| outcomes[rng.gen_range(0..outcomes.len())].clone())
            .collect();
        match bt_fit(&split_ties(&resample), params, opts) {
            Ok(fit) => {
                used += 1;
                for (m, r) in fit.ratings {
                    samples.entry(m).or_default().push(r);
                }
            }
            Err(RatingError::NotConnected { .. }) | Err(RatingError::Degenerate(_)) | Err(RatingError::InsufficientModels(_)) => {
                discarded += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(RatingError::AllResamplesDiscarded(n_resamples));
    }

    let intervals = samples
        .into_iter()
        .map(|(m, mut values)| {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let low = percentile(&values, 0.025);
            let high = percentile(&values, 0.975);
            (m, (low, high))
        })
        .collect();

    Ok(BootstrapCi {
        intervals,
        resamples_used: used,
        discarded,
    })
}

/// Linear-interpolation percentile of an already sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}
