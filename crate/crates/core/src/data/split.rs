//! Random partition of a dataset into train / val / calib / test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::types::{Dataset, Split};
use crate::error::{Result, TriageError};

/// Stream index reserved for split shuffling so the same seed can also
/// drive content generation without overlapping draws.
const SPLIT_STREAM: u64 = 2;

/// Turns split ratios into integer counts via largest-remainder rounding,
/// so every count is within one of the exact product and the counts sum to
/// `n` exactly. Remainder ties go to the earlier split.
pub fn split_counts(n: usize, ratios: [f64; 4]) -> Result<[usize; 4]> {
    for r in ratios {
        if !r.is_finite() || r < 0.0 {
            return Err(TriageError::Config(format!("split ratio {r} outside [0, 1]")));
        }
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TriageError::Config(format!(
            "split ratios sum to {sum}, expected 1"
        )));
    }
    // The 1e-9 nudge keeps products that are integers in exact arithmetic
    // (e.g. 0.6 * 5 = 3) from flooring one short.
    let mut counts = [0usize; 4];
    let mut remainders = [(0.0f64, 0usize); 4];
    let mut assigned = 0usize;
    for (i, r) in ratios.iter().enumerate() {
        let exact = r * n as f64;
        let floor = (exact + 1e-9).floor();
        counts[i] = floor as usize;
        remainders[i] = (exact - floor, i);
        assigned += counts[i];
    }
    let mut leftover = n - assigned;
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    Ok(counts)
}

/// Reassigns every sample to a split drawn by a seeded shuffle, with split
/// sizes from [`split_counts`]. Prediction bundles are untouched.
pub fn split_assign(mut ds: Dataset, ratios: [f64; 4], seed: u64) -> Result<Dataset> {
    let counts = split_counts(ds.samples.len(), ratios)?;
    let mut order: Vec<usize> = (0..ds.samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    order.shuffle(&mut rng);

    let mut cursor = 0usize;
    for (split, count) in Split::ALL.into_iter().zip(counts) {
        for &idx in &order[cursor..cursor + count] {
            ds.samples[idx].split = split;
        }
        cursor += count;
    }
    Ok(ds)
}
