use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StayId;
use crate::error::{Error, Result};

/// Train/validation/test proportions of the reference cohort (4885/540/1373).
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.72, 0.08, 0.20];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSplit {
    pub train: Vec<StayId>,
    pub val: Vec<StayId>,
    pub test: Vec<StayId>,
    pub seed: u64,
}

impl CohortSplit {
    pub fn parts(&self) -> [&[StayId]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// Largest-remainder apportionment of `n` items over `fractions`.
/// Ties in the remainder go to the earlier split.
pub(crate) fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if fractions[k] > 0.0 {
            counts[k] += 1;
            rest -= 1;
        }
    }
    counts
}

/// Splits stays into train/val/test, stratified on the binary mortality label.
///
/// Positives and negatives are shuffled independently with a ChaCha stream
/// seeded by `seed`, then apportioned per class by largest remainder, so every
/// split holds within one of its proportional share of positives. Input order
/// does not matter: stays are sorted by id before shuffling.
pub fn split_stratified(cohort: &[(StayId, u8)], fractions: [f64; 3], seed: u64) -> Result<CohortSplit> {
    if cohort.len() < 3 {
        return Err(Error::Validation(format!(
            "cohort of {} stays is too small to split",
            cohort.len()
        )));
    }
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let mut sorted: Vec<&(StayId, u8)> = cohort.iter().collect();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<StayId>; 3] = Default::default();
    for label in [1u8, 0u8] {
        let mut class: Vec<StayId> = sorted.iter().filter(|(_, l)| (*l == 1) == (label == 1)).map(|(id, _)| id.clone()).collect();
        class.shuffle(&mut rng);
        let counts = apportion(class.len(), &fractions);
        let mut it = class.into_iter();
        for (part, &c) in parts.iter_mut().zip(&counts) {
            part.extend(it.by_ref().take(c));
        }
    }
    for part in &mut parts {
        part.sort();
    }
    let [train, val, test] = parts;
    Ok(CohortSplit { train, val, test, seed })
}
