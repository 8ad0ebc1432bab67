//! DeLong comparison of correlated AUROCs via midrank structural components.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::ScoredSet;
use crate::error::{Error, Result};

/// 1-based midranks (ties share the average rank).
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Structural components `(V10, V01)`.
///
/// `V10[i]` is the share of negatives positive `i` outscores and `V01[j]` the
/// share of positives outscoring negative `j`, ties counted ½. Both are
/// computed from midranks in O(n log n).
pub fn structural_components(set: &ScoredSet) -> Result<(Vec<f64>, Vec<f64>)> {
    set.require_both_classes()?;
    let pos: Vec<f64> = set.scores.iter().zip(set.labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = set.scores.iter().zip(set.labels).filter(|(_, &l)| l == 0).map(|(s, _)| *s).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let r_all = midranks(&all);
    let r_pos = midranks(&pos);
    let r_neg = midranks(&neg);
    let v10 = (0..pos.len()).map(|i| (r_all[i] - r_pos[i]) / n).collect();
    let v01 = (0..neg.len()).map(|j| 1.0 - (r_all[pos.len() + j] - r_neg[j]) / m).collect();
    Ok((v10, v01))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample covariance (n − 1 denominator); 0 for fewer than two entries.
fn cov(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelongResult {
    pub auroc_a: f64,
    pub auroc_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov_ab: f64,
    pub z: f64,
    pub p: f64,
}

/// Variance of a single AUROC estimate from its structural components.
pub(crate) fn auroc_variance(v10: &[f64], v01: &[f64]) -> f64 {
    cov(v10, v10) / v10.len() as f64 + cov(v01, v01) / v01.len() as f64
}

pub(crate) fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Paired DeLong test of two score vectors against the same labels.
pub fn delong_test(scores_a: &[f64], scores_b: &[f64], labels: &[u8]) -> Result<DelongResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::Metric("score vectors differ in length".into()));
    }
    let (a10, a01) = structural_components(&ScoredSet::new(scores_a, labels)?)?;
    let (b10, b01) = structural_components(&ScoredSet::new(scores_b, labels)?)?;
    let (m, n) = (a10.len() as f64, a01.len() as f64);
    let auroc_a = mean(&a10);
    let auroc_b = mean(&b10);
    let var_a = cov(&a10, &a10) / m + cov(&a01, &a01) / n;
    let var_b = cov(&b10, &b10) / m + cov(&b01, &b01) / n;
    let cov_ab = cov(&a10, &b10) / m + cov(&a01, &b01) / n;
    let diff = auroc_a - auroc_b;
    let var = var_a + var_b - 2.0 * cov_ab;
    let (z, p) = if scores_a == scores_b || (diff == 0.0 && var <= 0.0) {
        (0.0, 1.0)
    } else if var <= 0.0 {
        (diff.signum() * f64::INFINITY, 0.0)
    } else {
        let z = diff / var.sqrt();
        (z, two_sided_normal_p(z))
    };
    Ok(DelongResult { auroc_a, auroc_b, var_a, var_b, cov_ab, z, p })
}
