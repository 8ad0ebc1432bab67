use super::delong::midranks;
use super::ScoredSet;
use crate::error::Result;

/// Mann–Whitney AUROC: P(score_pos > score_neg) with ties counted ½.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    set.require_both_classes()?;
    let ranks = midranks(set.scores);
    let (m, n) = (set.n_pos() as f64, set.n_neg() as f64);
    let rank_sum: f64 = ranks.iter().zip(set.labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    Ok((rank_sum - m * (m + 1.0) / 2.0) / (m * n))
}

/// Average precision with step interpolation; tied scores form one threshold.
pub fn auprc(set: &ScoredSet) -> Result<f64> {
    set.require_both_classes()?;
    let mut order: Vec<usize> = (0..set.scores.len()).collect();
    order.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
    let total_pos = set.n_pos() as f64;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = set.scores[order[i]];
        while i < order.len() && set.scores[order[i]] == s {
            if set.labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let recall = tp / total_pos;
        if recall > prev_recall {
            ap += (recall - prev_recall) * tp / (tp + fp);
            prev_recall = recall;
        }
    }
    Ok(ap)
}

fn true_counts(set: &ScoredSet, threshold: f64) -> Result<(usize, usize)> {
    set.require_both_classes()?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&s, &l) in set.scores.iter().zip(set.labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    Ok((tp, tn))
}

/// Sensitivity and specificity when `score >= threshold` predicts positive.
pub fn sens_spec(set: &ScoredSet, threshold: f64) -> Result<(f64, f64)> {
    let (tp, tn) = true_counts(set, threshold)?;
    Ok((tp as f64 / set.n_pos() as f64, tn as f64 / set.n_neg() as f64))
}

/// `(sensitivity + specificity) / 2` at `threshold`.
///
/// Evaluated as one integer ratio, so it is the correctly rounded value
/// (0.8 and 0.6 give exactly 0.7).
pub fn balanced_accuracy(set: &ScoredSet, threshold: f64) -> Result<f64> {
    let (tp, tn) = true_counts(set, threshold)?;
    let (m, n) = (set.n_pos() as u128, set.n_neg() as u128);
    Ok((tp as u128 * n + tn as u128 * m) as f64 / (2 * m * n) as f64)
}

/// Threshold maximizing balanced accuracy; midpoints between distinct
/// sorted scores are the candidates. `None` when a class is missing.
pub fn best_threshold(set: &ScoredSet) -> Option<f64> {
    set.require_both_classes().ok()?;
    let mut distinct: Vec<f64> = set.scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    candidates.push(distinct[0]);
    for w in distinct.windows(2) {
        candidates.push(w[0] + (w[1] - w[0]) / 2.0);
    }
    candidates.push(f64::INFINITY);
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for t in candidates {
        let b = balanced_accuracy(set, t).ok()?;
        if b > best.0 {
            best = (b, t);
        }
    }
    Some(best.1)
}
