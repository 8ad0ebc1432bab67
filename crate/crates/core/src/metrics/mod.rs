//! Task metrics and significance tests.

mod compare;
mod delong;
mod ranking;
mod ttest;

use serde::{Deserialize, Serialize};

pub use compare::{compare_methods, subgroup_compare, BootstrapSummary, SignificanceRecord, SubgroupResult};
pub use delong::{delong_test, midranks, structural_components, DelongResult};
pub use ranking::{auprc, auroc, balanced_accuracy, best_threshold, sens_spec};
pub use ttest::{paired_t_test, student_t_cdf, TTestResult};

use crate::error::{Error, Result};

/// Scores with binary labels of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet<'a> {
    pub scores: &'a [f64],
    pub labels: &'a [u8],
}

impl<'a> ScoredSet<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [u8]) -> Result<Self> {
        if scores.len() != labels.len() || scores.is_empty() {
            return Err(Error::Metric(format!(
                "scores ({}) and labels ({}) must be non-empty and equally long",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Metric("scores contain NaN".into()));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn n_neg(&self) -> usize {
        self.labels.len() - self.n_pos()
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        if self.n_pos() == 0 || self.n_neg() == 0 {
            return Err(Error::Metric("both classes are required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub auprc: f64,
    pub bal_acc: f64,
    /// One threshold per output (1 for mortality, 25 for phenotyping).
    pub thresholds: Vec<f64>,
    pub per_phenotype_auroc: Option<Vec<Option<f64>>>,
}

/// Metrics for `n_outputs` columns of row-major `scores`/`labels`.
///
/// Each column's balanced accuracy uses the matching entry of `thresholds`.
/// With several outputs the headline numbers are macro averages over the
/// columns where both classes occur.
pub fn evaluate(scores: &[f64], labels: &[u8], n_outputs: usize, thresholds: &[f64]) -> Result<MetricReport> {
    if n_outputs == 0 || scores.len() != labels.len() || scores.len() % n_outputs != 0 || thresholds.len() != n_outputs {
        return Err(Error::Metric("inconsistent score/label/threshold shapes".into()));
    }
    let mut aurocs = Vec::with_capacity(n_outputs);
    let mut sums = (0.0, 0.0, 0.0, 0usize);
    for k in 0..n_outputs {
        let s: Vec<f64> = scores.iter().skip(k).step_by(n_outputs).copied().collect();
        let l: Vec<u8> = labels.iter().skip(k).step_by(n_outputs).copied().collect();
        let set = ScoredSet::new(&s, &l)?;
        if set.require_both_classes().is_err() {
            aurocs.push(None);
            continue;
        }
        let a = auroc(&set)?;
        aurocs.push(Some(a));
        sums.0 += a;
        sums.1 += auprc(&set)?;
        sums.2 += balanced_accuracy(&set, thresholds[k])?;
        sums.3 += 1;
    }
    if sums.3 == 0 {
        return Err(Error::Metric("no output has both classes".into()));
    }
    let n = sums.3 as f64;
    Ok(MetricReport {
        auroc: sums.0 / n,
        auprc: sums.1 / n,
        bal_acc: sums.2 / n,
        thresholds: thresholds.to_vec(),
        per_phenotype_auroc: (n_outputs > 1).then_some(aurocs),
    })
}

/// Per-output thresholds maximizing balanced accuracy (fit on validation).
pub fn fit_thresholds(scores: &[f64], labels: &[u8], n_outputs: usize) -> Result<Vec<f64>> {
    (0..n_outputs)
        .map(|k| {
            let s: Vec<f64> = scores.iter().skip(k).step_by(n_outputs).copied().collect();
            let l: Vec<u8> = labels.iter().skip(k).step_by(n_outputs).copied().collect();
            let set = ScoredSet::new(&s, &l)?;
            Ok(best_threshold(&set).unwrap_or(0.5))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_single_output() {
        let r = evaluate(&[0.9, 0.1, 0.8, 0.3], &[1, 0, 1, 0], 1, &[0.5]).unwrap();
        assert_eq!((r.auroc, r.auprc, r.bal_acc), (1.0, 1.0, 1.0));
        assert!(r.per_phenotype_auroc.is_none());
    }

    #[test]
    fn evaluate_multi_output_skips_single_class_columns() {
        // column 1 is all-negative
        let scores = [0.9, 0.2, 0.1, 0.3, 0.8, 0.1];
        let labels = [1, 0, 0, 0, 1, 0];
        let r = evaluate(&scores, &labels, 2, &[0.5, 0.5]).unwrap();
        let per = r.per_phenotype_auroc.unwrap();
        assert_eq!(per[1], None);
        assert_eq!(per[0], Some(1.0));
        assert_eq!(r.auroc, 1.0);
    }

    #[test]
    fn scored_set_validation() {
        assert!(ScoredSet::new(&[0.1], &[1, 0]).is_err());
        assert!(ScoredSet::new(&[], &[]).is_err());
        assert!(ScoredSet::new(&[0.1], &[2]).is_err());
    }
}
