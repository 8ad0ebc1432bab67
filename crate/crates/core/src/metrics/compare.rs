use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::delong::{auroc_variance, delong_test, structural_components, two_sided_normal_p, DelongResult};
use super::ttest::{paired_t_test, TTestResult};
use super::{auroc, ScoredSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub n_boot: usize,
    pub seed: u64,
    pub mean_auroc_a: f64,
    pub mean_auroc_b: f64,
    pub t_test: TTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRecord {
    pub delong: DelongResult,
    pub bootstrap: BootstrapSummary,
}

/// Draws one bootstrap index sample containing both classes.
fn resample(labels: &[u8], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = labels.len();
    loop {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
        if pos > 0 && pos < n {
            return idx;
        }
    }
}

/// Paired comparison of two predictors on the same labels.
///
/// Runs DeLong on the full set, and a paired t-test over `n_boot` bootstrap
/// replicates of both AUROCs. Replicate `r` draws from ChaCha stream `r` of
/// `seed`, so the result is independent of thread count.
pub fn compare_methods(preds_a: &[f64], preds_b: &[f64], labels: &[u8], n_boot: usize, seed: u64) -> Result<SignificanceRecord> {
    if n_boot < 2 {
        return Err(Error::Metric("n_boot must be at least 2".into()));
    }
    let delong = delong_test(preds_a, preds_b, labels)?;
    let pairs: Vec<(f64, f64)> = (0..n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let idx = resample(labels, &mut rng);
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let a: Vec<f64> = idx.iter().map(|&i| preds_a[i]).collect();
            let b: Vec<f64> = idx.iter().map(|&i| preds_b[i]).collect();
            let aa = auroc(&ScoredSet::new(&a, &l)?)?;
            let ab = auroc(&ScoredSet::new(&b, &l)?)?;
            Ok((aa, ab))
        })
        .collect::<Result<_>>()?;
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let t_test = paired_t_test(&a, &b)?;
    Ok(SignificanceRecord {
        delong,
        bootstrap: BootstrapSummary {
            n_boot,
            seed,
            mean_auroc_a: a.iter().sum::<f64>() / n_boot as f64,
            mean_auroc_b: b.iter().sum::<f64>() / n_boot as f64,
            t_test,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupResult {
    pub auroc_in: f64,
    pub auroc_out: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub z: f64,
    pub p: f64,
}

/// AUROC inside vs outside `group_mask`, compared as independent samples
/// with DeLong variances.
pub fn subgroup_compare(preds: &[f64], labels: &[u8], group_mask: &[bool]) -> Result<SubgroupResult> {
    if preds.len() != labels.len() || preds.len() != group_mask.len() {
        return Err(Error::Metric("preds, labels and mask must be equally long".into()));
    }
    let split = |inside: bool| -> (Vec<f64>, Vec<u8>) {
        preds
            .iter()
            .zip(labels)
            .zip(group_mask)
            .filter(|(_, &g)| g == inside)
            .map(|((&p, &l), _)| (p, l))
            .unzip()
    };
    let (p_in, l_in) = split(true);
    let (p_out, l_out) = split(false);
    if p_in.is_empty() || p_out.is_empty() {
        return Err(Error::Metric("both subgroups must be non-empty".into()));
    }
    let set_in = ScoredSet::new(&p_in, &l_in)?;
    let set_out = ScoredSet::new(&p_out, &l_out)?;
    let (in10, in01) = structural_components(&set_in)?;
    let (out10, out01) = structural_components(&set_out)?;
    let auroc_in = auroc(&set_in)?;
    let auroc_out = auroc(&set_out)?;
    let var = auroc_variance(&in10, &in01) + auroc_variance(&out10, &out01);
    let diff = auroc_in - auroc_out;
    let (z, p) = if var > 0.0 {
        let z = diff / var.sqrt();
        (z, two_sided_normal_p(z))
    } else if diff == 0.0 {
        (0.0, 1.0)
    } else {
        (diff.signum() * f64::INFINITY, 0.0)
    };
    Ok(SubgroupResult { auroc_in, auroc_out, n_in: p_in.len(), n_out: p_out.len(), z, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn fixture(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let labels: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let informative = labels.iter().map(|&l| l as f64 + noise.sample(&mut rng)).collect();
        let random = (0..n).map(|_| noise.sample(&mut rng)).collect();
        (informative, random, labels)
    }

    #[test]
    fn identical_predictors_give_p_one() {
        let (a, _, l) = fixture(120, 1);
        let r = compare_methods(&a, &a, &l, 200, 5).unwrap();
        assert_eq!(r.delong.p, 1.0);
        assert_eq!(r.bootstrap.t_test.p, 1.0);
    }

    #[test]
    fn planted_separation_is_significant() {
        let (a, b, l) = fixture(300, 2);
        let r = compare_methods(&a, &b, &l, 300, 9).unwrap();
        assert!(r.delong.p < 1e-3, "{:?}", r.delong);
        assert!(r.bootstrap.t_test.p < 1e-3);
        assert!(r.bootstrap.mean_auroc_a > r.bootstrap.mean_auroc_b);
    }

    #[test]
    fn reproducible_given_seed() {
        let (a, b, l) = fixture(80, 3);
        assert_eq!(compare_methods(&a, &b, &l, 50, 4).unwrap(), compare_methods(&a, &b, &l, 50, 4).unwrap());
    }

    #[test]
    fn subgroup_guard() {
        let (a, _, l) = fixture(30, 4);
        assert!(subgroup_compare(&a, &l, &vec![true; 30]).is_err());
    }

    #[test]
    fn subgroup_null_is_calibrated() {
        // permutation oracle: random masks split one distribution in two, so
        // p-values should be roughly uniform
        let (a, _, l) = fixture(400, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let ps: Vec<f64> = (0..200)
            .map(|_| {
                let mask: Vec<bool> = (0..400).map(|_| rng.random_bool(0.5)).collect();
                subgroup_compare(&a, &l, &mask).unwrap().p
            })
            .collect();
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        let rejections = ps.iter().filter(|&&p| p < 0.05).count() as f64 / ps.len() as f64;
        assert!((mean - 0.5).abs() < 0.08, "mean p {mean}");
        assert!(rejections < 0.1, "rejection rate {rejections}");
    }
}
