use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// CDF of Student's t with `df` degrees of freedom (regularized incomplete beta).
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("positive df").cdf(t)
}

/// Two-sided paired-samples t-test on `a − b`.
///
/// Zero-variance differences give `p = 1` when the mean difference is zero
/// and `p = 0` otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Metric("paired t-test needs two equally long samples of length >= 2".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let df = d.len() - 1;
    let (t, p) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (sd / n.sqrt());
        let p = 2.0 * (1.0 - student_t_cdf(t.abs(), df as f64));
        (t, p.clamp(0.0, 1.0))
    };
    Ok(TTestResult { mean_diff: mean, sd_diff: sd, t, df, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson integration of the t density from 0 to |t|.
    fn t_cdf_quadrature(t: f64, df: f64) -> f64 {
        let ln_c = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let steps = 20_000;
        let h = t.abs() / steps as f64;
        let mut s = pdf(0.0) + pdf(t.abs());
        for i in 1..steps {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + t.signum() * s * h / 3.0
    }

    #[test]
    fn known_differences() {
        let r = paired_t_test(&[1.0, -1.0, 0.0, 2.0], &[0.0; 4]).unwrap();
        assert!((r.mean_diff - 0.5).abs() < 1e-12);
        assert!((r.sd_diff - 1.290_994).abs() < 1e-6);
        assert!((r.t - 0.774_597).abs() < 1e-6);
        assert_eq!(r.df, 3);
        let oracle = 2.0 * (1.0 - t_cdf_quadrature(r.t, 3.0));
        assert!((r.p - oracle).abs() < 1e-3);
        assert!((r.p - 0.4950).abs() < 1e-3);
    }

    #[test]
    fn conventions() {
        let a = [0.3, 0.5, 0.9];
        assert_eq!(paired_t_test(&a, &a).unwrap().p, 1.0);
        let r = paired_t_test(&[1.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn cdf_symmetry_and_quadrature() {
        for df in [1.0, 2.0, 5.0, 30.0] {
            assert!((student_t_cdf(0.0, df) - 0.5).abs() < 1e-12);
            for t in [-2.5, -0.3, 0.7, 1.9] {
                assert!((student_t_cdf(t, df) - t_cdf_quadrature(t, df)).abs() < 1e-6);
            }
        }
    }
}
