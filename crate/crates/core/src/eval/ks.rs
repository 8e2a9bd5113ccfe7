use crate::error::{invalid, Result};

/// Two-sample Kolmogorov-Smirnov decision at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSResult {
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    pub reject: bool,
}

fn sorted(sample: &[f64], which: &str) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return invalid(format!("{which} sample is empty"));
    }
    if sample.iter().any(|v| v.is_nan()) {
        return invalid(format!("{which} sample contains NaN"));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup |F1(x) - F2(x)|` over the empirical CDFs, by a merged sweep.
pub fn ks_statistic(sample1: &[f64], sample2: &[f64]) -> Result<f64> {
    let a = sorted(sample1, "first")?;
    let b = sorted(sample2, "second")?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// `sqrt(-ln(alpha / 2) / 2) * sqrt((n + m) / (n m))`.
pub fn ks_threshold(alpha: f64, n: usize, m: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if n == 0 || m == 0 {
        return invalid("sample sizes must be at least 1");
    }
    let (n, m) = (n as f64, m as f64);
    Ok((-0.5 * (alpha / 2.0).ln()).sqrt() * ((n + m) / (n * m)).sqrt())
}

pub fn ks_test(sample1: &[f64], sample2: &[f64], alpha: f64) -> Result<KSResult> {
    let statistic = ks_statistic(sample1, sample2)?;
    let threshold = ks_threshold(alpha, sample1.len(), sample2.len())?;
    Ok(KSResult {
        statistic,
        threshold,
        alpha,
        n: sample1.len(),
        m: sample2.len(),
        reject: statistic > threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assert_close;

    #[test]
    fn statistic_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[0.5, 1.0]).unwrap(), 0.5);
        assert!(ks_statistic(&[], &[1.0]).is_err());
        assert!(ks_statistic(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn statistic_with_ties_and_unequal_sizes() {
        // F1 jumps to 1 at 1, F2 is 1/3 there
        assert_close!(ks_statistic(&[1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 2.0 / 3.0, 1e-15);
    }

    #[test]
    fn threshold_examples() {
        assert_close!(ks_threshold(0.01, 100, 100).unwrap(), 0.2302, 1e-4);
        assert!(ks_threshold(0.01, 200, 200).unwrap() < ks_threshold(0.01, 100, 100).unwrap());
        let c = (-0.5 * (0.05f64 / 2.0).ln()).sqrt();
        assert_close!(ks_threshold(0.05, 40, 40).unwrap(), c * (2.0f64 / 40.0).sqrt(), 1e-15);
        assert!(ks_threshold(0.0, 1, 1).is_err());
        assert!(ks_threshold(1.0, 1, 1).is_err());
        assert!(ks_threshold(0.5, 0, 1).is_err());
    }

    #[test]
    fn test_decision() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 50.0).collect();
        let r = ks_test(&a, &b, 0.01).unwrap();
        assert!(r.reject && r.statistic == 0.5);
        assert!(!ks_test(&a, &a, 0.01).unwrap().reject);
    }
}
