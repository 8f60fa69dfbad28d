//! Paired t-test with an embedded two-sided critical-value table, and the
//! Pearson correlation used by training diagnostics.

use crate::error::{Error, Result};

/// Two-sided critical values at alpha = 0.05 for df = 1..=30.
const T_CRITICAL_05: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub significant: bool,
    pub df: usize,
}

/// Paired t-test on `a - b` at two-sided alpha = 0.05.
///
/// Zero-variance differences degenerate: zero mean is (t = 0, not
/// significant); a nonzero constant shift is significant with `t` reported as
/// the +infinity sentinel.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Eval("paired t-test needs equal-length series".into()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Eval("paired t-test needs at least two pairs".into()));
    }
    let df = n - 1;
    if df > T_CRITICAL_05.len() {
        return Err(Error::Eval(format!(
            "critical-value table covers df 1..=30, got df {df}"
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / df as f64;
    let crit = T_CRITICAL_05[df - 1];
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, significant: false, df }
        } else {
            TTest { t: f64::INFINITY * mean.signum(), significant: true, df }
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    Ok(TTest { t, significant: t.abs() > crit, df })
}

/// Pearson correlation; a constant series yields (0.0, degenerate = true).
pub fn pearson(x: &[f64], y: &[f64]) -> (f64, bool) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx < 1e-24 || syy < 1e-24 {
        (0.0, true)
    } else {
        (sxy / (sxx * syy).sqrt(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_not_significant() {
        let a = [0.3, 0.5, 0.2, 0.9];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert!(!r.significant);
    }

    #[test]
    fn hand_computed_t_statistic() {
        // d = [1..5]: mean 3, sd = sqrt(2.5), t = 3 / (sd / sqrt(5)) ~ 4.2426
        let a = [2.0, 4.0, 6.0, 8.0, 10.0];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.t - 4.242640687119285).abs() < 1e-9);
        assert_eq!(r.df, 4);
        assert!(r.significant); // crit at df 4 is 2.776
    }

    #[test]
    fn df9_uses_2_262() {
        // borderline case just under and over the df = 9 critical value
        let base: Vec<f64> = (0..10).map(|i| i as f64).collect();
        // constant shift: zero variance, significant (+inf sentinel)
        let shifted: Vec<f64> = base.iter().map(|x| x + 1.0).collect();
        let r = paired_t_test(&shifted, &base).unwrap();
        assert!(r.t.is_infinite() && r.t > 0.0);
        assert!(r.significant);
        assert_eq!(r.df, 9);
    }

    #[test]
    fn degenerate_zero_mean_is_not_significant() {
        let a = [1.0, 2.0, 3.0];
        let r = paired_t_test(&a, &a.clone()).unwrap();
        assert_eq!(r, TTest { t: 0.0, significant: false, df: 2 });
    }

    #[test]
    fn input_validation() {
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
        let long: Vec<f64> = (0..40).map(|i| i as f64).collect();
        assert!(paired_t_test(&long, &long).is_err());
    }

    #[test]
    fn pearson_hand_cases() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(pearson(&x, &x), (1.0, false));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let (r, _) = pearson(&x, &neg);
        assert!((r + 1.0).abs() < 1e-12);
        let y = [1.0, 2.0, 4.0];
        let (r, _) = pearson(&x, &y);
        assert!((r - 0.9819805060619659).abs() < 1e-9);
        let (r, degenerate) = pearson(&x, &[2.0, 2.0, 2.0]);
        assert_eq!(r, 0.0);
        assert!(degenerate);
    }
}
