//! Two-sample tests and log-log regression.

use serde::Serialize;

use crate::error::{Error, Result};

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample statistic, with Stephens' small-sample
/// adjustment of the argument.
pub fn ks_p_value(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    kolmogorov_survival(lambda)
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    pub statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    pub rejected: Vec<bool>,
    /// Per-coordinate level after the Bonferroni adjustment.
    pub adjusted_level: f64,
    pub level: f64,
    pub rejection_rate: f64,
    pub any_rejected: bool,
}

/// Per-coordinate two-sample KS tests between draws `a` and `b`
/// (each row one draw), Bonferroni-adjusted over the coordinates.
pub fn two_sample_equivalence_test(a: &[Vec<f64>], b: &[Vec<f64>], level: f64) -> Result<KsReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("both samples need at least one draw"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must lie in (0, 1), got {level}")));
    }
    let coords = a[0].len();
    if coords == 0 {
        return Err(Error::invalid("draws have no coordinates"));
    }
    for row in a.iter().chain(b) {
        if row.len() != coords {
            return Err(Error::dim("coordinate count", coords, row.len()));
        }
    }
    let adjusted_level = level / coords as f64;
    let mut statistics = Vec::with_capacity(coords);
    let mut p_values = Vec::with_capacity(coords);
    let mut rejected = Vec::with_capacity(coords);
    for c in 0..coords {
        let xa: Vec<f64> = a.iter().map(|r| r[c]).collect();
        let xb: Vec<f64> = b.iter().map(|r| r[c]).collect();
        let d = ks_statistic(&xa, &xb);
        let p = ks_p_value(d, xa.len(), xb.len());
        statistics.push(d);
        p_values.push(p);
        rejected.push(p < adjusted_level);
    }
    let hits = rejected.iter().filter(|r| **r).count();
    Ok(KsReport {
        statistics,
        p_values,
        any_rejected: hits > 0,
        rejected,
        adjusted_level,
        level,
        rejection_rate: hits as f64 / coords as f64,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

/// Least-squares slope of `log value` on `log n`.
pub fn rate_regression(n: &[f64], values: &[f64]) -> Result<SlopeFit> {
    if n.len() != values.len() {
        return Err(Error::dim("value count", n.len(), values.len()));
    }
    if n.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 points, got {}", n.len())));
    }
    if n.iter().chain(values).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("log-log regression needs positive inputs"));
    }
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("sample sizes must not all be equal"));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let stderr = (rss / (k - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
    })
}

/// Mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_have_zero_statistic() {
        let a = vec![0.3, -1.0, 2.0, 0.1];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let rows: Vec<Vec<f64>> = a.iter().map(|x| vec![*x, -x]).collect();
        let r = two_sample_equivalence_test(&rows, &rows, 0.05).unwrap();
        assert!(r.statistics.iter().all(|d| *d == 0.0));
        assert!(!r.any_rejected);
    }

    #[test]
    fn disjoint_samples_have_unit_statistic() {
        assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0, 5.0]), 1.0);
        assert!(ks_p_value(1.0, 100, 100) < 1e-10);
    }

    #[test]
    fn survival_function_values() {
        // Q(1.36) ≈ 0.049, the classical 5% critical point.
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn regression_examples() {
        let n = [10.0, 100.0, 1000.0, 10000.0];
        let inv: Vec<f64> = n.iter().map(|v| 3.0 / v).collect();
        let fit = rate_regression(&n, &inv).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        let flat = rate_regression(&n, &[2.0; 4]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        assert!(rate_regression(&n[..2], &inv[..2]).is_err());
    }

    #[test]
    fn empty_samples_error() {
        assert!(two_sample_equivalence_test(&[], &[vec![1.0]], 0.05).is_err());
    }
}
