//! One-sample Kolmogorov-Smirnov test.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        // small-argument theta-function form of the CDF
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    q.clamp(0.0, 1.0)
}

/// `D = sup |F_n - F|` and the asymptotic p-value with the small-sample
/// correction `(sqrt(n) + 0.12 + 0.11/sqrt(n)) D`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.len() < 3 {
        return invalid("KS test needs at least 3 samples");
    }
    let mut s = samples.to_vec();
    if s.iter().any(|v| v.is_nan()) {
        return invalid("KS samples contain NaN");
    }
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let rn = n.sqrt();
    Ok(KsResult { statistic: d, p_value: kolmogorov_q((rn + 0.12 + 0.11 / rn) * d) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quantiles() {
        let n = 50;
        let samples: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let r = ks_test(&samples, |x| x).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-15);
        assert!(r.p_value > 0.999);
    }

    #[test]
    fn q_branches_agree() {
        for l in [1.17, 1.18, 1.19] {
            let a = {
                let c = std::f64::consts::PI.powi(2) / (8.0 * l * l);
                let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
                1.0 - (2.0 * std::f64::consts::PI).sqrt() / l * s
            };
            assert!((a - kolmogorov_q(l)).abs() < 1e-12);
        }
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
    }
}
