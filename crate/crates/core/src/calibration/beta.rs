//! Maximum-likelihood Beta laws on a known support.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

use crate::error::{invalid, Result};

/// Trigamma function.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub c1: f64,
    pub c2: f64,
    /// Mean log-likelihood of the rescaled samples.
    pub log_likelihood: f64,
    /// Samples moved inward from the support boundary.
    pub pulled_in: usize,
}

/// Sufficient statistics of rescaled samples.
#[derive(Debug, Clone, Copy)]
pub struct BetaStats {
    pub mean_ln_t: f64,
    pub mean_ln_1mt: f64,
    pub mean: f64,
    pub var: f64,
}

impl BetaStats {
    /// Mean log-likelihood of `Beta(c1, c2)`.
    pub fn log_likelihood(&self, c1: f64, c2: f64) -> f64 {
        (c1 - 1.0) * self.mean_ln_t + (c2 - 1.0) * self.mean_ln_1mt - ln_beta(c1, c2)
    }
}

/// Rescales samples to `[0, 1]`, pulling values on the boundary inward by `1e-6`.
pub fn beta_stats(samples: &[f64], lo: f64, hi: f64) -> Result<(BetaStats, usize)> {
    if samples.len() < 3 {
        return invalid("Beta fit needs at least 3 samples");
    }
    if !(lo < hi) {
        return invalid("Beta support must be nonempty");
    }
    let eps = 1e-6;
    let mut pulled = 0;
    let mut t = Vec::with_capacity(samples.len());
    for &z in samples {
        if !(z >= lo && z <= hi) {
            return invalid(format!("sample {z} outside the support [{lo}, {hi}]"));
        }
        let mut v = (z - lo) / (hi - lo);
        if v <= 0.0 || v >= 1.0 {
            v = v.clamp(eps, 1.0 - eps);
            pulled += 1;
        }
        t.push(v);
    }
    if pulled > 0 {
        log::warn!("{pulled} samples touched the support boundary and were pulled inward");
    }
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((
        BetaStats {
            mean_ln_t: t.iter().map(|v| v.ln()).sum::<f64>() / n,
            mean_ln_1mt: t.iter().map(|v| (1.0 - v).ln()).sum::<f64>() / n,
            mean,
            var,
        },
        pulled,
    ))
}

/// Method-of-moments shapes, `(1, 1)` when the variance is too large.
pub fn moment_shapes(s: &BetaStats) -> (f64, f64) {
    let common = s.mean * (1.0 - s.mean) / s.var - 1.0;
    if common > 0.0 && common.is_finite() {
        (s.mean * common, (1.0 - s.mean) * common)
    } else {
        (1.0, 1.0)
    }
}

/// Newton iteration on the concave log-likelihood, started from the moment shapes.
pub fn fit_beta_mle(samples: &[f64], lo: f64, hi: f64) -> Result<BetaFit> {
    let (s, pulled) = beta_stats(samples, lo, hi)?;
    let (mut c1, mut c2) = moment_shapes(&s);
    let mut ll = s.log_likelihood(c1, c2);
    for _ in 0..200 {
        let ps = digamma(c1 + c2);
        let g1 = s.mean_ln_t - digamma(c1) + ps;
        let g2 = s.mean_ln_1mt - digamma(c2) + ps;
        let ts = trigamma(c1 + c2);
        let h11 = ts - trigamma(c1);
        let h22 = ts - trigamma(c2);
        let h12 = ts;
        let det = h11 * h22 - h12 * h12;
        let (mut d1, mut d2) = if det > 0.0 && h11 < 0.0 {
            (-(h22 * g1 - h12 * g2) / det, -(h11 * g2 - h12 * g1) / det)
        } else {
            (g1 * c1 * c1, g2 * c2 * c2)
        };
        let mut improved = false;
        for _ in 0..60 {
            let (n1, n2) = (c1 + d1, c2 + d2);
            if n1 > 0.0 && n2 > 0.0 {
                let nl = s.log_likelihood(n1, n2);
                if nl >= ll {
                    improved = nl > ll || (d1 == 0.0 && d2 == 0.0);
                    c1 = n1;
                    c2 = n2;
                    ll = nl;
                    break;
                }
            }
            d1 *= 0.5;
            d2 *= 0.5;
        }
        if !improved || (d1.abs() < 1e-14 * c1 && d2.abs() < 1e-14 * c2) {
            break;
        }
    }
    Ok(BetaFit { c1, c2, log_likelihood: ll, pulled_in: pulled })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigamma_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-13);
        assert!((trigamma(0.5) - 3.0 * pi2_6).abs() < 1e-12);
        assert!((trigamma(10.0) - 0.105_166_335_681_685_3).abs() < 1e-13);
    }

    #[test]
    fn rejects_outside_and_small() {
        assert!(fit_beta_mle(&[0.1, 0.2], 0.0, 1.0).is_err());
        assert!(fit_beta_mle(&[0.1, 0.2, 1.5], 0.0, 1.0).is_err());
    }

    #[test]
    fn boundary_samples_pulled_in() {
        let f = fit_beta_mle(&[0.0, 0.3, 0.5, 0.7, 1.0], 0.0, 1.0).unwrap();
        assert_eq!(f.pulled_in, 2);
        assert!(f.c1 > 0.0 && f.c2 > 0.0);
    }
}
