//! Orthonormal polynomial chaos for independent bounded parameters.
//!
//! Uniform laws map to Legendre polynomials and Beta laws to Jacobi
//! polynomials on the reference interval `[-1, 1]`. Multi-dimensional bases
//! are full tensor products ordered lexicographically (first dimension
//! slowest).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::error::{invalid, Error, Result};

/// Largest supported number of random dimensions.
pub const MAX_DIMS: usize = 3;

/// Law of one uncertain parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamDistribution {
    Uniform {
        a: f64,
        b: f64,
    },
    /// Beta(c1, c2) affinely mapped to `[lo, hi]`.
    Beta {
        c1: f64,
        c2: f64,
        lo: f64,
        hi: f64,
    },
}

impl ParamDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ParamDistribution::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            ParamDistribution::Beta { c1, c2, lo, hi } => {
                c1 > 0.0 && c2 > 0.0 && c1.is_finite() && c2.is_finite() && lo.is_finite() && hi.is_finite() && lo < hi
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid distribution {self:?}"))
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            ParamDistribution::Uniform { a, b } => (a, b),
            ParamDistribution::Beta { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn contains(&self, z: f64) -> bool {
        let (lo, hi) = self.support();
        z >= lo && z <= hi
    }

    /// Affine map of the support onto `[-1, 1]`.
    #[inline]
    pub fn to_reference(&self, z: f64) -> f64 {
        let (lo, hi) = self.support();
        2.0 * (z - lo) / (hi - lo) - 1.0
    }

    #[inline]
    pub fn from_reference(&self, xi: f64) -> f64 {
        let (lo, hi) = self.support();
        lo + 0.5 * (xi + 1.0) * (hi - lo)
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    /// `E[z^k]` in closed form.
    pub fn raw_moment(&self, k: u32) -> f64 {
        let (lo, hi) = self.support();
        let w = hi - lo;
        // E[(lo + w t)^k] = sum_j C(k,j) lo^{k-j} w^j E[t^j]
        let mut total = 0.0;
        let mut binom = 1.0;
        for j in 0..=k {
            total += binom * lo.powi((k - j) as i32) * w.powi(j as i32) * self.unit_moment(j);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        total
    }

    /// `E[t^j]` for the law mapped to `[0, 1]`.
    fn unit_moment(&self, j: u32) -> f64 {
        match *self {
            ParamDistribution::Uniform { .. } => 1.0 / (j as f64 + 1.0),
            ParamDistribution::Beta { c1, c2, .. } => (0..j).map(|i| (c1 + i as f64) / (c1 + c2 + i as f64)).product(),
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        if !self.contains(z) {
            return 0.0;
        }
        let (lo, hi) = self.support();
        match *self {
            ParamDistribution::Uniform { .. } => 1.0 / (hi - lo),
            ParamDistribution::Beta { c1, c2, .. } => {
                let t = (z - lo) / (hi - lo);
                let ln_b = statrs::function::beta::ln_beta(c1, c2);
                ((c1 - 1.0) * t.ln() + (c2 - 1.0) * (1.0 - t).ln() - ln_b).exp() / (hi - lo)
            }
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let (lo, hi) = self.support();
        if z <= lo {
            return 0.0;
        }
        if z >= hi {
            return 1.0;
        }
        let t = (z - lo) / (hi - lo);
        match *self {
            ParamDistribution::Uniform { .. } => t,
            ParamDistribution::Beta { c1, c2, .. } => {
                statrs::distribution::Beta::new(c1, c2).map(|b| b.cdf(t)).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.support();
        let t: f64 = match *self {
            ParamDistribution::Uniform { .. } => rng.random::<f64>(),
            ParamDistribution::Beta { c1, c2, .. } => {
                rand_distr::Beta::new(c1, c2).expect("validated shapes").sample(rng)
            }
        };
        lo + t * (hi - lo)
    }

    /// Jacobi exponents `(alpha, beta)` of the weight `(1-xi)^alpha (1+xi)^beta`.
    fn jacobi_exponents(&self) -> (f64, f64) {
        match *self {
            ParamDistribution::Uniform { .. } => (0.0, 0.0),
            ParamDistribution::Beta { c1, c2, .. } => (c2 - 1.0, c1 - 1.0),
        }
    }
}

/// Monic recurrence coefficients `a_0..a_{n-1}`, `b_0..b_{n-1}` of the
/// reference-interval polynomials, with `b_0 = 1`.
pub fn recurrence(dist: &ParamDistribution, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (al, be) = dist.jacobi_exponents();
    let s = al + be;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        let kf = k as f64;
        a.push(if k == 0 {
            (be - al) / (s + 2.0)
        } else {
            (be * be - al * al) / ((2.0 * kf + s) * (2.0 * kf + s + 2.0))
        });
        b.push(match k {
            0 => 1.0,
            1 => 4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + s).powi(2) * (3.0 + s)),
            _ => {
                let t = 2.0 * kf + s;
                4.0 * kf * (kf + al) * (kf + be) * (kf + s) / (t * t * (t + 1.0) * (t - 1.0))
            }
        });
    }
    (a, b)
}

/// Orthonormal polynomials `Psi_0..Psi_M` for one parameter law.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBasis {
    dist: ParamDistribution,
    degree: usize,
    a: Vec<f64>,
    sqrt_b: Vec<f64>,
}

pub fn build_basis(dist: ParamDistribution, degree: usize) -> Result<PolyBasis> {
    dist.validate()?;
    let (a, b) = recurrence(&dist, degree + 1);
    Ok(PolyBasis { dist, degree, a, sqrt_b: b.iter().map(|v| v.sqrt()).collect() })
}

impl PolyBasis {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dist(&self) -> &ParamDistribution {
        &self.dist
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes `Psi_0(z)..Psi_M(z)` into `out`.
    pub fn eval_into(&self, z: f64, out: &mut [f64]) {
        let xi = self.dist.to_reference(z);
        out[0] = 1.0;
        if self.degree == 0 {
            return;
        }
        out[1] = (xi - self.a[0]) / self.sqrt_b[1];
        for n in 1..self.degree {
            out[n + 1] = ((xi - self.a[n]) * out[n] - self.sqrt_b[n] * out[n - 1]) / self.sqrt_b[n + 1];
        }
    }

    pub fn eval(&self, z: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(z, &mut out);
        out
    }
}

/// Quadrature rule over `d` parameters; node `q` occupies `points[q*d..(q+1)*d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != dim * weights.len() || weights.is_empty() {
            return invalid("quadrature points and weights disagree in size");
        }
        Ok(QuadratureRule { dim, points, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |q| self.node(q))
    }

    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.nodes().zip(&self.weights).map(|(z, w)| w * f(z)).sum()
    }
}

/// Gauss rule with `n` nodes by eigen-decomposition of the Jacobi matrix.
pub fn gauss_rule(dist: &ParamDistribution, n: usize) -> Result<QuadratureRule> {
    dist.validate()?;
    if n == 0 {
        return invalid("a Gauss rule needs at least one node");
    }
    let (a, b) = recurrence(dist, n);
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jm[(i, i)] = a[i];
        if i + 1 < n {
            let off = b[i + 1].sqrt();
            jm[(i, i + 1)] = off;
            jm[(i + 1, i)] = off;
        }
    }
    let eig = SymmetricEigen::try_new(jm, 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen(format!("Jacobi matrix of size {n} did not converge")))?;
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    if pairs.iter().any(|(x, w)| !x.is_finite() || !(*w > 0.0)) {
        return Err(Error::Eigen("non-finite node or nonpositive weight".into()));
    }
    pairs.sort_by(|l, r| l.0.total_cmp(&r.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(QuadratureRule {
        dim: 1,
        points: pairs.iter().map(|p| dist.from_reference(p.0)).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Full tensor product of 1 to 3 rules; the first factor varies slowest.
pub fn tensor_rule(rules: &[QuadratureRule]) -> Result<QuadratureRule> {
    if rules.is_empty() || rules.len() > MAX_DIMS {
        return invalid(format!("tensor rules take 1 to {MAX_DIMS} factors, got {}", rules.len()));
    }
    let dim: usize = rules.iter().map(|r| r.dim).sum();
    let mut points = vec![];
    let mut weights = vec![1.0];
    let mut prev_dim = 0;
    let mut prev_points: Vec<f64> = vec![];
    for r in rules {
        let mut np = Vec::with_capacity(weights.len() * r.len() * (prev_dim + r.dim));
        let mut nw = Vec::with_capacity(weights.len() * r.len());
        for (i, w) in weights.iter().enumerate() {
            for (q, rw) in r.weights.iter().enumerate() {
                np.extend_from_slice(&prev_points[i * prev_dim..(i + 1) * prev_dim]);
                np.extend_from_slice(r.node(q));
                nw.push(w * rw);
            }
        }
        prev_dim += r.dim;
        prev_points = np;
        weights = nw;
        points.clone_from(&prev_points);
    }
    QuadratureRule::new(dim, points, weights)
}

/// The multi-index set `{0..M}^d` in lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub dim: usize,
    pub order: usize,
}

impl MultiIndexSet {
    pub fn len(&self) -> usize {
        (self.order + 1).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, k: usize) -> Vec<usize> {
        let base = self.order + 1;
        let mut out = vec![0; self.dim];
        let mut rem = k;
        for j in (0..self.dim).rev() {
            out[j] = rem % base;
            rem /= base;
        }
        out
    }

    pub fn position(&self, multi: &[usize]) -> Option<usize> {
        if multi.len() != self.dim || multi.iter().any(|&i| i > self.order) {
            return None;
        }
        Some(multi.iter().fold(0, |acc, &i| acc * (self.order + 1) + i))
    }
}

/// Tensor chaos basis over independent parameters, all of the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosBasis {
    bases: Vec<PolyBasis>,
    indices: MultiIndexSet,
}

impl ChaosBasis {
    pub fn new(dists: &[ParamDistribution], order: usize) -> Result<Self> {
        if dists.len() > MAX_DIMS {
            return invalid(format!("at most {MAX_DIMS} random dimensions are supported"));
        }
        let bases = dists.iter().map(|d| build_basis(*d, order)).collect::<Result<Vec<_>>>()?;
        Ok(ChaosBasis { indices: MultiIndexSet { dim: dists.len(), order }, bases })
    }

    pub fn bases(&self) -> &[PolyBasis] {
        &self.bases
    }

    pub fn indices(&self) -> MultiIndexSet {
        self.indices
    }

    pub fn order(&self) -> usize {
        self.indices.order
    }

    pub fn dim(&self) -> usize {
        self.indices.dim
    }

    /// Number of chaos modes `K = (M+1)^d`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim() && self.bases.iter().zip(z).all(|(b, v)| b.dist().contains(*v))
    }

    /// All `K` products `Psi_k(z)`.
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        let n = self.order() + 1;
        let per_dim: Vec<Vec<f64>> = self.bases.iter().zip(z).map(|(b, v)| b.eval(*v)).collect();
        let mut out = vec![1.0];
        for psi in &per_dim {
            let mut next = Vec::with_capacity(out.len() * n);
            for v in &out {
                for p in psi {
                    next.push(v * p);
                }
            }
            out = next;
        }
        out
    }

    /// Tensor Gauss rule with `n` nodes per dimension.
    pub fn gauss_rule(&self, n: usize) -> Result<QuadratureRule> {
        if self.bases.is_empty() {
            return QuadratureRule::new(0, vec![], vec![1.0]);
        }
        let rules = self.bases.iter().map(|b| gauss_rule(b.dist(), n)).collect::<Result<Vec<_>>>()?;
        tensor_rule(&rules)
    }

    /// Reconstruction `sum_k c_k Psi_k(z)`.
    pub fn reconstruct(&self, coeffs: &[f64], z: &[f64]) -> f64 {
        self.eval(z).iter().zip(coeffs).map(|(p, c)| p * c).sum()
    }
}

/// Chaos coefficients `sum_q w_q f(z_q) Psi_k(z_q)`.
pub fn project<F: Fn(&[f64]) -> f64>(f: F, basis: &ChaosBasis, rule: &QuadratureRule) -> Vec<f64> {
    let mut out = vec![0.0; basis.len()];
    for (z, w) in rule.nodes().zip(&rule.weights) {
        let fz = w * f(z);
        for (o, p) in out.iter_mut().zip(basis.eval(z)) {
            *o += fz * p;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const U11: ParamDistribution = ParamDistribution::Uniform { a: -1.0, b: 1.0 };

    #[test]
    fn legendre_first_polynomials() {
        let b = build_basis(U11, 3).unwrap();
        for z in [-0.7, 0.0, 0.3, 1.0] {
            let v = b.eval(z);
            assert_eq!(v[0], 1.0);
            assert!((v[1] - 3f64.sqrt() * z).abs() < 1e-14);
        }
    }

    #[test]
    fn two_point_gauss_legendre() {
        let r = gauss_rule(&U11, 2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((r.node(0)[0] + s).abs() < 1e-15 && (r.node(1)[0] - s).abs() < 1e-15);
        assert!((r.weights[0] - 0.5).abs() < 1e-15 && (r.weights[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn multi_index_roundtrip() {
        let set = MultiIndexSet { dim: 3, order: 2 };
        assert_eq!(set.len(), 27);
        assert_eq!(set.index(1), vec![0, 0, 1]);
        assert_eq!(set.index(9), vec![1, 0, 0]);
        for k in 0..27 {
            assert_eq!(set.position(&set.index(k)), Some(k));
        }
    }

    #[test]
    fn tensor_rejects_four_factors() {
        let r = gauss_rule(&U11, 2).unwrap();
        assert!(tensor_rule(&[r.clone(), r.clone(), r.clone(), r]).is_err());
        assert!(tensor_rule(&[]).is_err());
    }

    #[test]
    fn bad_distributions_rejected() {
        assert!(build_basis(ParamDistribution::Uniform { a: 1.0, b: 1.0 }, 2).is_err());
        let bad = ParamDistribution::Beta { c1: -1.0, c2: 1.0, lo: 0.0, hi: 1.0 };
        assert!(gauss_rule(&bad, 3).is_err());
    }
}
