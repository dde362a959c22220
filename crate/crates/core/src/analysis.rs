//! Observables and verification helpers: moments, percentile bands, the
//! target-variability index, spectral convergence and tail classification.

use serde::{Deserialize, Serialize};

use crate::basis::MultiIndexSet;
use crate::error::{invalid, Error, Result};
use crate::numeric::{linear_fit, simpson};
use crate::sg::{self, GridSpec, SgProblem, SgSolution};

/// Relative mass error above which a grid density is rejected.
pub const MASS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub m: f64,
    pub e: f64,
    pub var: f64,
}

impl Moments {
    fn from_raw(m: f64, e: f64) -> Self {
        Moments { m, e, var: e - m * m }
    }
}

/// Simpson moments of a density sampled on `x_i = i dx`.
pub fn grid_moments(density: &[f64], dx: f64) -> Result<Moments> {
    check_density(density, dx)?;
    let x = |i: usize| i as f64 * dx;
    let m1: Vec<f64> = density.iter().enumerate().map(|(i, f)| x(i) * f).collect();
    let m2: Vec<f64> = density.iter().enumerate().map(|(i, f)| x(i) * x(i) * f).collect();
    Ok(Moments::from_raw(simpson(&m1, dx), simpson(&m2, dx)))
}

fn check_density(density: &[f64], dx: f64) -> Result<()> {
    if density.len() < 3 || !(dx > 0.0) {
        return invalid("density needs at least 3 gridpoints");
    }
    let mass = simpson(density, dx);
    if (mass - 1.0).abs() > MASS_TOL {
        return invalid(format!("density is not normalised (mass {mass})"));
    }
    Ok(())
}

/// Sample moments of particle sizes.
pub fn ensemble_moments(sizes: &[f64]) -> Result<Moments> {
    if sizes.is_empty() {
        return invalid("empty ensemble");
    }
    let n = sizes.len() as f64;
    let (s1, s2) = sizes.iter().fold((0.0, 0.0), |(a, b), x| (a + x, b + x * x));
    Ok(Moments::from_raw(s1 / n, s2 / n))
}

/// `G = int (x - x_d)^2 f dx` by Simpson.
pub fn g_index(density: &[f64], dx: f64, x_d: f64) -> Result<f64> {
    check_density(density, dx)?;
    let v: Vec<f64> = density.iter().enumerate().map(|(i, f)| (i as f64 * dx - x_d).powi(2) * f).collect();
    Ok(simpson(&v, dx))
}

/// `G = E - 2 x_d m + x_d^2`.
pub fn g_from_moments(m: &Moments, x_d: f64) -> f64 {
    m.e - 2.0 * x_d * m.m + x_d * x_d
}

/// Lower weighted empirical quantile.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let target = q * total;
    let mut cum = 0.0;
    for &i in &idx {
        cum += weights[i];
        if cum >= target * (1.0 - 1e-12) {
            return values[i];
        }
    }
    values[*idx.last().expect("nonempty")]
}

/// Percentile band levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band { lo: 0.1, hi: 0.9 }
    }
}

/// Per-node moment histories and their statistics over the random space.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    /// `node_m[j][q]` is `m(z_q, t_j)`.
    pub node_m: Vec<Vec<f64>>,
    pub node_e: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub expected_m: Vec<f64>,
    pub var_z: Vec<f64>,
    pub p_lo: Vec<f64>,
    pub p_hi: Vec<f64>,
}

impl MomentSeries {
    pub fn from_nodes(
        times: Vec<f64>,
        node_m: Vec<Vec<f64>>,
        node_e: Vec<Vec<f64>>,
        weights: Vec<f64>,
        band: Band,
    ) -> Self {
        let mut s = MomentSeries {
            times,
            node_m,
            node_e,
            weights,
            expected_m: vec![],
            var_z: vec![],
            p_lo: vec![],
            p_hi: vec![],
        };
        for row in &s.node_m {
            let mean: f64 = row.iter().zip(&s.weights).map(|(m, w)| w * m).sum();
            let var: f64 = row.iter().zip(&s.weights).map(|(m, w)| w * (m - mean).powi(2)).sum();
            s.expected_m.push(mean);
            s.var_z.push(var);
            s.p_lo.push(weighted_quantile(row, &s.weights, band.lo));
            s.p_hi.push(weighted_quantile(row, &s.weights, band.hi));
        }
        s
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    /// Weighted expectation of `G` at time index `j`.
    pub fn expected_g(&self, j: usize, x_d: f64) -> f64 {
        self.node_g(j, x_d).iter().zip(&self.weights).map(|(g, w)| g * w).sum()
    }

    pub fn node_g(&self, j: usize, x_d: f64) -> Vec<f64> {
        self.node_m[j].iter().zip(&self.node_e[j]).map(|(m, e)| e - 2.0 * x_d * m + x_d * x_d).collect()
    }
}

/// Moment statistics of a Galerkin run at the statistics-rule nodes.
pub fn sg_moment_series(sol: &SgSolution, grid: &GridSpec, band: Band) -> Result<MomentSeries> {
    let rule = sg::statistics_rule(&sol.basis)?;
    let psi: Vec<Vec<f64>> = rule.nodes().map(|z| sol.basis.eval(z)).collect();
    let mut times = vec![];
    let mut node_m = vec![];
    let mut node_e = vec![];
    for s in &sol.snapshots {
        let (mc, ec) = s.moment_coeffs(grid);
        times.push(s.time);
        node_m.push(psi.iter().map(|p| dot(p, &mc)).collect());
        node_e.push(psi.iter().map(|p| dot(p, &ec)).collect());
    }
    Ok(MomentSeries::from_nodes(times, node_m, node_e, rule.weights.clone(), band))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Target-variability index over a sweep of penalisations.
#[derive(Debug, Clone, PartialEq)]
pub struct GIndexReport {
    pub kappas: Vec<f64>,
    pub eg: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
}

impl GIndexReport {
    pub fn push(&mut self, kappa: f64, node_g: &[f64], weights: &[f64], band: Band) {
        self.kappas.push(kappa);
        self.eg.push(dot(node_g, weights));
        self.band_lo.push(weighted_quantile(node_g, weights, band.lo));
        self.band_hi.push(weighted_quantile(node_g, weights, band.hi));
    }

    pub fn new() -> Self {
        GIndexReport { kappas: vec![], eg: vec![], band_lo: vec![], band_hi: vec![] }
    }

    /// True when `E[G]` strictly decreases as `kappa` decreases.
    pub fn strictly_monotone(&self) -> bool {
        let mut pairs: Vec<(f64, f64)> = self.kappas.iter().copied().zip(self.eg.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.windows(2).all(|w| w[0].1 < w[1].1)
    }
}

impl Default for GIndexReport {
    fn default() -> Self {
        Self::new()
    }
}

/// `|| g_ref - g ||_{L^2(rho)}` from chaos coefficients, embedding the coarse
/// tensor set into the reference one.
pub fn parseval_l2_error(coarse: &[f64], coarse_order: usize, reference: &[f64], ref_order: usize, dim: usize) -> f64 {
    let cset = MultiIndexSet { dim, order: coarse_order };
    let rset = MultiIndexSet { dim, order: ref_order };
    let mut sum = 0.0;
    for (k, r) in reference.iter().enumerate() {
        let c = cset.position(&rset.index(k)).map_or(0.0, |p| coarse[p]);
        sum += (r - c).powi(2);
    }
    sum.sqrt()
}

/// One entry of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub order: usize,
    pub l2_error: f64,
}

/// First-moment chaos coefficients at `t_final` for each order.
pub fn first_moment_coeffs(problem: &SgProblem, ic: &[f64], order: usize) -> Result<Vec<f64>> {
    let p = SgProblem { order, ..problem.clone() };
    let sol = sg::solve(ic, &p, &[problem.grid.t_final])?;
    let last = sol.snapshots.last().ok_or_else(|| Error::InvalidInput("no snapshot".into()))?;
    Ok(last.moment_coeffs(&problem.grid).0)
}

/// `|| m^{M_ref}(z, T) - m^M(z, T) ||_{L^2(rho)}` for every `M` in `orders`.
pub fn convergence_study(
    problem: &SgProblem,
    ic: &[f64],
    orders: &[usize],
    ref_order: usize,
) -> Result<Vec<ConvergencePoint>> {
    if orders.iter().any(|&m| m > ref_order) {
        return invalid("reference order must dominate the studied orders");
    }
    let dim = problem.model.dim();
    let reference = first_moment_coeffs(problem, ic, ref_order)?;
    let coeffs: Vec<Result<Vec<f64>>> = {
        use rayon::prelude::*;
        orders.par_iter().map(|&m| first_moment_coeffs(problem, ic, m)).collect()
    };
    orders
        .iter()
        .zip(coeffs)
        .map(|(&m, c)| {
            Ok(ConvergencePoint { order: m, l2_error: parseval_l2_error(&c?, m, &reference, ref_order, dim) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailFit {
    /// `f ~ x^exponent`
    PowerLaw { exponent: f64 },
    /// `f ~ e^{-rate x}`
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailClassification {
    pub fit: TailFit,
    pub r2_power: f64,
    pub r2_exponential: f64,
    pub power_exponent: f64,
    pub exponential_rate: f64,
}

/// Index range `[start, end)` of the tail fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TailWindow {
    pub start: usize,
    pub end: usize,
}

impl TailWindow {
    /// Upper 20% of the grid without the last 3 points.
    pub fn default_for(n: usize) -> Self {
        TailWindow { start: (4 * n) / 5, end: n.saturating_sub(3) }
    }
}

/// Compares log-log and log-linear fits of the tail.
pub fn tail_classify(x: &[f64], f: &[f64], window: TailWindow) -> Result<TailClassification> {
    if x.len() != f.len() || window.end > x.len() || window.end < window.start + 3 {
        return invalid("tail window needs at least 3 points inside the grid");
    }
    let xs = &x[window.start..window.end];
    let fs = &f[window.start..window.end];
    if fs.iter().any(|v| !(*v > 0.0)) || xs.iter().any(|v| !(*v > 0.0)) {
        return invalid("tail window contains nonpositive values");
    }
    let lf: Vec<f64> = fs.iter().map(|v| v.ln()).collect();
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let (sp, _, r2p) = linear_fit(&lx, &lf);
    let (se, _, r2e) = linear_fit(xs, &lf);
    let fit = if r2p >= r2e { TailFit::PowerLaw { exponent: sp } } else { TailFit::Exponential { rate: -se } };
    Ok(TailClassification { fit, r2_power: r2p, r2_exponential: r2e, power_exponent: sp, exponential_rate: -se })
}
