//! Per-patient fits of the microscopic growth law.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optimize::{latin_hypercube, levenberg_marquardt, nelder_mead, polish, NmOptions, UnitBox};
use super::{PatientSeries, MM3_PER_UNIT, ONSET_VOLUME};
use crate::error::{invalid, Error, Result};
use crate::growth::{advance, advance_fixed, integrate_micro, params_from_vb, GrowthParams, ModelKind};

/// Box constraints on the fitted vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    /// Gompertz `(alpha, x_L)` or von Bertalanffy `(a, p, q)` defaults.
    pub fn default_for(model: ModelKind) -> Result<Self> {
        match model {
            ModelKind::Gompertz => Ok(ParamBox { lo: vec![1e-4, 0.05], hi: vec![0.1, 3.0] }),
            ModelKind::VonBertalanffy => Ok(ParamBox { lo: vec![0.5, 1e-4, 1e-4], hi: vec![0.95, 0.5, 0.5] }),
            ModelKind::Logistic => invalid("fitting is implemented for Gompertz and von Bertalanffy"),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lo.len() != dim || self.hi.len() != dim {
            return invalid(format!("parameter box must have {dim} entries"));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return invalid("parameter box must be nonempty and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Weight of the L1 penalty on the parameters.
    pub beta_reg: f64,
    pub bounds: ParamBox,
    pub n_starts: usize,
    pub seed: u64,
    pub max_evals: usize,
}

impl FitOptions {
    pub fn new(model: ModelKind) -> Result<Self> {
        Ok(FitOptions { beta_reg: 1e-3, bounds: ParamBox::default_for(model)?, n_starts: 16, seed: 0, max_evals: 500 })
    }
}

/// Best parameters for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    /// Gompertz `(alpha, x_L)`; von Bertalanffy `(a, p, q)`.
    pub theta: Vec<f64>,
    pub residual: f64,
    /// Translation of the time axis, `t + onset_shift`, putting 1 mm^3 at 0.
    pub onset_shift: Option<f64>,
    pub degenerate: bool,
    /// First observation (days, scaled volume) the trajectory starts from.
    pub t0: f64,
    pub x0: f64,
}

impl FitResult {
    pub fn params(&self) -> Result<GrowthParams> {
        theta_params(self.model, &self.theta)
    }

    /// Carrying capacity implied by the fit.
    pub fn x_l(&self) -> Result<f64> {
        Ok(self.params()?.x_l)
    }
}

/// Growth parameters of a fitted vector (`lambda = sigma2 = 0`).
pub fn theta_params(model: ModelKind, theta: &[f64]) -> Result<GrowthParams> {
    match (model, theta) {
        (ModelKind::Gompertz, [alpha, x_l]) => GrowthParams::gompertz(*alpha, 0.0, *x_l, 0.0),
        (ModelKind::VonBertalanffy, [a, p, q]) => params_from_vb(*a, *p, *q, 0.0, 0.0),
        _ => invalid(format!("parameter vector {theta:?} does not match {model:?}")),
    }
}

fn dim_of(model: ModelKind) -> Result<usize> {
    match model {
        ModelKind::Gompertz => Ok(2),
        ModelKind::VonBertalanffy => Ok(3),
        ModelKind::Logistic => invalid("fitting is implemented for Gompertz and von Bertalanffy"),
    }
}

struct Problem<'a> {
    model: ModelKind,
    times: &'a [f64],
    obs: Vec<f64>,
    beta: f64,
    unit: UnitBox,
}

impl Problem<'_> {
    fn residuals(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let p = theta_params(self.model, theta).ok()?;
        let traj = integrate_micro(self.obs[0], &p, self.times).ok()?;
        Some(traj.iter().zip(&self.obs).skip(1).map(|(x, y)| x - y).collect())
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        match self.residuals(theta) {
            Some(r) => r.iter().map(|v| v.abs()).sum::<f64>() + self.beta * theta.iter().map(|v| v.abs()).sum::<f64>(),
            None => f64::INFINITY,
        }
    }
}

/// Fits with default options except the penalty weight and box.
pub fn fit_series(series: &PatientSeries, model: ModelKind, beta_reg: f64, bounds: &ParamBox) -> Result<FitResult> {
    let opts = FitOptions { beta_reg, bounds: bounds.clone(), ..FitOptions::new(model)? };
    fit_series_with(series, model, &opts)
}

/// Minimises `sum_h |x(t_h) - x_h| + beta ||theta||_1` over the box, with the
/// trajectory started at the first observation.
pub fn fit_series_with(series: &PatientSeries, model: ModelKind, opts: &FitOptions) -> Result<FitResult> {
    series.validate()?;
    let dim = dim_of(model)?;
    opts.bounds.validate(dim)?;
    if !(opts.beta_reg >= 0.0) || opts.n_starts == 0 {
        return invalid("need beta_reg >= 0 and at least one start");
    }
    let times: Vec<f64> = series.observations.iter().map(|o| o.0).collect();
    let obs: Vec<f64> = series.observations.iter().map(|o| o.1 / MM3_PER_UNIT).collect();
    let (t0, x0) = (times[0], obs[0]);
    let unit = UnitBox { lo: opts.bounds.lo.clone(), hi: opts.bounds.hi.clone() };
    let prob = Problem { model, times: &times, obs, beta: opts.beta_reg, unit };

    if prob.obs.iter().all(|v| *v == x0) {
        let theta = flat_theta(model, &opts.bounds, x0);
        let residual = prob.objective(&theta);
        return Ok(FitResult { model, theta, residual, onset_shift: None, degenerate: true, t0, x0 });
    }

    let f = |u: &[f64]| prob.objective(&prob.unit.to_box(u));
    let nm = NmOptions { max_evals: opts.max_evals, x_tol: 1e-8, f_tol: 1e-12 };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in latin_hypercube(opts.n_starts, dim, &mut rng) {
        let (u, v, _) = nelder_mead(&f, &start, 0.1, nm);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((u, v));
        }
    }
    let (mut u, mut fu) = best.expect("at least one start");
    let lm = levenberg_marquardt(&|u: &[f64]| prob.residuals(&prob.unit.to_box(u)), &u, 100);
    let f_lm = f(&lm);
    if f_lm < fu {
        u = lm;
        fu = f_lm;
    }
    let (u, fu) = polish(&f, &u, fu, NmOptions { max_evals: opts.max_evals, x_tol: 1e-13, f_tol: 0.0 });
    if !fu.is_finite() {
        return Err(Error::StepSize("no feasible parameter vector in the box".into()));
    }
    let theta = prob.unit.to_box(&u);
    let mut result = FitResult { model, theta, residual: fu, onset_shift: None, degenerate: false, t0, x0 };
    result.onset_shift = align_to_onset(&result).ok();
    Ok(result)
}

fn flat_theta(model: ModelKind, b: &ParamBox, x0: f64) -> Vec<f64> {
    match model {
        ModelKind::Gompertz => vec![b.lo[0], x0.clamp(b.lo[1], b.hi[1])],
        _ => {
            let (a, q) = (b.lo[0], b.lo[2]);
            vec![a, (q * x0.powf(1.0 - a)).clamp(b.lo[1], b.hi[1]), q]
        }
    }
}

/// Step of the onset search as a fraction of `1/mu`.
const ONSET_STEP_FRACTION: f64 = 2e-3;

/// Shift `t* - t0`, where the fitted trajectory reaches 1 mm^3 a time `t*`
/// before the first observation.
pub fn align_to_onset(result: &FitResult) -> Result<f64> {
    let p = result.params()?;
    let x0 = result.x0;
    let target = ONSET_VOLUME;
    if ((x0 - target) / target).abs() < 1e-14 {
        return Ok(-result.t0);
    }
    let h = ONSET_STEP_FRACTION / p.mu;
    // sign of the time direction in which the trajectory approaches the target
    let backward = x0 > target;
    if (backward && x0 >= p.x_l) || (!backward && p.x_l <= target) {
        return Err(Error::NoCrossing(format!(
            "trajectory through {x0:.3e} with capacity {:.3e} never reaches {target:e}",
            p.x_l
        )));
    }
    let dir = if backward { -1.0 } else { 1.0 };
    let before = |x: f64| if backward { x > target } else { x < target };
    // March in chunks of 1/mu until the target is passed, then bisect inside
    // the chunk. Backward von Bertalanffy paths reach zero in finite time, so
    // a step that loses positivity counts as having passed the target.
    let chunk = 1.0 / p.mu;
    let (mut lo, mut x_lo) = (0.0, x0);
    let mut bracket = None;
    for _ in 0..10_000 {
        let next = advance_fixed(x_lo, &p, dir * chunk, h);
        let Some(x) = next.filter(|x| before(*x)) else {
            bracket = Some(lo + chunk);
            break;
        };
        lo += chunk;
        x_lo = x;
    }
    let Some(mut hi) = bracket else {
        return Err(Error::NoCrossing(format!("no crossing of {target:e} within {lo:.3e} days")));
    };
    let base = lo;
    let side = |d: f64| advance_fixed(x_lo, &p, dir * (d - base), h).is_some_and(before);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if side(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let t_star = 0.5 * (lo + hi);
    Ok(if backward { t_star } else { -t_star } - result.t0)
}

/// Fitted trajectory on `t + onset_shift` coordinates, in scaled units.
pub fn shifted_trajectory(result: &FitResult, shifted_times: &[f64]) -> Result<Vec<f64>> {
    let shift = result.onset_shift.ok_or_else(|| Error::NoCrossing("fit has no onset".into()))?;
    let p = result.params()?;
    let start = result.t0 + shift;
    let h = ONSET_STEP_FRACTION / p.mu;
    shifted_times.iter().map(|t| advance(result.x0, &p, t - start, h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::gompertz_closed_form;

    fn gompertz_series(alpha: f64, x_l: f64, x0: f64, times: &[f64]) -> PatientSeries {
        let obs =
            times.iter().map(|&t| (t, gompertz_closed_form(x0, alpha, x_l, t - times[0]) * MM3_PER_UNIT)).collect();
        PatientSeries { id: "g".into(), observations: obs }
    }

    #[test]
    fn onset_matches_closed_form() {
        let r = FitResult {
            model: ModelKind::Gompertz,
            theta: vec![0.02, 1.0],
            residual: 0.0,
            onset_shift: None,
            degenerate: false,
            t0: 0.0,
            x0: 0.01,
        };
        let shift = align_to_onset(&r).unwrap();
        let exact = 2.0 / 0.02 * ((1.0f64 / ONSET_VOLUME).ln() / (1.0f64 / 0.01).ln()).ln();
        assert!((shift - exact).abs() < 1e-6, "{shift} vs {exact}");
        let at_zero = shifted_trajectory(&FitResult { onset_shift: Some(shift), ..r.clone() }, &[0.0]).unwrap();
        assert!((at_zero[0] * MM3_PER_UNIT - 1.0).abs() < 1e-9);
        let at_anchor = FitResult { x0: ONSET_VOLUME, ..r };
        assert_eq!(align_to_onset(&at_anchor).unwrap(), 0.0);
    }

    #[test]
    fn no_crossing_above_capacity() {
        let r = FitResult {
            model: ModelKind::Gompertz,
            theta: vec![0.02, 0.5],
            residual: 0.0,
            onset_shift: None,
            degenerate: false,
            t0: 0.0,
            x0: 0.8,
        };
        assert!(matches!(align_to_onset(&r), Err(Error::NoCrossing(_))));
    }

    #[test]
    fn gompertz_roundtrip_noiseless() {
        let times = [0.0, 40.0, 80.0, 120.0, 160.0, 200.0];
        let s = gompertz_series(0.02, 1.0, 0.01, &times);
        let fit =
            fit_series(&s, ModelKind::Gompertz, 0.0, &ParamBox::default_for(ModelKind::Gompertz).unwrap()).unwrap();
        assert!(((fit.theta[0] - 0.02) / 0.02).abs() < 0.01, "{:?}", fit.theta);
        assert!(((fit.theta[1] - 1.0) / 1.0).abs() < 0.01, "{:?}", fit.theta);
    }

    #[test]
    fn degenerate_series_flagged() {
        let s = PatientSeries { id: "d".into(), observations: vec![(0.0, 500.0), (10.0, 500.0), (20.0, 500.0)] };
        let fit =
            fit_series(&s, ModelKind::Gompertz, 1e-3, &ParamBox::default_for(ModelKind::Gompertz).unwrap()).unwrap();
        assert!(fit.degenerate);
    }
}
