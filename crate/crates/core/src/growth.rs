//! Transition functions, microscopic growth laws and equilibrium densities.
//!
//! Sizes are in scaled volume units (1.0 = 1e5 mm^3). The transition function
//!
//! ```text
//! Phi^eps(y) = mu (1 - e^{eps g(y)}) / ((1 + lambda) e^{eps g(y)} + 1 - lambda),
//! g(y) = (y^delta - 1) / delta
//! ```
//!
//! interpolates Gompertz (`delta -> 0`), von Bertalanffy (`delta < 0`) and
//! logistic (`delta > 0`) dynamics.

use serde::{Deserialize, Serialize};

use crate::control::{ControlSpec, Selective};
use crate::error::{invalid, Error, Result};
use crate::numeric::simpson;

/// Below this `|delta|` the Gompertz limit formulas are used.
pub const GOMPERTZ_SWITCH_TOL: f64 = 1e-8;

/// Tail mass above which the equilibrium normaliser warns.
pub const TRUNCATION_WARN_MASS: f64 = 1e-8;

/// Microscopic parameters of the transition law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub mu: f64,
    pub lambda: f64,
    pub delta: f64,
    pub x_l: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gompertz,
    VonBertalanffy,
    Logistic,
}

impl ModelKind {
    pub fn from_delta(delta: f64) -> Self {
        if delta.abs() < GOMPERTZ_SWITCH_TOL {
            ModelKind::Gompertz
        } else if delta < 0.0 {
            ModelKind::VonBertalanffy
        } else {
            ModelKind::Logistic
        }
    }
}

impl GrowthParams {
    pub fn new(mu: f64, lambda: f64, delta: f64, x_l: f64, sigma2: f64) -> Result<Self> {
        let p = GrowthParams { mu, lambda, delta, x_l, sigma2 };
        p.validate()?;
        Ok(p)
    }

    /// Gompertz parameters (`delta = 0`).
    pub fn gompertz(mu: f64, lambda: f64, x_l: f64, sigma2: f64) -> Result<Self> {
        Self::new(mu, lambda, 0.0, x_l, sigma2)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu > 0.0
            && self.mu < 1.0
            && (0.0..1.0).contains(&self.lambda)
            && (-1.0..=1.0).contains(&self.delta)
            && self.x_l > 0.0
            && self.x_l.is_finite()
            && self.sigma2 >= 0.0
            && self.sigma2.is_finite();
        if ok {
            Ok(())
        } else {
            invalid(format!("growth parameters out of range: {self:?}"))
        }
    }

    pub fn kind(&self) -> ModelKind {
        ModelKind::from_delta(self.delta)
    }

    /// `gamma = sigma^2 / mu`.
    pub fn gamma(&self) -> f64 {
        self.sigma2 / self.mu
    }

    /// Bounds `[-mu/(1+lambda), mu/(1-lambda)]` of the transition function.
    pub fn phi_bounds(&self) -> (f64, f64) {
        (-self.mu / (1.0 + self.lambda), self.mu / (1.0 - self.lambda))
    }
}

#[inline]
fn shape(ln_y: f64, delta: f64) -> f64 {
    if delta.abs() < GOMPERTZ_SWITCH_TOL {
        ln_y
    } else {
        (delta * ln_y).exp_m1() / delta
    }
}

fn check_ratio(y: f64) -> Result<()> {
    if y > 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("size ratio must be positive, got {y}")))
    }
}

/// Transition function at scale `eps`.
pub fn phi_eps(y: f64, params: &GrowthParams, eps: f64) -> Result<f64> {
    check_ratio(y)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    Ok(phi_eps_unchecked(y, params, eps))
}

#[inline]
pub(crate) fn phi_eps_unchecked(y: f64, p: &GrowthParams, eps: f64) -> f64 {
    let s = eps * shape(y.ln(), p.delta);
    if s <= 0.0 {
        let e = s.exp();
        -p.mu * s.exp_m1() / ((1.0 + p.lambda) * e + 1.0 - p.lambda)
    } else {
        let e = (-s).exp();
        p.mu * (-s).exp_m1() / ((1.0 + p.lambda) + (1.0 - p.lambda) * e)
    }
}

/// Quasi-invariant limit `Phi_delta(y) = mu/(2 delta) (1 - y^delta)`.
pub fn phi_limit(y: f64, params: &GrowthParams) -> Result<f64> {
    check_ratio(y)?;
    Ok(phi_limit_unchecked(y, params))
}

#[inline]
pub(crate) fn phi_limit_unchecked(y: f64, p: &GrowthParams) -> f64 {
    -0.5 * p.mu * shape(y.ln(), p.delta)
}

/// Right-hand side of the microscopic growth law `x' = Phi_delta(x/x_L) x`.
#[inline]
pub fn micro_rhs(x: f64, params: &GrowthParams) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        phi_limit_unchecked(x / params.x_l, params) * x
    }
}

/// Coefficients of `x' = p x^a - q x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbCoefficients {
    pub p: f64,
    pub q: f64,
    pub a: f64,
}

pub fn vb_coefficients(params: &GrowthParams) -> Result<VbCoefficients> {
    let d = params.delta;
    if !(d < 0.0) || d.abs() < GOMPERTZ_SWITCH_TOL {
        return Err(Error::Domain(format!("von Bertalanffy coefficients need delta < 0, got {d}")));
    }
    let q = -params.mu / (2.0 * d);
    Ok(VbCoefficients { p: q * params.x_l.powf(-d), q, a: d + 1.0 })
}

/// Parameters from von Bertalanffy coefficients `(a, p, q)`; `x_L = (p/q)^{1/(1-a)}`.
pub fn params_from_vb(a: f64, p: f64, q: f64, lambda: f64, sigma2: f64) -> Result<GrowthParams> {
    if !(a < 1.0 && p > 0.0 && q > 0.0) {
        return invalid(format!("need a < 1 and p, q > 0, got ({a}, {p}, {q})"));
    }
    let delta = a - 1.0;
    GrowthParams::new(-2.0 * delta * q, lambda, delta, (p / q).powf(1.0 / (1.0 - a)), sigma2)
}

const MAX_HALVINGS: u32 = 40;
/// Bound on the RK4 steps of one call to [`advance`].
const MAX_STEPS: u64 = 1 << 22;
/// Default RK4 step as a fraction of `1/mu`.
const STEP_FRACTION: f64 = 0.1;

/// RK4 solution of the microscopic law sampled at `times`, starting from `x0`
/// at `times[0]`.
pub fn integrate_micro(x0: f64, params: &GrowthParams, times: &[f64]) -> Result<Vec<f64>> {
    integrate_micro_with(x0, params, times, STEP_FRACTION)
}

pub(crate) fn integrate_micro_with(
    x0: f64,
    params: &GrowthParams,
    times: &[f64],
    step_fraction: f64,
) -> Result<Vec<f64>> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return invalid(format!("initial volume must be positive, got {x0}"));
    }
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("times must be strictly increasing");
    }
    let h_max = step_fraction / params.mu;
    let mut out = Vec::with_capacity(times.len());
    let mut x = x0;
    out.push(x);
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        x = advance(x, params, dt, dt.min(h_max))?;
        out.push(x);
    }
    Ok(out)
}

/// Advances by `duration` (negative integrates backward) with steps of at most `h_max`.
pub(crate) fn advance(x0: f64, p: &GrowthParams, duration: f64, h_max: f64) -> Result<f64> {
    if duration == 0.0 {
        return Ok(x0);
    }
    let mut n = (duration.abs() / h_max).ceil().max(1.0) as u64;
    for _ in 0..=MAX_HALVINGS {
        if let Some(x) = rk4_steps(x0, p, duration, n) {
            return Ok(x);
        }
        n *= 2;
        if n > MAX_STEPS {
            break;
        }
    }
    Err(Error::StepSize(format!("positivity lost after repeated step halvings from x0 = {x0}")))
}

/// Single attempt of [`advance`]; `None` once positivity is lost.
pub(crate) fn advance_fixed(x0: f64, p: &GrowthParams, duration: f64, h_max: f64) -> Option<f64> {
    if duration == 0.0 {
        return Some(x0);
    }
    rk4_steps(x0, p, duration, (duration.abs() / h_max).ceil().max(1.0) as u64)
}

fn rk4_steps(x0: f64, p: &GrowthParams, duration: f64, n: u64) -> Option<f64> {
    let h = duration / n as f64;
    let mut x = x0;
    for _ in 0..n {
        let k1 = micro_rhs(x, p);
        let x2 = x + 0.5 * h * k1;
        let k2 = micro_rhs(x2, p);
        let x3 = x + 0.5 * h * k2;
        let k3 = micro_rhs(x3, p);
        let x4 = x + h * k3;
        let k4 = micro_rhs(x4, p);
        let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(x2 > 0.0 && x3 > 0.0 && x4 > 0.0 && next > 0.0 && next.is_finite()) {
            return None;
        }
        x = next;
    }
    Some(x)
}

/// Closed-form Gompertz trajectory.
pub fn gompertz_closed_form(x0: f64, mu: f64, x_l: f64, t: f64) -> f64 {
    x_l * ((x0 / x_l).ln() * (-0.5 * mu * t).exp()).exp()
}

/// Stationary state of the Fokker-Planck limit, optionally under `p = 2` control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSpec {
    pub params: GrowthParams,
    pub control: Option<ControlSpec>,
}

impl EquilibriumSpec {
    pub fn free(params: GrowthParams) -> Self {
        EquilibriumSpec { params, control: None }
    }

    pub fn controlled(params: GrowthParams, control: ControlSpec) -> Self {
        EquilibriumSpec { params, control: Some(control) }
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma()
    }

    /// Amoroso shape `k = 1/(gamma |delta|) + 1`, for `delta < 0`.
    pub fn amoroso_k(&self) -> Option<f64> {
        (self.params.kind() == ModelKind::VonBertalanffy).then(|| 1.0 / (self.gamma() * self.params.delta.abs()) + 1.0)
    }

    /// Amoroso scale `theta = x_L (1/(gamma delta^2))^{1/|delta|}`, for `delta < 0`.
    pub fn amoroso_theta(&self) -> Option<f64> {
        let d = self.params.delta;
        (self.params.kind() == ModelKind::VonBertalanffy)
            .then(|| self.params.x_l * (1.0 / (self.gamma() * d * d)).powf(1.0 / d.abs()))
    }

    /// Lower bound on `kappa` for an admissible `S = sqrt(x)` equilibrium.
    pub fn sqrt_kappa_threshold(&self) -> Option<f64> {
        self.control.and_then(|c| {
            (c.selective == Selective::SqrtX)
                .then(|| 2.0 * c.x_d * self.gamma() * self.params.delta.abs() / self.params.sigma2)
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.params.sigma2 > 0.0) {
            return invalid("equilibrium needs sigma2 > 0");
        }
        if let Some(c) = &self.control {
            c.validate()?;
            if c.p != 2 {
                return invalid("closed-form controlled equilibria exist only for p = 2");
            }
            if let Some(th) = self.sqrt_kappa_threshold() {
                if !(c.kappa > th) {
                    return Err(Error::Admissibility(format!("S = sqrt(x) needs kappa > {th}, got {}", c.kappa)));
                }
            }
        }
        Ok(())
    }

    /// Unnormalised log-density.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("equilibrium needs x > 0, got {x}")));
        }
        self.validate()?;
        Ok(self.log_density_unchecked(x))
    }

    fn log_density_unchecked(&self, x: f64) -> f64 {
        let p = &self.params;
        let l = (x / p.x_l).ln();
        let h = if p.delta.abs() < GOMPERTZ_SWITCH_TOL { 0.5 } else { h_fn(p.delta * l) };
        let mut lf = -2.0 * x.ln() - h * l * l / self.gamma();
        if let Some(c) = &self.control {
            let w = 2.0 / (p.sigma2 * c.kappa);
            lf -= w * match c.selective {
                Selective::Unit => x.ln() + c.x_d / x,
                Selective::SqrtX => x - c.x_d * x.ln(),
            };
        }
        lf
    }
}

/// `(e^u - 1 - u) / u^2`.
fn h_fn(u: f64) -> f64 {
    if u.abs() < 1e-2 {
        0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u * (1.0 / 120.0 + u * (1.0 / 720.0 + u / 5040.0))))
    } else if u > 700.0 {
        // exp(u) overflows; the density is zero to working precision
        f64::INFINITY
    } else {
        (u.exp_m1() - u) / (u * u)
    }
}

/// Unnormalised equilibrium density.
pub fn equilibrium_pdf(x: f64, spec: &EquilibriumSpec) -> Result<f64> {
    Ok(spec.log_density(x)?.exp())
}

/// Equilibrium density normalised on `[0, x_max]`.
#[derive(Debug, Clone)]
pub struct NormalizedEquilibrium {
    pub spec: EquilibriumSpec,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    /// `log C` such that `pdf(x) = exp(log_density(x) - log_c)`.
    pub log_c: f64,
    /// Mass of the untruncated density beyond `x_max`.
    pub truncation_mass: f64,
    pub truncation_warning: bool,
}

impl NormalizedEquilibrium {
    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (self.spec.log_density_unchecked(x) - self.log_c).exp()
    }
}

/// Normalises by composite Simpson on a uniform grid of `n` points.
pub fn normalize_equilibrium(spec: &EquilibriumSpec, x_max: f64, n: usize) -> Result<NormalizedEquilibrium> {
    spec.validate()?;
    if n < 3 || !(x_max > 0.0) {
        return invalid("normaliser needs n >= 3 and x_max > 0");
    }
    let dx = x_max / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
    let mut logf: Vec<f64> =
        x.iter().map(|&xi| if xi > 0.0 { spec.log_density_unchecked(xi) } else { f64::NEG_INFINITY }).collect();
    let near_origin = spec.log_density_unchecked(1e-9 * dx);
    let shift = logf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::Domain("equilibrium vanishes on the whole grid".into()));
    }
    if near_origin > shift {
        return Err(Error::Domain("equilibrium is unbounded at the origin".into()));
    }
    logf[0] = near_origin;
    let rel: Vec<f64> = logf.iter().map(|l| (l - shift).exp()).collect();
    let inside = simpson(&rel, dx);

    // tail beyond x_max in the variable s = ln(x / x_max)
    let m = 4001;
    let s_max = 14.0;
    let ds = s_max / (m - 1) as f64;
    let tail_vals: Vec<f64> = (0..m)
        .map(|j| {
            let xs = x_max * (j as f64 * ds).exp();
            (spec.log_density_unchecked(xs) - shift).exp() * xs
        })
        .collect();
    let tail = simpson(&tail_vals, ds);
    let truncation_mass = tail / (inside + tail);
    let truncation_warning = truncation_mass > TRUNCATION_WARN_MASS;
    if truncation_warning {
        log::warn!("equilibrium truncation mass {truncation_mass:.3e} beyond x_max = {x_max}");
    }
    let density = rel.iter().map(|r| r / inside).collect();
    Ok(NormalizedEquilibrium {
        spec: *spec,
        x,
        density,
        log_c: shift + inside.ln(),
        truncation_mass,
        truncation_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vb() -> GrowthParams {
        GrowthParams::new(0.5, 0.0, -0.5, 1.0, 0.01).unwrap()
    }

    #[test]
    fn phi_at_unit_ratio() {
        for eps in [1e-3, 0.1, 1.0] {
            assert_eq!(phi_eps(1.0, &vb(), eps).unwrap(), 0.0);
        }
        assert_eq!(phi_limit(1.0, &vb()).unwrap(), 0.0);
    }

    #[test]
    fn phi_limit_hand_values() {
        assert!((phi_limit(0.25, &vb()).unwrap() - 0.5).abs() < 1e-15);
        let g = GrowthParams::new(0.02, 0.0, 1e-12, 1.0, 0.0).unwrap();
        assert!((phi_limit((-1.0f64).exp(), &g).unwrap() - 0.01).abs() < 1e-16);
        let near = GrowthParams::new(0.02, 0.0, 1e-4, 1.0, 0.0).unwrap();
        let v = phi_limit((-1.0f64).exp(), &near).unwrap();
        assert!(((v - 0.01) / 0.01).abs() < 1e-4);
    }

    #[test]
    fn phi_domain_errors() {
        assert!(phi_eps(0.0, &vb(), 0.1).is_err());
        assert!(phi_eps(1.0, &vb(), 0.0).is_err());
        assert!(phi_limit(-1.0, &vb()).is_err());
    }

    #[test]
    fn phi_extreme_exponents_stay_bounded() {
        let p = GrowthParams::new(0.9, 0.5, -1.0, 1.0, 0.0).unwrap();
        let (lo, hi) = p.phi_bounds();
        for y in [1e-300, 1e-20, 1e20, 1e300] {
            let v = phi_eps(y, &p, 50.0).unwrap();
            assert!(v.is_finite() && v >= lo - 1e-15 && v <= hi + 1e-15, "y={y} v={v}");
        }
    }

    #[test]
    fn micro_rhs_values() {
        let g = GrowthParams::gompertz(0.02, 0.0, 1.0, 0.0).unwrap();
        let x = (-1.0f64).exp();
        assert!((micro_rhs(x, &g) - 0.01 * x).abs() < 1e-16);
        assert_eq!(micro_rhs(1.0, &g), 0.0);
        assert_eq!(micro_rhs(0.0, &g), 0.0);
        assert!((micro_rhs(0.25, &vb()) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn vb_coefficient_values() {
        let c = vb_coefficients(&vb()).unwrap();
        assert!((c.p - 0.5).abs() < 1e-15 && (c.q - 0.5).abs() < 1e-15 && (c.a - 0.5).abs() < 1e-15);
        let p = GrowthParams::new(0.02, 0.0, -0.2, 0.5, 0.0).unwrap();
        let c = vb_coefficients(&p).unwrap();
        assert!((c.q - 0.05).abs() < 1e-15);
        assert!((c.p - 0.05 * 0.5f64.powf(0.2)).abs() < 1e-15);
        assert!(vb_coefficients(&GrowthParams::gompertz(0.1, 0.0, 1.0, 0.0).unwrap()).is_err());
        let back = params_from_vb(c.a, c.p, c.q, 0.0, 0.0).unwrap();
        assert!((back.x_l - 0.5).abs() < 1e-14 && (back.mu - 0.02).abs() < 1e-15);
    }

    #[test]
    fn gompertz_trajectory_matches_closed_form() {
        let g = GrowthParams::gompertz(0.02, 0.0, 1.0, 0.0).unwrap();
        let times: Vec<f64> = (0..=600).map(|i| i as f64).collect();
        let traj = integrate_micro(0.01, &g, &times).unwrap();
        for (t, x) in times.iter().zip(&traj) {
            let exact = gompertz_closed_form(0.01, 0.02, 1.0, *t);
            assert!(((x - exact) / exact).abs() < 1e-6, "t={t}");
        }
        assert!(traj.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn equilibrium_trajectory_is_constant() {
        let traj = integrate_micro(1.0, &vb(), &[0.0, 1.0, 5.0]).unwrap();
        assert!(traj.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn decreasing_above_capacity() {
        let traj = integrate_micro(2.0, &vb(), &[0.0, 1.0, 2.0, 10.0]).unwrap();
        assert!(traj.windows(2).all(|w| w[1] < w[0]) && traj[3] > 1.0);
    }

    #[test]
    fn euler_step_is_one_transition() {
        let p = vb();
        let (x, eps) = (0.3, 1e-4);
        let euler = x + eps * micro_rhs(x, &p);
        let transition = x + phi_eps(x / p.x_l, &p, eps).unwrap() * x;
        assert!((euler - transition).abs() < 1e-9);
    }

    #[test]
    fn kind_switch() {
        assert_eq!(ModelKind::from_delta(5e-9), ModelKind::Gompertz);
        assert_eq!(ModelKind::from_delta(-0.3), ModelKind::VonBertalanffy);
        assert_eq!(ModelKind::from_delta(0.3), ModelKind::Logistic);
    }

    #[test]
    fn sqrt_control_admissibility() {
        let p = GrowthParams::new(0.2, 0.0, -0.25, 0.5, 0.1).unwrap();
        let ctl = ControlSpec::new(2, 0.4, 0.18, Selective::SqrtX).unwrap();
        // threshold 2 x_d |delta| / mu = 0.45
        assert!(matches!(EquilibriumSpec::controlled(p, ctl).validate(), Err(Error::Admissibility(_))));
        let ok = ControlSpec::new(2, 0.5, 0.18, Selective::SqrtX).unwrap();
        assert!(EquilibriumSpec::controlled(p, ok).validate().is_ok());
    }
}
