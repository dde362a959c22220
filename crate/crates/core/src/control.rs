//! Feedback therapy protocols.
//!
//! The controlled transition is `x'' = x + eps * S(x) * u` with the cost
//! `(x'' - x_d)^2 + nu |u|^p`, `nu = eps * kappa`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Selective function weighting the control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selective {
    /// `S(x) = 1`
    Unit,
    /// `S(x) = sqrt(x)`
    SqrtX,
}

impl Selective {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Selective::Unit => 1.0,
            Selective::SqrtX => x.max(0.0).sqrt(),
        }
    }

    /// `S(x)^2`, exact for `SqrtX`.
    #[inline]
    pub fn squared(self, x: f64) -> f64 {
        match self {
            Selective::Unit => 1.0,
            Selective::SqrtX => x.max(0.0),
        }
    }
}

/// When the therapy is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Activation {
    /// Active for `t >= t_act`.
    AtTime { t_act: f64 },
    /// Active once the expected mean over the random space exceeds the threshold.
    MeanThreshold { threshold: f64 },
}

impl Default for Activation {
    fn default() -> Self {
        Activation::AtTime { t_act: 0.0 }
    }
}

fn default_x_d() -> f64 {
    0.18
}

fn default_u_bounds() -> [f64; 2] {
    [-50.0, 50.0]
}

fn default_selective() -> Selective {
    Selective::Unit
}

/// Therapy protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    /// Exponent of the control penalty, 1 or 2.
    pub p: u8,
    /// Scaled penalisation; the kinetic penalty is `nu = eps * kappa`.
    pub kappa: f64,
    #[serde(default = "default_x_d")]
    pub x_d: f64,
    #[serde(default = "default_selective")]
    pub selective: Selective,
    /// Admissible set for the `p = 1` projection.
    #[serde(default = "default_u_bounds")]
    pub u_bounds: [f64; 2],
    #[serde(default)]
    pub activation: Activation,
}

impl ControlSpec {
    pub fn new(p: u8, kappa: f64, x_d: f64, selective: Selective) -> Result<Self> {
        let spec =
            ControlSpec { p, kappa, x_d, selective, u_bounds: default_u_bounds(), activation: Activation::default() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_u_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.u_bounds = [lo, hi];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p != 1 && self.p != 2 {
            return invalid(format!("control exponent p must be 1 or 2, got {}", self.p));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return invalid(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.x_d > 0.0 && self.x_d.is_finite()) {
            return invalid(format!("x_d must be positive, got {}", self.x_d));
        }
        let [lo, hi] = self.u_bounds;
        if !(lo <= 0.0 && 0.0 <= hi && lo < hi) {
            return invalid(format!("u_bounds [{lo}, {hi}] must be an interval containing 0"));
        }
        match self.activation {
            Activation::AtTime { t_act } if !(t_act >= 0.0) => {
                invalid(format!("activation time must be nonnegative, got {t_act}"))
            }
            Activation::MeanThreshold { threshold } if !(threshold > 0.0) => {
                invalid(format!("activation threshold must be positive, got {threshold}"))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn nu(&self, eps: f64) -> f64 {
        eps * self.kappa
    }
}

/// Quadratic-penalty optimal control.
pub fn optimal_u_p2(x: f64, spec: &ControlSpec, eps: f64) -> f64 {
    let s = spec.selective.eval(x);
    let s2 = spec.selective.squared(x);
    -s * eps / (eps * eps * s2 + spec.nu(eps)) * (x - spec.x_d)
}

/// Unprojected L1-penalty control, the shrinkage operator applied to `x - x_d`.
pub fn shrinkage_p1(x: f64, spec: &ControlSpec, eps: f64) -> f64 {
    let s = spec.selective.eval(x);
    if s <= 0.0 {
        return 0.0;
    }
    let err = x - spec.x_d;
    let nu = spec.nu(eps);
    if err.abs() > nu / (2.0 * eps * s) {
        err.signum() * nu / (2.0 * eps * eps * s * s) - err / (eps * s)
    } else {
        0.0
    }
}

/// L1-penalty optimal control projected on the admissible set.
pub fn optimal_u_p1(x: f64, spec: &ControlSpec, eps: f64) -> f64 {
    let [lo, hi] = spec.u_bounds;
    shrinkage_p1(x, spec, eps).clamp(lo, hi)
}

/// Outcome of one controlled transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutcome {
    pub x_after: f64,
    pub u: f64,
    /// True when the `p = 1` projection changed the control.
    pub clamped: bool,
}

/// Applies the optimal control of `spec` to a particle of size `x`.
pub fn apply(x: f64, spec: &ControlSpec, eps: f64) -> ControlOutcome {
    if spec.p == 2 {
        let s2 = spec.selective.squared(x);
        let factor = eps * s2 / (eps * s2 + spec.kappa);
        let x_after = x - factor * (x - spec.x_d);
        ControlOutcome { x_after, u: optimal_u_p2(x, spec, eps), clamped: false }
    } else {
        let raw = shrinkage_p1(x, spec, eps);
        let [lo, hi] = spec.u_bounds;
        let u = raw.clamp(lo, hi);
        let x_after = if u == 0.0 { x } else { x + eps * spec.selective.eval(x) * u };
        ControlOutcome { x_after: x_after.max(0.0), u, clamped: u != raw }
    }
}

/// Drift added by the `p = 2` control in the Fokker-Planck limit.
pub fn controlled_drift(x: f64, spec: &ControlSpec) -> Result<f64> {
    if spec.p != 2 {
        return Err(Error::InvalidInput("the Fokker-Planck control drift exists only for p = 2".into()));
    }
    Ok(spec.selective.squared(x) * (x - spec.x_d) / spec.kappa)
}

/// Transition cost `(x_after - x_d)^2 + nu |u|^p`.
pub fn cost(x_after: f64, u: f64, spec: &ControlSpec, eps: f64) -> f64 {
    let d = x_after - spec.x_d;
    d * d + spec.nu(eps) * u.abs().powi(spec.p as i32)
}
