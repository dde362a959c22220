//! Stochastic Galerkin solver for the Fokker-Planck limit.
//!
//! The chaos coefficients `f_k(x, t)` of the density obey
//!
//! ```text
//! d_t f_k = d_x [ sum_h A_kh(x) f_h + (sigma^2/2) d_x (x^2 f_k) ]
//! ```
//!
//! on `[0, x_max]` with zero flux at both ends. Space is discretised by a
//! conservative finite-volume form of central differences on the nodes
//! `x_i = i dx`, time by explicit Euler.

use serde::{Deserialize, Serialize};

use crate::basis::{ChaosBasis, QuadratureRule};
use crate::control::{Activation, ControlSpec};
use crate::error::{invalid, Error, Result};
use crate::growth::phi_limit_unchecked;
use crate::numeric::simpson;
use crate::uq::{ParamField, ParamModel};

pub const NEGATIVITY_TOL: f64 = 1e-8;
pub const BLOWUP_LIMIT: f64 = 1e12;
/// Largest entry change tolerated when the assembly rule is doubled.
pub const QUADRATURE_CHECK_TOL: f64 = 1e-8;
/// Norm ratio above which the Gronwall bound counts as violated.
pub const STABILITY_SLACK: f64 = 1.01;

fn default_x_max() -> f64 {
    2.0
}
fn default_n() -> usize {
    201
}
fn default_courant() -> f64 {
    100.0
}
fn default_t_final() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    /// `dt = dx / courant`.
    #[serde(default = "default_courant")]
    pub courant: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { x_max: default_x_max(), n: default_n(), courant: default_courant(), t_final: default_t_final() }
    }
}

impl GridSpec {
    pub fn with_t_final(mut self, t: f64) -> Self {
        self.t_final = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 || !(self.x_max > 0.0) || !(self.courant > 0.0) || !(self.t_final >= 0.0) {
            return invalid(format!("invalid grid {self:?}"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.x_max / (self.n - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.dx() / self.courant
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Finite-volume cell length.
    #[inline]
    pub fn volume(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt()).round() as usize
    }
}

/// Galerkin drift matrices `A_kh(x_i)`, one dense `K x K` block per node,
/// plus their face averages used by the flux.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrix {
    k: usize,
    n: usize,
    dx: f64,
    sigma2: f64,
    data: Vec<f64>,
    faces: Vec<f64>,
    /// Largest entry change observed when doubling the assembly rule.
    pub quadrature_defect: f64,
}

impl DriftMatrix {
    pub fn n_modes(&self) -> usize {
        self.k
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.data[i * self.k * self.k..(i + 1) * self.k * self.k]
    }

    /// `(A(x_i) + A(x_{i+1})) / 2`.
    #[inline]
    pub fn face(&self, i: usize) -> &[f64] {
        &self.faces[i * self.k * self.k..(i + 1) * self.k * self.k]
    }

    #[inline]
    pub fn entry(&self, i: usize, k: usize, h: usize) -> f64 {
        self.data[(i * self.k + k) * self.k + h]
    }

    /// Entry of `A + sigma^2 x I`.
    pub fn compact_entry(&self, i: usize, k: usize, h: usize) -> f64 {
        let shift = if k == h { self.sigma2 * i as f64 * self.dx } else { 0.0 };
        self.entry(i, k, h) + shift
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in 0..self.k {
                for h in k + 1..self.k {
                    worst = worst.max((self.entry(i, k, h) - self.entry(i, h, k)).abs());
                }
            }
        }
        worst
    }

    /// `max_i max_k sum_h |(A + sigma^2 x I)_kh(x_i)|`.
    pub fn max_row_sum_compact(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in 0..self.k {
                let s: f64 = (0..self.k).map(|h| self.compact_entry(i, k, h).abs()).sum();
                worst = worst.max(s);
            }
        }
        worst
    }

    /// Measured `max |d_x (A + sigma^2 x I)_kh|` by finite differences.
    pub fn c_a(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (l, r) = if i == 0 {
                (0, 1)
            } else if i + 1 == self.n {
                (i - 1, i)
            } else {
                (i - 1, i + 1)
            };
            let span = (r - l) as f64 * self.dx;
            for k in 0..self.k {
                for h in 0..self.k {
                    let d = (self.compact_entry(r, k, h) - self.compact_entry(l, k, h)) / span;
                    worst = worst.max(d.abs());
                }
            }
        }
        worst
    }

    /// Largest `dt` allowed by `dt <= dx^2 / (sigma^2 x_max^2 + dx max|A|)`.
    pub fn max_stable_dt(&self, grid: &GridSpec) -> f64 {
        let dx = grid.dx();
        dx * dx / (self.sigma2 * grid.x_max * grid.x_max + dx * self.max_row_sum_compact())
    }
}

fn constant_sigma2(model: &ParamModel) -> Result<f64> {
    if model.is_random(ParamField::Sigma2) {
        return invalid("the Galerkin solver needs a deterministic sigma2");
    }
    model.constants.get(&ParamField::Sigma2).copied().ok_or_else(|| Error::InvalidInput("sigma2 is required".into()))
}

fn assemble_with(
    grid: &GridSpec,
    basis: &ChaosBasis,
    model: &ParamModel,
    control: Option<&ControlSpec>,
    rule: &QuadratureRule,
) -> Result<DriftMatrix> {
    let k = basis.len();
    let n = grid.n;
    let sigma2 = constant_sigma2(model)?;
    let mut data = vec![0.0; n * k * k];
    let mut vel = vec![0.0; n];
    for (z, w) in rule.nodes().zip(&rule.weights) {
        let p = model.resolve(z)?;
        let psi = basis.eval(z);
        for (i, v) in vel.iter_mut().enumerate().skip(1) {
            let x = grid.x(i);
            *v = -w * x * phi_limit_unchecked(x / p.x_l, &p);
        }
        for (i, v) in vel.iter().enumerate().skip(1) {
            let block = &mut data[i * k * k..(i + 1) * k * k];
            for a in 0..k {
                let va = v * psi[a];
                let row = &mut block[a * k..(a + 1) * k];
                for b in a..k {
                    row[b] += va * psi[b];
                }
            }
        }
    }
    for i in 0..n {
        let block = &mut data[i * k * k..(i + 1) * k * k];
        for a in 0..k {
            for b in 0..a {
                block[a * k + b] = block[b * k + a];
            }
        }
        if let Some(c) = control {
            let x = grid.x(i);
            let add = c.selective.squared(x) * (x - c.x_d) / c.kappa;
            for a in 0..k {
                block[a * k + a] += add;
            }
        }
    }
    let kk = k * k;
    let faces = (0..n.saturating_sub(1) * kk).map(|j| 0.5 * (data[j] + data[j + kk])).collect();
    Ok(DriftMatrix { k, n, dx: grid.dx(), sigma2, data, faces, quadrature_defect: 0.0 })
}

/// Assembles `A_kh(x_i) = -E[x_i Phi(x_i/x_L(z), z) Psi_k Psi_h]`, plus the
/// `p = 2` control drift on the diagonal when `control` is given.
pub fn assemble_drift(
    grid: &GridSpec,
    basis: &ChaosBasis,
    model: &ParamModel,
    control: Option<&ControlSpec>,
) -> Result<DriftMatrix> {
    grid.validate()?;
    model.validate()?;
    if basis.dim() != model.dim() {
        return invalid("basis and parameter model disagree in dimension");
    }
    if let Some(c) = control {
        c.validate()?;
        if c.p != 2 {
            return invalid("the Galerkin solver supports the p = 2 control only");
        }
    }
    let nq = 2 * basis.order() + 2;
    let mut drift = assemble_with(grid, basis, model, control, &basis.gauss_rule(nq)?)?;
    if basis.dim() > 0 {
        let fine = assemble_with(grid, basis, model, control, &basis.gauss_rule(2 * nq)?)?;
        let defect = drift.data.iter().zip(&fine.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if defect > QUADRATURE_CHECK_TOL {
            log::warn!("drift assembly not converged in quadrature: doubling nodes moved an entry by {defect:.2e}");
        }
        drift.quadrature_defect = defect;
    }
    Ok(drift)
}

/// Chaos coefficients on the grid, stored point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    k: usize,
    n: usize,
    pub time: f64,
    coeffs: Vec<f64>,
}

impl GalerkinState {
    pub fn zeros(k: usize, n: usize) -> Self {
        GalerkinState { k, n, time: 0.0, coeffs: vec![0.0; k * n] }
    }

    /// Deterministic initial data: `f_0 = density`, higher modes zero.
    pub fn from_density(density: &[f64], k: usize) -> Self {
        let mut s = Self::zeros(k, density.len());
        for (i, v) in density.iter().enumerate() {
            s.coeffs[i * k] = *v;
        }
        s
    }

    pub fn from_coeffs(k: usize, n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != k * n {
            return invalid("coefficient array has the wrong size");
        }
        Ok(GalerkinState { k, n, time: 0.0, coeffs })
    }

    pub fn n_modes(&self) -> usize {
        self.k
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.coeffs[i * self.k + k]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, k)).collect()
    }

    /// `sum_i V_i f_0(x_i)`, exactly conserved by the scheme.
    pub fn mass(&self, grid: &GridSpec) -> f64 {
        (0..self.n).map(|i| grid.volume(i) * self.value(i, 0)).sum()
    }

    /// Discrete `sum_k int f_k^2 dx`.
    pub fn l2_norm_sq(&self, grid: &GridSpec) -> f64 {
        (0..self.n)
            .map(|i| grid.volume(i) * self.coeffs[i * self.k..(i + 1) * self.k].iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Chaos coefficients of `m(z) = int x f dx` and `E(z) = int x^2 f dx`.
    pub fn moment_coeffs(&self, grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
        let dx = grid.dx();
        let mut m = Vec::with_capacity(self.k);
        let mut e = Vec::with_capacity(self.k);
        let mut buf1 = vec![0.0; self.n];
        let mut buf2 = vec![0.0; self.n];
        for k in 0..self.k {
            for i in 0..self.n {
                let x = grid.x(i);
                buf1[i] = x * self.value(i, k);
                buf2[i] = x * x * self.value(i, k);
            }
            m.push(simpson(&buf1, dx));
            e.push(simpson(&buf2, dx));
        }
        (m, e)
    }
}

/// Density `f^M(z, x_i) = sum_k f_k(x_i) Psi_k(z)`.
pub fn reconstruct(state: &GalerkinState, basis: &ChaosBasis, z: &[f64]) -> Result<Vec<f64>> {
    if !basis.contains(z) {
        return invalid(format!("parameter point {z:?} outside the support"));
    }
    if basis.len() != state.k {
        return invalid("basis and state disagree in mode count");
    }
    let psi = basis.eval(z);
    Ok((0..state.n).map(|i| psi.iter().enumerate().map(|(k, p)| p * state.value(i, k)).sum()).collect())
}

/// Reusable buffers for [`SgStepper::step`].
#[derive(Debug, Clone)]
pub struct SgStepper {
    grid: GridSpec,
    sigma2: f64,
    a: Vec<f64>,
    flux: Vec<f64>,
    prev: Vec<f64>,
    mid: Vec<f64>,
    x2: Vec<f64>,
}

impl SgStepper {
    pub fn new(grid: GridSpec, sigma2: f64, k: usize) -> Self {
        let x2 = grid.points().iter().map(|x| x * x).collect();
        SgStepper {
            grid,
            sigma2,
            a: vec![0.0; grid.n * k],
            flux: vec![0.0; k],
            prev: vec![0.0; k],
            mid: vec![0.0; k],
            x2,
        }
    }

    /// One explicit Euler step of length `grid.dt()`.
    pub fn step(&mut self, state: &mut GalerkinState, drift: &DriftMatrix) -> Result<()> {
        let (k, n) = (state.k, state.n);
        if drift.k != k || drift.n != n || n != self.grid.n {
            return invalid("state, drift and grid sizes disagree");
        }
        let dt = self.grid.dt();
        let c = 0.5 * self.sigma2 / self.grid.dx();
        let f = &mut state.coeffs;
        // drift part of the face flux: face-averaged A times face-averaged f
        for i in 0..n - 1 {
            let block = drift.face(i);
            for (h, m) in self.mid.iter_mut().enumerate() {
                *m = 0.5 * (f[i * k + h] + f[(i + 1) * k + h]);
            }
            for r in 0..k {
                let row = &block[r * k..(r + 1) * k];
                self.a[i * k + r] = row.iter().zip(&self.mid).map(|(x, y)| x * y).sum();
            }
        }
        self.prev.fill(0.0);
        let mut blown = false;
        for i in 0..n {
            if i + 1 < n {
                for r in 0..k {
                    self.flux[r] =
                        self.a[i * k + r] + c * (self.x2[i + 1] * f[(i + 1) * k + r] - self.x2[i] * f[i * k + r]);
                }
            } else {
                self.flux.fill(0.0);
            }
            let scale = dt / self.grid.volume(i);
            for r in 0..k {
                let v = &mut f[i * k + r];
                *v += scale * (self.flux[r] - self.prev[r]);
                blown |= !(v.abs() <= BLOWUP_LIMIT);
            }
            std::mem::swap(&mut self.flux, &mut self.prev);
        }
        state.time += dt;
        if blown {
            return Err(Error::BlowUp(format!(
                "coefficient exceeded {BLOWUP_LIMIT:e} at t = {}; reduce dt or check the drift",
                state.time
            )));
        }
        Ok(())
    }
}

/// One step as a pure function.
pub fn step(state: &GalerkinState, drift: &DriftMatrix, grid: &GridSpec, sigma2: f64) -> Result<GalerkinState> {
    let mut next = state.clone();
    SgStepper::new(*grid, sigma2, state.k).step(&mut next, drift)?;
    Ok(next)
}

/// Outcome of checking the Gronwall bound along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub c_a: f64,
    /// Largest `||f(t)||^2 / (e^{C_A t} ||f(0)||^2)` over the history.
    pub worst_ratio: f64,
    /// Snapshot times where the ratio exceeded the slack.
    pub violations: Vec<f64>,
}

impl StabilityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `||f(t)||^2 <= e^{C_A t} ||f(0)||^2` along `history`, with `t`
/// measured from the first entry.
pub fn stability_report(history: &[GalerkinState], grid: &GridSpec, c_a: f64) -> StabilityReport {
    let mut report = StabilityReport { c_a, worst_ratio: 0.0, violations: vec![] };
    let Some(first) = history.first() else {
        return report;
    };
    let n0 = first.l2_norm_sq(grid);
    for s in history {
        let ratio = s.l2_norm_sq(grid) / ((c_a * (s.time - first.time)).exp() * n0);
        report.worst_ratio = report.worst_ratio.max(ratio);
        if ratio > STABILITY_SLACK {
            report.violations.push(s.time);
        }
    }
    report
}

pub fn stability_monitor(history: &[GalerkinState], grid: &GridSpec, drift: &DriftMatrix) -> StabilityReport {
    stability_report(history, grid, drift.c_a())
}

/// A full Galerkin run.
#[derive(Debug, Clone, PartialEq)]
pub struct SgProblem {
    pub grid: GridSpec,
    pub model: ParamModel,
    pub order: usize,
    pub control: Option<ControlSpec>,
    /// Run even when `dt` violates the stability restriction.
    pub allow_unstable: bool,
}

impl SgProblem {
    pub fn new(grid: GridSpec, model: ParamModel, order: usize) -> Self {
        SgProblem { grid, model, order, control: None, allow_unstable: false }
    }

    pub fn with_control(mut self, control: ControlSpec) -> Self {
        self.control = Some(control);
        self
    }

    pub fn basis(&self) -> Result<ChaosBasis> {
        ChaosBasis::new(&self.model.random.dists(), self.order)
    }
}

#[derive(Debug, Clone)]
pub struct SgSolution {
    pub basis: ChaosBasis,
    pub snapshots: Vec<GalerkinState>,
    pub activation_time: Option<f64>,
    pub stability: StabilityReport,
    /// Most negative reconstructed value seen at the quadrature nodes.
    pub min_reconstructed: f64,
    pub quadrature_defect: f64,
    pub max_stable_dt: f64,
    /// `|mass(T) - mass(0)|`.
    pub mass_drift: f64,
}

/// Nodes used for reporting statistics over the random space.
pub fn statistics_rule(basis: &ChaosBasis) -> Result<QuadratureRule> {
    basis.gauss_rule(basis.order() + 1)
}

fn min_over_nodes(state: &GalerkinState, basis: &ChaosBasis, psi: &[Vec<f64>]) -> f64 {
    let mut worst = f64::INFINITY;
    for p in psi {
        for i in 0..state.n {
            let v: f64 = (0..basis.len()).map(|k| p[k] * state.value(i, k)).sum();
            worst = worst.min(v);
        }
    }
    worst
}

/// Integrates from `ic` and returns snapshots at `output_times`.
pub fn solve(ic: &[f64], problem: &SgProblem, output_times: &[f64]) -> Result<SgSolution> {
    let grid = problem.grid;
    grid.validate()?;
    problem.model.validate()?;
    if ic.len() != grid.n {
        return invalid(format!("initial density has {} values for {} gridpoints", ic.len(), grid.n));
    }
    if ic.iter().any(|v| !(*v >= 0.0)) {
        return invalid("initial density must be nonnegative");
    }
    let mass0: f64 = ic.iter().enumerate().map(|(i, v)| grid.volume(i) * v).sum();
    if (mass0 - 1.0).abs() > 1e-6 {
        return invalid(format!("initial density has mass {mass0}, expected 1"));
    }
    let dt = grid.dt();
    let mut out_steps = Vec::with_capacity(output_times.len());
    for &t in output_times {
        if !(t >= 0.0 && t <= grid.t_final + 0.5 * dt) {
            return invalid(format!("output time {t} outside [0, {}]", grid.t_final));
        }
        out_steps.push((t / dt).round() as usize);
    }
    if out_steps.windows(2).any(|w| w[1] < w[0]) {
        return invalid("output times must be nondecreasing");
    }

    let basis = problem.basis()?;
    let sigma2 = constant_sigma2(&problem.model)?;
    let free = assemble_drift(&grid, &basis, &problem.model, None)?;
    let controlled =
        problem.control.as_ref().map(|c| assemble_drift(&grid, &basis, &problem.model, Some(c))).transpose()?;
    let mut max_dt = free.max_stable_dt(&grid);
    let mut c_a = free.c_a();
    let mut defect = free.quadrature_defect;
    if let Some(d) = &controlled {
        max_dt = max_dt.min(d.max_stable_dt(&grid));
        c_a = c_a.max(d.c_a());
        defect = defect.max(d.quadrature_defect);
    }
    if dt > max_dt && !problem.allow_unstable {
        return Err(Error::Stability(format!(
            "dt = {dt:.3e} exceeds the stability restriction {max_dt:.3e}; increase the Courant divisor"
        )));
    }

    let rule = statistics_rule(&basis)?;
    let psi: Vec<Vec<f64>> = rule.nodes().map(|z| basis.eval(z)).collect();
    let k = basis.len();
    let mut state = GalerkinState::from_density(ic, k);
    let initial = state.clone();
    let mut stepper = SgStepper::new(grid, sigma2, k);
    let mut snapshots = Vec::with_capacity(out_steps.len());
    let mut min_rec = f64::INFINITY;
    let mut activation_time = None;
    let last = out_steps.last().copied().unwrap_or(0);
    let mut next_out = 0;
    let dx = grid.dx();
    let xs = grid.points();

    let mut record = |s: usize,
                      state: &GalerkinState,
                      snaps: &mut Vec<GalerkinState>,
                      min_rec: &mut f64|
     -> Result<()> {
        while next_out < out_steps.len() && out_steps[next_out] == s {
            let m = min_over_nodes(state, &basis, &psi);
            *min_rec = min_rec.min(m);
            if m < -NEGATIVITY_TOL {
                return Err(Error::Negativity(format!("reconstructed density reached {m:.3e} at t = {}", state.time)));
            }
            snaps.push(state.clone());
            next_out += 1;
        }
        Ok(())
    };

    record(0, &state, &mut snapshots, &mut min_rec)?;
    let mut buf = vec![0.0; grid.n];
    for s in 0..last {
        let t = s as f64 * dt;
        state.time = t;
        if activation_time.is_none() {
            if let Some(c) = &problem.control {
                let on = match c.activation {
                    Activation::AtTime { t_act } => t >= t_act - 0.5 * dt,
                    Activation::MeanThreshold { threshold } => {
                        for (i, b) in buf.iter_mut().enumerate() {
                            *b = xs[i] * state.value(i, 0);
                        }
                        simpson(&buf, dx) > threshold
                    }
                };
                if on {
                    activation_time = Some(t);
                }
            }
        }
        let drift = match (&controlled, activation_time) {
            (Some(d), Some(_)) => d,
            _ => &free,
        };
        stepper.step(&mut state, drift)?;
        state.time = (s + 1) as f64 * dt;
        record(s + 1, &state, &mut snapshots, &mut min_rec)?;
    }

    let mut history = Vec::with_capacity(snapshots.len() + 1);
    history.push(initial);
    history.extend(snapshots.iter().cloned());
    let stability = stability_report(&history, &grid, c_a);
    let mass_drift = (state.mass(&grid) - mass0).abs();
    Ok(SgSolution {
        basis,
        snapshots,
        activation_time,
        stability,
        min_reconstructed: min_rec,
        quadrature_defect: defect,
        max_stable_dt: max_dt,
        mass_drift,
    })
}

/// Gamma density with the given shape and scale as finite-volume cell
/// averages on the grid, renormalised to unit discrete mass.
pub fn gamma_initial(grid: &GridSpec, shape: f64, scale: f64) -> Result<Vec<f64>> {
    use statrs::distribution::{ContinuousCDF, Gamma};
    grid.validate()?;
    let g = Gamma::new(shape, 1.0 / scale).map_err(|e| Error::InvalidInput(format!("gamma initial data: {e}")))?;
    let dx = grid.dx();
    let mut f: Vec<f64> = (0..grid.n)
        .map(|i| {
            let x = grid.x(i);
            let lo = (x - 0.5 * dx).max(0.0);
            let hi = (x + 0.5 * dx).min(grid.x_max);
            (g.cdf(hi) - g.cdf(lo)) / grid.volume(i)
        })
        .collect();
    let mass: f64 = f.iter().enumerate().map(|(i, v)| grid.volume(i) * v).sum();
    if !(mass > 0.0) {
        return invalid("gamma initial data has no mass on the grid");
    }
    f.iter_mut().for_each(|v| *v /= mass);
    Ok(f)
}
