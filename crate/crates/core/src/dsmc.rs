//! Particle simulation of the kinetic model with stochastic collocation.
//!
//! Each particle undergoes the transition
//! `x' = x + Phi^eps(x/x_L) x + x eta`, with `eta` uniform of variance
//! `eps sigma^2`. Within a step of length `dt` a particle transitions with
//! probability `dt / eps`, so `eps` transitions correspond to one unit of the
//! Fokker-Planck time. The control transition is selected the same way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Band, MomentSeries};
use crate::basis::ChaosBasis;
use crate::control::{self, Activation, ControlSpec};
use crate::error::{invalid, Error, Result};
use crate::growth::{phi_eps_unchecked, GrowthParams};
use crate::uq::ParamModel;

/// Symmetric bounded noise `eta = sqrt(3 eps sigma^2) U`, `U ~ U[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaSampler {
    half_width: f64,
}

impl EtaSampler {
    /// Fails unless `-half_width >= -1 + max_loss`, which keeps sizes nonnegative.
    pub fn new(eps: f64, sigma2: f64, max_loss: f64) -> Result<Self> {
        if !(eps > 0.0) || !(sigma2 >= 0.0) {
            return invalid("noise needs eps > 0 and sigma2 >= 0");
        }
        let half_width = (3.0 * eps * sigma2).sqrt();
        if -half_width < -1.0 + max_loss {
            return invalid(format!(
                "noise support [-{half_width:.4}, {half_width:.4}] violates the positivity bound {:.4}; reduce eps or sigma2",
                -1.0 + max_loss
            ));
        }
        Ok(EtaSampler { half_width })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.half_width == 0.0 {
            0.0
        } else {
            self.half_width * (2.0 * rng.random::<f64>() - 1.0)
        }
    }
}

/// One noise draw without the positivity check.
pub fn sample_eta<R: Rng + ?Sized>(eps: f64, sigma2: f64, rng: &mut R) -> f64 {
    EtaSampler { half_width: (3.0 * eps * sigma2).sqrt() }.sample(rng)
}

/// Particles at one collocation node.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub sizes: Vec<f64>,
    pub params: GrowthParams,
    pub eps: f64,
    eta: EtaSampler,
    rng: ChaCha8Rng,
    /// Number of `p = 1` control applications cut by the projection.
    pub clamp_events: u64,
}

impl ParticleEnsemble {
    /// `stream` selects an independent substream of the seed.
    pub fn new(sizes: Vec<f64>, params: GrowthParams, eps: f64, seed: u64, stream: u64) -> Result<Self> {
        params.validate()?;
        if sizes.iter().any(|x| !(*x >= 0.0)) {
            return invalid("particle sizes must be nonnegative");
        }
        let eta = EtaSampler::new(eps, params.sigma2, params.mu / (1.0 + params.lambda))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(ParticleEnsemble { sizes, params, eps, eta, rng, clamp_events: 0 })
    }

    /// Replaces sizes by `n` draws from `ic`.
    pub fn sample_initial(&mut self, ic: &InitialCondition, n: usize, x_max: f64) -> Result<()> {
        self.sizes = ic.sample(&mut self.rng, n, x_max)?;
        Ok(())
    }

    /// Growth transition applied to every particle.
    pub fn growth_step(&mut self) -> Result<()> {
        self.growth_select(1.0)
    }

    /// Growth transition applied to each particle with probability `prob`.
    pub fn growth_select(&mut self, prob: f64) -> Result<()> {
        let p = self.params;
        let inv_xl = 1.0 / p.x_l;
        for x in self.sizes.iter_mut() {
            if prob < 1.0 && self.rng.random::<f64>() >= prob {
                continue;
            }
            if *x <= 0.0 {
                continue;
            }
            let phi = phi_eps_unchecked(*x * inv_xl, &p, self.eps);
            let eta = self.eta.sample(&mut self.rng);
            let next = *x * (1.0 + phi + eta);
            if !(next >= 0.0) {
                return Err(Error::Negativity(format!("particle size {next} after a growth transition")));
            }
            *x = next;
        }
        Ok(())
    }

    /// Control transition applied to every particle.
    pub fn control_step(&mut self, spec: &ControlSpec) {
        self.control_select(spec, 1.0)
    }

    pub fn control_select(&mut self, spec: &ControlSpec, prob: f64) {
        for x in self.sizes.iter_mut() {
            if prob < 1.0 && self.rng.random::<f64>() >= prob {
                continue;
            }
            let out = control::apply(*x, spec, self.eps);
            self.clamp_events += out.clamped as u64;
            *x = out.x_after;
        }
    }

    pub fn mean(&self) -> f64 {
        self.sizes.iter().sum::<f64>() / self.sizes.len() as f64
    }

    /// `(m, E, var)` of the sizes.
    pub fn moments(&self) -> (f64, f64, f64) {
        let n = self.sizes.len() as f64;
        let (s1, s2) = self.sizes.iter().fold((0.0, 0.0), |(a, b), x| (a + x, b + x * x));
        let (m, e) = (s1 / n, s2 / n);
        (m, e, e - m * m)
    }

    pub fn min_size(&self) -> f64 {
        self.sizes.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Density histogram on `[0, x_max]`, normalised by the total count.
    pub fn histogram(&self, x_max: f64, bins: usize) -> Histogram {
        let width = x_max / bins as f64;
        let mut counts = vec![0u64; bins];
        for &x in &self.sizes {
            if x < x_max {
                counts[(x / width) as usize] += 1;
            } else if x == x_max {
                counts[bins - 1] += 1;
            }
        }
        let norm = 1.0 / (self.sizes.len() as f64 * width);
        Histogram {
            edges: (0..=bins).map(|i| i as f64 * width).collect(),
            density: counts.iter().map(|&c| c as f64 * norm).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

/// Initial size distribution of the particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Gamma law truncated to `[0, x_max]`.
    Gamma { shape: f64, scale: f64 },
    /// All particles at one size.
    Point { x0: f64 },
}

impl InitialCondition {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, x_max: f64) -> Result<Vec<f64>> {
        match *self {
            InitialCondition::Point { x0 } => {
                if !(x0 >= 0.0) {
                    return invalid("initial size must be nonnegative");
                }
                Ok(vec![x0; n])
            }
            InitialCondition::Gamma { shape, scale } => {
                let g = rand_distr::Gamma::new(shape, scale)
                    .map_err(|e| Error::InvalidInput(format!("gamma initial data: {e}")))?;
                let mut out = Vec::with_capacity(n);
                let mut tries = 0u64;
                while out.len() < n {
                    let v: f64 = g.sample(rng);
                    if v <= x_max {
                        out.push(v);
                    }
                    tries += 1;
                    if tries > 1000 * n as u64 + 1000 {
                        return invalid("gamma initial data has almost no mass below x_max");
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Collocation nodes with their weights and resolved parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationPlan {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub params: Vec<GrowthParams>,
}

impl CollocationPlan {
    /// Gauss nodes with `order + 1` points per random dimension.
    pub fn new(model: &ParamModel, order: usize) -> Result<Self> {
        model.validate()?;
        let basis = ChaosBasis::new(&model.random.dists(), order)?;
        let rule = basis.gauss_rule(order + 1)?;
        let nodes: Vec<Vec<f64>> = rule.nodes().map(|z| z.to_vec()).collect();
        let params = nodes.iter().map(|z| model.resolve(z)).collect::<Result<Vec<_>>>()?;
        Ok(CollocationPlan { nodes, weights: rule.weights.clone(), params })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Largest `mu / (1 + lambda)` over the nodes.
    pub fn max_loss(&self) -> f64 {
        self.params.iter().map(|p| p.mu / (1.0 + p.lambda)).fold(0.0, f64::max)
    }
}

fn default_bins() -> usize {
    100
}

fn default_x_max() -> f64 {
    2.0
}

/// Particle run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmcConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub eps: f64,
    pub t_final: f64,
    pub output_times: Vec<f64>,
    pub seed: u64,
    pub initial: InitialCondition,
    /// Truncation of the initial law and histogram range.
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_bins")]
    pub hist_bins: usize,
    #[serde(default)]
    pub band: Band,
}

impl DsmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return invalid("need at least one particle");
        }
        if !(self.dt > 0.0 && self.eps > 0.0 && self.dt <= self.eps) {
            return invalid(format!("need 0 < dt <= eps, got dt = {}, eps = {}", self.dt, self.eps));
        }
        if !(self.t_final >= 0.0) || !(self.x_max > 0.0) || self.hist_bins == 0 {
            return invalid("invalid final time, x_max or bin count");
        }
        if self.output_times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_final + 0.5 * self.dt)) {
            return invalid("output times must lie in [0, t_final]");
        }
        if self.output_times.windows(2).any(|w| w[1] < w[0]) {
            return invalid("output times must be nondecreasing");
        }
        Ok(())
    }
}

/// Results of a collocation run.
#[derive(Debug, Clone)]
pub struct DsmcRun {
    pub moments: MomentSeries,
    /// `node_var[j][q]`, the size variance at node `q` and time `t_j`.
    pub node_var: Vec<Vec<f64>>,
    pub histograms: Vec<Histogram>,
    pub activation_time: Option<f64>,
    pub clamp_events: u64,
    pub min_size: f64,
}

/// Runs every collocation node to `cfg.t_final`.
pub fn run(plan: &CollocationPlan, cfg: &DsmcConfig, control: Option<&ControlSpec>) -> Result<DsmcRun> {
    cfg.validate()?;
    if let Some(c) = control {
        c.validate()?;
    }
    let _ = EtaSampler::new(cfg.eps, plan.params.iter().map(|p| p.sigma2).fold(0.0, f64::max), plan.max_loss())?;
    let mut ens = plan
        .params
        .iter()
        .enumerate()
        .map(|(q, p)| {
            let mut e = ParticleEnsemble::new(vec![], *p, cfg.eps, cfg.seed, q as u64)?;
            e.sample_initial(&cfg.initial, cfg.n_particles, cfg.x_max)?;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;

    let prob = cfg.dt / cfg.eps;
    let out_steps: Vec<usize> = cfg.output_times.iter().map(|t| (t / cfg.dt).round() as usize).collect();
    let last = out_steps.last().copied().unwrap_or(0);
    let mut times = vec![];
    let mut node_m = vec![];
    let mut node_e = vec![];
    let mut node_var = vec![];
    let mut next = 0;
    let mut activation_time = None;
    let mut min_size = f64::INFINITY;

    let mut record = |s: usize, ens: &[ParticleEnsemble]| {
        while next < out_steps.len() && out_steps[next] == s {
            let stats: Vec<(f64, f64, f64)> = ens.iter().map(|e| e.moments()).collect();
            times.push(s as f64 * cfg.dt);
            node_m.push(stats.iter().map(|s| s.0).collect::<Vec<_>>());
            node_e.push(stats.iter().map(|s| s.1).collect::<Vec<_>>());
            node_var.push(stats.iter().map(|s| s.2).collect::<Vec<_>>());
            next += 1;
        }
    };
    record(0, &ens);
    for s in 0..last {
        let t = s as f64 * cfg.dt;
        if activation_time.is_none() {
            if let Some(c) = control {
                let on = match c.activation {
                    Activation::AtTime { t_act } => t >= t_act - 0.5 * cfg.dt,
                    Activation::MeanThreshold { threshold } => {
                        let em: f64 = ens.iter().zip(&plan.weights).map(|(e, w)| w * e.mean()).sum();
                        em > threshold
                    }
                };
                if on {
                    activation_time = Some(t);
                }
            }
        }
        let active = activation_time.and(control);
        let step_min = ens
            .par_iter_mut()
            .map(|e| {
                e.growth_select(prob)?;
                if let Some(c) = active {
                    e.control_select(c, prob);
                }
                Ok(e.min_size())
            })
            .collect::<Result<Vec<f64>>>()?;
        min_size = step_min.into_iter().fold(min_size, f64::min);
        record(s + 1, &ens);
    }
    let histograms = ens.iter().map(|e| e.histogram(cfg.x_max, cfg.hist_bins)).collect();
    let clamp_events = ens.iter().map(|e| e.clamp_events).sum();
    if clamp_events > 0 {
        log::info!("p = 1 projection was active in {clamp_events} control transitions");
    }
    Ok(DsmcRun {
        moments: MomentSeries::from_nodes(times, node_m, node_e, plan.weights.clone(), cfg.band),
        node_var,
        histograms,
        activation_time,
        clamp_events,
        min_size,
    })
}
