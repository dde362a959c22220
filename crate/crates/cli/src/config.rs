//! Run configuration, read from a JSON file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tumorkin::analysis::Band;
use tumorkin::calibration::{CohortOptions, FitOptions, ParamBox, SynthOptions};
use tumorkin::control::ControlSpec;
use tumorkin::dsmc::InitialCondition;
use tumorkin::growth::ModelKind;
use tumorkin::sg::GridSpec;
use tumorkin::uq::ParamModel;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Sg,
    Dsmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsmcSettings {
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to `2 dt`.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_bins")]
    pub hist_bins: usize,
}

fn default_particles() -> usize {
    100_000
}
fn default_dt() -> f64 {
    0.05
}
fn default_bins() -> usize {
    100
}
fn default_order() -> usize {
    3
}
fn default_outputs() -> usize {
    11
}

impl Default for DsmcSettings {
    fn default() -> Self {
        DsmcSettings { n_particles: default_particles(), dt: default_dt(), eps: None, hist_bins: default_bins() }
    }
}

impl DsmcSettings {
    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(2.0 * self.dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSettings {
    pub orders: Vec<usize>,
    pub ref_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSettings {
    /// Patient CSV; relative paths resolve against the config file.
    #[serde(default)]
    pub input: Option<PathBuf>,
    pub model: ModelKind,
    #[serde(default)]
    pub beta_reg: Option<f64>,
    #[serde(default)]
    pub n_starts: Option<usize>,
    #[serde(default)]
    pub max_evals: Option<usize>,
    #[serde(default)]
    pub bounds: Option<ParamBox>,
    #[serde(default)]
    pub supports: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub gompertz_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    pub n_patients: usize,
    pub obs_times: Vec<f64>,
    #[serde(default)]
    pub noise: f64,
    pub x0_mm3: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// Expected growth law; checked against the resolved parameters.
    #[serde(default)]
    pub kind: Option<ModelKind>,
    pub model: ParamModel,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub control: Option<ControlSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_initial")]
    pub initial: InitialCondition,
    /// Snapshot times; by default `n_outputs` evenly spaced times on `[0, T]`.
    #[serde(default)]
    pub output_times: Option<Vec<f64>>,
    #[serde(default = "default_outputs")]
    pub n_outputs: usize,
    #[serde(default)]
    pub dsmc: DsmcSettings,
    #[serde(default)]
    pub band: Band,
    #[serde(default)]
    pub sweep: Option<SweepSettings>,
    #[serde(default)]
    pub converge: Option<ConvergeSettings>,
    #[serde(default)]
    pub calibrate: Option<CalibrateSettings>,
    #[serde(default)]
    pub synth: Option<SynthSettings>,
}

/// Gamma law with shape 2.2 and scale 0.37.
pub fn default_initial() -> InitialCondition {
    InitialCondition::Gamma { shape: 2.2, scale: 0.37 }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative input paths are resolved
    /// against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(c) = cfg.calibrate.as_mut() {
            if let Some(input) = c.input.as_mut() {
                if input.is_relative() {
                    *input = path.parent().unwrap_or(Path::new(".")).join(&*input);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model.validate()?;
        self.grid.validate()?;
        if let Some(c) = &self.control {
            c.validate()?;
        }
        if let Some(kind) = self.kind {
            let dists = self.model.random.dists();
            let n = dists.len();
            for mask in 0..(1usize << n) {
                let z: Vec<f64> = dists
                    .iter()
                    .enumerate()
                    .map(|(j, d)| if mask >> j & 1 == 1 { d.support().1 } else { d.support().0 })
                    .collect();
                let got = self.model.resolve(&z)?.kind();
                if got != kind {
                    return Err(config_err(format!("parameters resolve to {got:?}, config says {kind:?}")));
                }
            }
        }
        if let Some(times) = &self.output_times {
            if times.iter().any(|t| !(*t >= 0.0 && *t <= self.grid.t_final)) || times.windows(2).any(|w| w[1] < w[0]) {
                return Err(config_err("output times must be sorted and lie in [0, T]"));
            }
        } else if self.n_outputs == 0 {
            return Err(config_err("n_outputs must be positive"));
        }
        if let Some(s) = &self.sweep {
            if s.kappas.is_empty() {
                return Err(config_err("sweep.kappas is empty"));
            }
            if s.kappas.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
                return Err(config_err("sweep.kappas must be positive"));
            }
        }
        if let Some(c) = &self.converge {
            if c.orders.is_empty() || c.orders.iter().any(|m| *m > c.ref_order) {
                return Err(config_err("converge.orders must be nonempty and not exceed ref_order"));
            }
        }
        if self.solver == Solver::Dsmc {
            let d = &self.dsmc;
            if d.n_particles == 0 || !(d.dt > 0.0) || !(d.eps() >= d.dt) {
                return Err(config_err("dsmc needs particles, dt > 0 and eps >= dt"));
            }
        }
        if let Some(c) = &self.calibrate {
            self.fit_options(c)?;
        }
        if let Some(s) = &self.synth {
            self.synth_options(s, self.seed)?.validate()?;
        }
        Ok(())
    }

    pub fn output_times(&self) -> Vec<f64> {
        match &self.output_times {
            Some(t) => t.clone(),
            None if self.n_outputs == 1 || self.grid.t_final == 0.0 => vec![self.grid.t_final],
            None => {
                let n = self.n_outputs;
                (0..n).map(|j| self.grid.t_final * j as f64 / (n - 1) as f64).collect()
            }
        }
    }

    pub fn fit_options(&self, c: &CalibrateSettings) -> CliResult<CohortOptions> {
        let mut fit = FitOptions::new(c.model)?;
        fit.seed = self.seed;
        if let Some(b) = c.beta_reg {
            fit.beta_reg = b;
        }
        if let Some(n) = c.n_starts {
            fit.n_starts = n;
        }
        if let Some(n) = c.max_evals {
            fit.max_evals = n;
        }
        if let Some(b) = &c.bounds {
            fit.bounds = b.clone();
        }
        let dim = if c.model == ModelKind::Gompertz { 2 } else { 3 };
        fit.bounds.validate(dim)?;
        Ok(CohortOptions { model: c.model, fit, supports: c.supports.clone(), gompertz_check: c.gompertz_check })
    }

    pub fn synth_options(&self, s: &SynthSettings, seed: u64) -> CliResult<SynthOptions> {
        Ok(SynthOptions {
            n_patients: s.n_patients,
            obs_times: s.obs_times.clone(),
            noise: s.noise,
            seed,
            x0_mm3: s.x0_mm3,
        })
    }
}
