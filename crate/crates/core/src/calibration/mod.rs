//! Parameter estimation from tumour-volume series.
//!
//! Volumes are read in mm^3 and fitted in scaled units, `1.0 = 1e5 mm^3`.

mod beta;
mod fit;
mod ks;
pub mod optimize;
mod synth;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use beta::{beta_stats, fit_beta_mle, moment_shapes, trigamma, BetaFit, BetaStats};
pub use fit::{
    align_to_onset, fit_series, fit_series_with, shifted_trajectory, theta_params, FitOptions, FitResult, ParamBox,
};
pub use ks::{kolmogorov_q, ks_test, KsResult};
pub use synth::{synth_cohort, SynthOptions, SynthPatient};

use crate::basis::ParamDistribution;
use crate::error::{invalid, Result};
use crate::growth::ModelKind;

pub const MM3_PER_UNIT: f64 = 1e5;
/// 1 mm^3 in scaled units.
pub const ONSET_VOLUME: f64 = 1.0 / MM3_PER_UNIT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSeries {
    pub id: String,
    /// `(t in days, volume in mm^3)`.
    pub observations: Vec<(f64, f64)>,
}

impl PatientSeries {
    pub fn validate(&self) -> Result<()> {
        if self.observations.len() < 2 {
            return invalid(format!("patient {}: need at least two observations", self.id));
        }
        if self.observations.iter().any(|o| !o.0.is_finite() || !(o.1 > 0.0 && o.1.is_finite())) {
            return invalid(format!("patient {}: volumes must be positive and finite", self.id));
        }
        if self.observations.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return invalid(format!("patient {}: times must be strictly increasing", self.id));
        }
        Ok(())
    }
}

/// One row of the cohort report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDistributionFit {
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub c1: f64,
    pub c2: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub n: usize,
}

impl CohortDistributionFit {
    pub fn distribution(&self) -> ParamDistribution {
        ParamDistribution::Beta { c1: self.c1, c2: self.c2, lo: self.lo, hi: self.hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortOptions {
    pub model: ModelKind,
    pub fit: FitOptions,
    /// Support per reported parameter. Missing entries use the sample range
    /// widened by 1% on each side.
    #[serde(default)]
    pub supports: BTreeMap<String, [f64; 2]>,
    /// Also fit Gompertz to each series and compare the carrying capacities.
    #[serde(default)]
    pub gompertz_check: bool,
}

impl CohortOptions {
    pub fn new(model: ModelKind) -> Result<Self> {
        Ok(CohortOptions { model, fit: FitOptions::new(model)?, supports: BTreeMap::new(), gompertz_check: false })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientFit {
    pub id: String,
    pub fit: FitResult,
    /// Gompertz carrying capacity for the compatibility check.
    pub gompertz_x_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub model: ModelKind,
    pub patients: Vec<PatientFit>,
    /// `(id, message)` for series that could not be fitted.
    pub failures: Vec<(String, String)>,
    pub rows: Vec<CohortDistributionFit>,
    /// Largest relative gap between von Bertalanffy and Gompertz capacities.
    pub max_x_l_gap: Option<f64>,
}

/// Names and extractors of the reported parameters.
pub fn report_parameters(model: ModelKind) -> Result<Vec<&'static str>> {
    match model {
        ModelKind::Gompertz => Ok(vec!["alpha", "x_l"]),
        ModelKind::VonBertalanffy => Ok(vec!["x_l", "a", "q"]),
        ModelKind::Logistic => invalid("fitting is implemented for Gompertz and von Bertalanffy"),
    }
}

fn parameter_value(fit: &FitResult, name: &str) -> Result<f64> {
    match (fit.model, name) {
        (ModelKind::Gompertz, "alpha") => Ok(fit.theta[0]),
        (ModelKind::Gompertz, "x_l") => Ok(fit.theta[1]),
        (ModelKind::VonBertalanffy, "a") => Ok(fit.theta[0]),
        (ModelKind::VonBertalanffy, "q") => Ok(fit.theta[2]),
        (_, "x_l") => fit.x_l(),
        _ => invalid(format!("no parameter {name} for {:?}", fit.model)),
    }
}

/// Fits every series, then a Beta law and a KS test per parameter.
pub fn calibrate_cohort(series: &[PatientSeries], opts: &CohortOptions) -> Result<CohortReport> {
    let names = report_parameters(opts.model)?;
    if series.is_empty() {
        return invalid("empty cohort");
    }
    let gompertz_opts = if opts.gompertz_check && opts.model != ModelKind::Gompertz {
        Some(FitOptions { bounds: ParamBox::default_for(ModelKind::Gompertz)?, ..opts.fit.clone() })
    } else {
        None
    };
    let outcomes: Vec<std::result::Result<PatientFit, (String, String)>> = series
        .par_iter()
        .map(|s| {
            let fail = |e: crate::Error| (s.id.clone(), e.to_string());
            let fit = fit_series_with(s, opts.model, &opts.fit).map_err(fail)?;
            let gompertz_x_l = match &gompertz_opts {
                Some(g) => Some(fit_series_with(s, ModelKind::Gompertz, g).map_err(fail)?.theta[1]),
                None => None,
            };
            Ok(PatientFit { id: s.id.clone(), fit, gompertz_x_l })
        })
        .collect();
    let mut patients = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(p) => patients.push(p),
            Err(f) => {
                log::warn!("patient {} not fitted: {}", f.0, f.1);
                failures.push(f);
            }
        }
    }
    let usable: Vec<&PatientFit> = patients.iter().filter(|p| !p.fit.degenerate).collect();
    let mut rows = Vec::new();
    for name in names {
        let values = usable.iter().map(|p| parameter_value(&p.fit, name)).collect::<Result<Vec<f64>>>()?;
        if values.len() < 3 {
            return invalid(format!("only {} usable fits for {name}", values.len()));
        }
        let [lo, hi] = match opts.supports.get(name) {
            Some(s) => *s,
            None => {
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let pad = 0.01 * (max - min).max(1e-12 * max.abs().max(1.0));
                // every reported parameter is positive
                [(min - pad).max(0.0), max + pad]
            }
        };
        let clipped: Vec<f64> = values.iter().map(|v| v.clamp(lo, hi)).collect();
        let beta = fit_beta_mle(&clipped, lo, hi)?;
        let dist = ParamDistribution::Beta { c1: beta.c1, c2: beta.c2, lo, hi };
        let ks = ks_test(&clipped, |v| dist.cdf(v))?;
        rows.push(CohortDistributionFit {
            parameter: name.to_string(),
            lo,
            hi,
            c1: beta.c1,
            c2: beta.c2,
            ks_statistic: ks.statistic,
            ks_pvalue: ks.p_value,
            n: clipped.len(),
        });
    }
    let max_x_l_gap = if gompertz_opts.is_some() {
        let mut gap = 0.0f64;
        for p in &usable {
            if let Some(g) = p.gompertz_x_l {
                gap = gap.max((p.fit.x_l()? - g).abs() / g);
            }
        }
        log::info!("largest von Bertalanffy / Gompertz capacity gap {gap:.3}");
        Some(gap)
    } else {
        None
    };
    Ok(CohortReport { model: opts.model, patients, failures, rows, max_x_l_gap })
}
