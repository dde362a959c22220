//! Synthetic patient cohorts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PatientSeries, MM3_PER_UNIT};
use crate::error::{invalid, Result};
use crate::growth::{integrate_micro, GrowthParams};
use crate::uq::ParamModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub n_patients: usize,
    /// Scan times in days, relative to the first scan.
    pub obs_times: Vec<f64>,
    /// Standard deviation of the log of the multiplicative noise.
    pub noise: f64,
    pub seed: u64,
    /// Range of first-scan volumes in mm^3, sampled log-uniformly.
    pub x0_mm3: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPatient {
    pub series: PatientSeries,
    pub z: Vec<f64>,
    pub truth: GrowthParams,
}

impl SynthOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return invalid("need at least one patient");
        }
        if self.obs_times.len() < 2 || self.obs_times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("need at least two strictly increasing scan times");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return invalid("noise must be finite and nonnegative");
        }
        let [lo, hi] = self.x0_mm3;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return invalid("x0 range must satisfy 0 < lo <= hi");
        }
        Ok(())
    }
}

/// Patient `i` uses stream `i` of the seeded generator, so the cohort does
/// not depend on the thread count.
pub fn synth_cohort(model: &ParamModel, opts: &SynthOptions) -> Result<Vec<SynthPatient>> {
    model.validate()?;
    opts.validate()?;
    (0..opts.n_patients)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let z: Vec<f64> = model.random.dims.iter().map(|d| d.dist.sample(&mut rng)).collect();
            let truth = model.resolve(&z)?;
            let [lo, hi] = opts.x0_mm3;
            let x0 = (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp() / MM3_PER_UNIT;
            let traj = integrate_micro(x0, &truth, &opts.obs_times)?;
            let observations = opts
                .obs_times
                .iter()
                .zip(&traj)
                .enumerate()
                .map(|(h, (&t, &x))| {
                    // the first scan is the initial condition and stays exact
                    let e: f64 = StandardNormal.sample(&mut rng);
                    let factor = if h == 0 { 1.0 } else { (opts.noise * e).exp() };
                    (t, x * MM3_PER_UNIT * factor)
                })
                .collect();
            Ok(SynthPatient { series: PatientSeries { id: format!("P{:04}", i + 1), observations }, z, truth })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ParamDistribution;
    use crate::uq::ParamField;
    use std::collections::BTreeMap;

    fn model() -> ParamModel {
        ParamModel {
            constants: BTreeMap::from([(ParamField::Mu, 0.02), (ParamField::Sigma2, 0.0)]),
            random: Default::default(),
        }
        .with_random("x_l", ParamField::XL, ParamDistribution::Uniform { a: 0.4, b: 1.1 })
    }

    fn opts(noise: f64, seed: u64) -> SynthOptions {
        SynthOptions { n_patients: 5, obs_times: vec![0.0, 30.0, 90.0], noise, seed, x0_mm3: [1e3, 1e4] }
    }

    #[test]
    fn noiseless_on_trajectory() {
        let c = synth_cohort(&model(), &opts(0.0, 3)).unwrap();
        for p in &c {
            let x0 = p.series.observations[0].1 / MM3_PER_UNIT;
            let traj = integrate_micro(x0, &p.truth, &[0.0, 30.0, 90.0]).unwrap();
            for (o, x) in p.series.observations.iter().zip(&traj) {
                assert!((o.1 / (x * MM3_PER_UNIT) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(synth_cohort(&model(), &opts(0.05, 9)).unwrap(), synth_cohort(&model(), &opts(0.05, 9)).unwrap());
        assert_ne!(synth_cohort(&model(), &opts(0.05, 9)).unwrap(), synth_cohort(&model(), &opts(0.05, 10)).unwrap());
    }
}
