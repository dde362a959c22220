use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tumorkin::analysis::Band;
use tumorkin::basis::ParamDistribution;
use tumorkin::control::{ControlSpec, Selective};
use tumorkin::dsmc::{self, sample_eta, CollocationPlan, DsmcConfig, EtaSampler, InitialCondition, ParticleEnsemble};
use tumorkin::growth::{phi_eps, GrowthParams};
use tumorkin::uq::{ParamField, ParamModel};

proptest! {
    #[test]
    fn noise_is_bounded(eps in 1e-3f64..0.5, sigma2 in 0.0f64..0.5, seed in 0u64..1000) {
        let s = EtaSampler::new(eps, sigma2, 0.0).unwrap();
        let hw = (3.0 * eps * sigma2).sqrt();
        prop_assert!((s.half_width() - hw).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let e = s.sample(&mut rng);
            prop_assert!(e.abs() <= hw);
        }
    }

    #[test]
    fn sizes_stay_nonnegative(mu in 0.01f64..0.5, sigma2 in 0.0f64..0.2, seed in 0u64..100) {
        let p = GrowthParams::new(mu, 0.0, -0.2, 0.5, sigma2).unwrap();
        let Ok(mut e) = ParticleEnsemble::new(vec![], p, 0.1, seed, 0) else {
            // the noise bound is enforced up front
            prop_assert!((0.3f64 * sigma2).sqrt() > 1.0 - mu);
            return Ok(());
        };
        e.sample_initial(&InitialCondition::Gamma { shape: 2.2, scale: 0.37 }, 500, 2.0).unwrap();
        for _ in 0..50 {
            e.growth_step().unwrap();
        }
        prop_assert!(e.min_size() >= 0.0);
    }
}

#[test]
fn noise_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (eps, s2) = (0.1, 0.2);
    let n = 200_000;
    let v = (0..n).map(|_| sample_eta(eps, s2, &mut rng).powi(2)).sum::<f64>() / n as f64;
    assert!((v / (eps * s2) - 1.0).abs() < 0.01, "variance ratio {}", v / (eps * s2));
}

#[test]
fn noise_free_steps_follow_the_map() {
    let p = GrowthParams::new(0.3, 0.4, -0.25, 0.5, 0.0).unwrap();
    let eps = 0.1;
    let mut e = ParticleEnsemble::new(vec![0.05, 0.3, 0.9], p, eps, 0, 0).unwrap();
    let mut want = e.sizes.clone();
    for _ in 0..40 {
        e.growth_step().unwrap();
        for x in want.iter_mut() {
            *x *= 1.0 + phi_eps(*x / 0.5, &p, eps).unwrap();
        }
    }
    for (a, b) in e.sizes.iter().zip(&want) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn one_step_mean_is_unbiased() {
    let p = GrowthParams::new(0.2, 0.0, 0.0, 0.5, 0.1).unwrap();
    let eps = 0.2;
    let n = 400_000;
    let mut e = ParticleEnsemble::new(vec![0.2; n], p, eps, 9, 0).unwrap();
    e.growth_step().unwrap();
    let want = 0.2 * (1.0 + phi_eps(0.4, &p, eps).unwrap());
    let sd = 0.2 * (eps * 0.1f64).sqrt() / (n as f64).sqrt();
    assert!((e.mean() - want).abs() < 4.0 * sd, "{} vs {want}", e.mean());
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let p = GrowthParams::new(0.1, 0.0, 0.0, 0.5, 0.05).unwrap();
    let ic = InitialCondition::Gamma { shape: 2.2, scale: 0.37 };
    let draw = |seed, stream| {
        let mut e = ParticleEnsemble::new(vec![], p, 0.1, seed, stream).unwrap();
        e.sample_initial(&ic, 100, 2.0).unwrap();
        e.growth_select(0.5).unwrap();
        e.sizes
    };
    assert_eq!(draw(4, 0), draw(4, 0));
    assert_ne!(draw(4, 0), draw(4, 1));
    assert_ne!(draw(4, 0), draw(5, 0));
}

fn plan() -> CollocationPlan {
    let model = ParamModel {
        constants: [
            (ParamField::Lambda, 0.0),
            (ParamField::Q, 0.01),
            (ParamField::XL, 0.5),
            (ParamField::Sigma2, 0.01),
        ]
        .into(),
        random: Default::default(),
    }
    .with_random("a", ParamField::A, ParamDistribution::Beta { c1: 0.656, c2: 0.193, lo: 0.69, hi: 0.8 });
    CollocationPlan::new(&model, 2).unwrap()
}

fn config(t_final: f64) -> DsmcConfig {
    DsmcConfig {
        n_particles: 5000,
        dt: 0.05,
        eps: 0.1,
        t_final,
        output_times: vec![0.0, 0.5 * t_final, t_final],
        seed: 3,
        initial: InitialCondition::Gamma { shape: 2.2, scale: 0.37 },
        x_max: 2.0,
        hist_bins: 50,
        band: Band::default(),
    }
}

#[test]
fn collocation_statistics_are_weighted_node_means() {
    let plan = plan();
    assert_eq!(plan.len(), 3);
    assert!((plan.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    let run = dsmc::run(&plan, &config(4.0), None).unwrap();
    assert_eq!(run.moments.times, vec![0.0, 2.0, 4.0]);
    for j in 0..3 {
        let em: f64 = run.moments.node_m[j].iter().zip(&plan.weights).map(|(m, w)| m * w).sum();
        assert!((em - run.moments.expected_m[j]).abs() < 1e-14);
        assert!(run.node_var[j].iter().all(|v| *v >= 0.0));
    }
    for h in &run.histograms {
        let mass: f64 = h.density.iter().sum::<f64>() * (h.edges[1] - h.edges[0]);
        assert!(mass <= 1.0 + 1e-12 && mass > 0.9);
    }
}

#[test]
fn control_moves_mean_to_target() {
    let plan = plan();
    let spec = ControlSpec::new(2, 0.1, 0.18, Selective::Unit).unwrap();
    let free = dsmc::run(&plan, &config(10.0), None).unwrap();
    let ctl = dsmc::run(&plan, &config(10.0), Some(&spec)).unwrap();
    let gap = |r: &dsmc::DsmcRun| (r.moments.expected_m[2] - 0.18).abs();
    assert!(gap(&ctl) < 0.01, "controlled gap {}", gap(&ctl));
    assert!(gap(&ctl) < gap(&free));
    assert_eq!(ctl.activation_time, Some(0.0));
}

#[test]
fn invalid_configs_rejected() {
    let plan = plan();
    let mut cfg = config(1.0);
    cfg.dt = 0.2;
    assert!(dsmc::run(&plan, &cfg, None).is_err());
    let mut cfg = config(1.0);
    cfg.output_times = vec![2.0];
    assert!(dsmc::run(&plan, &cfg, None).is_err());
    let mut cfg = config(1.0);
    cfg.n_particles = 0;
    assert!(dsmc::run(&plan, &cfg, None).is_err());
}
