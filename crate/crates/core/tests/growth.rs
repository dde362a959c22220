use approx::assert_relative_eq;
use proptest::prelude::*;

use tumorkin::control::{ControlSpec, Selective};
use tumorkin::growth::{
    integrate_micro, normalize_equilibrium, params_from_vb, phi_eps, phi_limit, vb_coefficients, EquilibriumSpec,
    GrowthParams,
};

proptest! {
    #[test]
    fn transition_stays_in_bounds(
        y in 1e-3f64..1e3,
        eps in 1e-4f64..1.0,
        mu in 1e-3f64..1.0,
        lambda in 0.0f64..0.9,
        delta in -1.0f64..1.0,
    ) {
        let p = GrowthParams::new(mu, lambda, delta, 0.5, 0.01).unwrap();
        let (lo, hi) = p.phi_bounds();
        let v = phi_eps(y, &p, eps).unwrap();
        prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15, "{v} outside [{lo}, {hi}]");
        // growth below capacity, decay above
        let sign_ok = if y < 1.0 { v >= 0.0 } else { v <= 0.0 };
        prop_assert!(sign_ok, "sign of {v} at y = {y}");
    }

    #[test]
    fn small_scale_limit(y in 0.05f64..20.0, mu in 0.01f64..1.0, lambda in 0.0f64..0.9, delta in -0.9f64..0.9) {
        let p = GrowthParams::new(mu, lambda, delta, 0.5, 0.0).unwrap();
        let eps = 1e-7;
        let scaled = phi_eps(y, &p, eps).unwrap() / eps;
        let lim = phi_limit(y, &p).unwrap();
        prop_assert!((scaled - lim).abs() <= 1e-5 * (1.0 + lim.abs()), "{scaled} vs {lim}");
    }

    #[test]
    fn vb_coefficients_roundtrip(a in 0.5f64..0.95, pp in 0.01f64..0.5, q in 0.005f64..0.2) {
        let params = params_from_vb(a, pp, q, 0.0, 0.0).unwrap();
        let c = vb_coefficients(&params).unwrap();
        prop_assert!((c.a - a).abs() < 1e-12);
        prop_assert!((c.p / pp - 1.0).abs() < 1e-10);
        prop_assert!((c.q / q - 1.0).abs() < 1e-10);
    }
}

#[test]
fn gompertz_matches_log_linear_solution() {
    // ln(x/x_L) decays like exp(-mu t / 2)
    let p = GrowthParams::new(0.04, 0.0, 0.0, 0.8, 0.0).unwrap();
    let x0: f64 = 0.01;
    // daily outputs keep the RK4 step at one day
    let times: Vec<f64> = (0..=200).map(|j| j as f64).collect();
    let xs = integrate_micro(x0, &p, &times).unwrap();
    for (t, x) in times.iter().zip(&xs) {
        let exact = 0.8 * ((x0 / 0.8).ln() * (-0.02 * t).exp()).exp();
        assert_relative_eq!(*x, exact, max_relative = 1e-6);
    }
}

#[test]
fn von_bertalanffy_matches_closed_form() {
    let (a, pp, q) = (0.75, 0.03, 0.02);
    let p = params_from_vb(a, pp, q, 0.0, 0.0).unwrap();
    let x0: f64 = 0.02;
    let times: Vec<f64> = (0..=600).map(|j| j as f64).collect();
    let xs = integrate_micro(x0, &p, &times).unwrap();
    let b = 1.0 - a;
    for (t, x) in times.iter().zip(&xs) {
        let u = pp / q + (x0.powf(b) - pp / q) * (-b * q * t).exp();
        assert_relative_eq!(*x, u.powf(1.0 / b), max_relative = 1e-6);
    }
}

/// `d/dx ln(x^2 f)` must equal `2 drift(x) / (sigma^2 x^2)` for a zero-flux state.
fn check_zero_flux(spec: &EquilibriumSpec, drift: impl Fn(f64) -> f64) {
    let s2 = spec.params.sigma2;
    for &x in &[0.05, 0.1, 0.3, 0.5, 0.9, 1.4] {
        let h = 1e-5 * x;
        let g = |x: f64| spec.log_density(x).unwrap() + 2.0 * x.ln();
        let lhs = (g(x + h) - g(x - h)) / (2.0 * h);
        let rhs = 2.0 * drift(x) / (s2 * x * x);
        assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()), "x = {x}: {lhs} vs {rhs}");
    }
}

#[test]
fn free_equilibria_have_zero_flux() {
    for delta in [0.0, -0.1, -0.5, 0.3] {
        let p = GrowthParams::new(0.2, 0.0, delta, 0.5, 0.05).unwrap();
        check_zero_flux(&EquilibriumSpec::free(p), |x| x * phi_limit(x / 0.5, &p).unwrap());
    }
}

#[test]
fn controlled_equilibria_have_zero_flux() {
    let p = GrowthParams::new(0.2, 0.0, -0.2, 0.5, 0.05).unwrap();
    for sel in [Selective::Unit, Selective::SqrtX] {
        let c = ControlSpec::new(2, 0.8, 0.2, sel).unwrap();
        let spec = EquilibriumSpec::controlled(p, c);
        check_zero_flux(&spec, |x| x * phi_limit(x / 0.5, &p).unwrap() - sel.squared(x) * (x - 0.2) / 0.8);
    }
}

#[test]
fn gompertz_equilibrium_is_lognormal() {
    let p = GrowthParams::new(0.1, 0.0, 0.0, 0.5, 0.02).unwrap();
    let eq = normalize_equilibrium(&EquilibriumSpec::free(p), 6.0, 6001).unwrap();
    let g = p.sigma2 / p.mu;
    let m = 0.5f64.ln() - g;
    for x in [0.1f64, 0.3, 0.45, 0.7, 1.2] {
        let z = x.ln() - m;
        let exact = (-z * z / (2.0 * g)).exp() / (x * (2.0 * std::f64::consts::PI * g).sqrt());
        assert_relative_eq!(eq.pdf(x), exact, max_relative = 1e-6);
    }
    assert!(eq.truncation_mass < 1e-8);
}

#[test]
fn sqrt_control_needs_large_kappa() {
    let p = GrowthParams::new(0.1, 0.0, -0.1, 0.5, 0.3).unwrap();
    let th = 2.0 * 0.18 * (0.3 / 0.1) * 0.1 / 0.3;
    let low = EquilibriumSpec::controlled(p, ControlSpec::new(2, 0.5 * th, 0.18, Selective::SqrtX).unwrap());
    assert_relative_eq!(low.sqrt_kappa_threshold().unwrap(), th, max_relative = 1e-12);
    assert!(low.validate().is_err());
    let high = EquilibriumSpec::controlled(p, ControlSpec::new(2, 2.0 * th, 0.18, Selective::SqrtX).unwrap());
    assert!(high.validate().is_ok());
}

#[test]
fn invalid_inputs_rejected() {
    let p = GrowthParams::new(0.1, 0.0, 0.0, 0.5, 0.0).unwrap();
    assert!(phi_eps(0.0, &p, 0.1).is_err());
    assert!(phi_eps(1.0, &p, 0.0).is_err());
    assert!(integrate_micro(-1.0, &p, &[0.0, 1.0]).is_err());
    assert!(integrate_micro(0.1, &p, &[1.0, 0.5]).is_err());
    assert!(GrowthParams::new(-0.1, 0.0, 0.0, 0.5, 0.0).is_err());
    assert!(vb_coefficients(&p).is_err());
}
