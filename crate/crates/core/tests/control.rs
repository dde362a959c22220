use proptest::prelude::*;

use tumorkin::control::{apply, controlled_drift, cost, optimal_u_p1, optimal_u_p2, ControlSpec, Selective};

fn selective() -> impl Strategy<Value = Selective> {
    prop_oneof![Just(Selective::Unit), Just(Selective::SqrtX)]
}

/// Brute-force minimum of `u -> cost(x + eps S u, u)` over a grid on `[lo, hi]`.
fn grid_min(x: f64, spec: &ControlSpec, eps: f64, lo: f64, hi: f64) -> f64 {
    let s = spec.selective.eval(x);
    (0..=20_000)
        .map(|j| lo + (hi - lo) * j as f64 / 20_000.0)
        .map(|u| cost(x + eps * s * u, u, spec, eps))
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #[test]
    fn quadratic_control_is_optimal(
        x in 0.0f64..2.0,
        kappa in 0.01f64..2.0,
        eps in 0.01f64..0.5,
        x_d in 0.05f64..0.5,
        sel in selective(),
    ) {
        let spec = ControlSpec::new(2, kappa, x_d, sel).unwrap();
        let u = optimal_u_p2(x, &spec, eps);
        let s = sel.eval(x);
        let out = apply(x, &spec, eps);
        prop_assert!((out.x_after - (x + eps * s * u)).abs() < 1e-12);
        let c = cost(out.x_after, u, &spec, eps);
        // first-order condition and a local check
        for du in [-1e-3, 1e-3] {
            prop_assert!(c <= cost(x + eps * s * (u + du), u + du, &spec, eps) + 1e-15);
        }
        prop_assert!((out.x_after - x_d).abs() <= (x - x_d).abs() + 1e-15);
    }

    #[test]
    fn l1_control_is_optimal(
        x in 0.0f64..2.0,
        kappa in 0.01f64..2.0,
        eps in 0.05f64..0.5,
        x_d in 0.05f64..0.5,
        sel in selective(),
    ) {
        let spec = ControlSpec::new(1, kappa, x_d, sel).unwrap();
        let [lo, hi] = spec.u_bounds;
        let u = optimal_u_p1(x, &spec, eps);
        prop_assert!(u >= lo && u <= hi);
        let s = sel.eval(x);
        let c = cost(x + eps * s * u, u, &spec, eps);
        let best = grid_min(x, &spec, eps, lo.max(-50.0), hi.min(50.0));
        prop_assert!(c <= best + 1e-6 * (1.0 + best), "{c} > {best}");
    }
}

#[test]
fn quadratic_control_value() {
    // minimiser of (x - eps u - x_d)^2 + eps kappa u^2 with S = 1
    let spec = ControlSpec::new(2, 0.5, 0.2, Selective::Unit).unwrap();
    let (x, eps) = (0.8, 0.1);
    let want = -(x - 0.2) / (eps + 0.5);
    assert!((optimal_u_p2(x, &spec, eps) - want).abs() < 1e-14);
}

#[test]
fn drift_only_for_quadratic_penalty() {
    let s2 = ControlSpec::new(2, 0.5, 0.2, Selective::SqrtX).unwrap();
    assert!((controlled_drift(0.6, &s2).unwrap() - 0.6 * 0.4 / 0.5).abs() < 1e-14);
    let s1 = ControlSpec::new(1, 0.5, 0.2, Selective::Unit).unwrap();
    assert!(controlled_drift(0.6, &s1).is_err());
}

#[test]
fn rejects_invalid() {
    assert!(ControlSpec::new(3, 1.0, 0.2, Selective::Unit).is_err());
    assert!(ControlSpec::new(2, 0.0, 0.2, Selective::Unit).is_err());
    assert!(ControlSpec::new(2, 1.0, -0.2, Selective::Unit).is_err());
}
