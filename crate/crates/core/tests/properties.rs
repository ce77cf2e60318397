use proptest::prelude::*;

use tilted::convexity::{
    classify, inequality_slacks, middle_grid, square_slack, abs_slack, Classification,
};
use tilted::flux::{
    monotone_test_check, nu_derivative_identity_check, nu_measure, stochastic_monotonicity_check,
    zrp_flux,
};
use tilted::instances::{kinked_instance, positive_instance, random_instance};
use tilted::measure::{tilted_measure, MeasureConfig};
use tilted::sim::{sample_stationary, simulate};
use tilted::tilt::{self, d_drho_expectation, rho_of_theta, theta_of_rho, TiltConfig};
use tilted::RateFunction;

fn tcfg() -> TiltConfig {
    TiltConfig::default()
}

fn builtin(which: u8, p: f64) -> RateFunction {
    match which % 4 {
        0 => RateFunction::zrp_constant(),
        1 => RateFunction::zrp_linear(),
        2 => RateFunction::zrp_power(0.5 + p).unwrap(),
        _ => RateFunction::blp_exp(0.2 + p).unwrap(),
    }
}

/// A θ safely inside the domain of `builtin(which, _)`.
fn inner_theta(which: u8, u: f64) -> f64 {
    match which % 4 {
        0 => -0.05 - 2.0 * u,
        _ => -2.0 + 4.0 * u,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn telescoping(which in 0u8..4, p in 0.0f64..2.0, x in -30i64..30) {
        let f = builtin(which, p);
        prop_assume!(f.support().contains(x) && f.support().contains(x + 1));
        let a = f.log_factorial(x).unwrap();
        let b = f.log_factorial(x + 1).unwrap();
        let step = f.ln_rate(x + 1).unwrap();
        prop_assert!(((b - a) - step).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0));
    }

    #[test]
    fn normalization(which in 0u8..4, p in 0.0f64..2.0, u in 0.0f64..1.0) {
        let f = builtin(which, p);
        let m = tilted_measure(&f, inner_theta(which, u), &MeasureConfig::default()).unwrap();
        let total: f64 = m.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(m.truncation_error_bound() < 1e-12);
    }

    #[test]
    fn tilt_group(which in 0u8..4, p in 0.0f64..2.0, u in 0.0f64..1.0, v in -0.02f64..0.02) {
        let f = builtin(which, p);
        let t1 = inner_theta(which, u);
        let cfg = MeasureConfig::default();
        let a = tilted_measure(&f, t1 + v, &cfg).unwrap();
        let b = tilted_measure(&f, t1, &cfg).unwrap().law().tilt(v).unwrap();
        let lo = b.points()[0] as i64;
        for (i, q) in b.probs().iter().enumerate() {
            prop_assert!((a.prob(lo + i as i64) - q).abs() < 1e-10);
        }
    }

    #[test]
    fn moments_stable_under_window_growth(which in 0u8..4, p in 0.0f64..2.0, u in 0.0f64..1.0) {
        let f = builtin(which, p);
        let t = inner_theta(which, u);
        let coarse = tilted_measure(&f, t, &MeasureConfig::default()).unwrap();
        let fine = tilted_measure(&f, t, &MeasureConfig { tail_tol: 1e-30, ..Default::default() }).unwrap();
        for k in 1..=4 {
            let a = coarse.expect(|x| x.powi(k)).unwrap();
            let b = fine.expect(|x| x.powi(k)).unwrap();
            // omitted mass sits beyond the window edge
            let (lo, hi) = coarse.window();
            let edge = (lo.abs().max(hi.abs()) as f64).max(1.0);
            let scale = fine.expect(|x| x.abs().powi(k)).unwrap().max(edge.powi(k));
            prop_assert!((a - b).abs() <= 10.0 * MeasureConfig::default().tail_tol * scale + 1e-13 * b.abs(), "k = {k}: {a} vs {b}");
        }
    }

    #[test]
    fn density_is_increasing_and_invertible(which in 0u8..4, p in 0.0f64..2.0, u in 0.0f64..1.0, d in 0.001f64..0.5) {
        let f = builtin(which, p);
        let cfg = tcfg();
        let t = inner_theta(which, u);
        let t2 = if which % 4 == 0 { (t + d).min(-0.01) } else { t + d };
        prop_assume!(t2 > t);
        let r1 = rho_of_theta(&f, t, &cfg.measure).unwrap();
        let r2 = rho_of_theta(&f, t2, &cfg.measure).unwrap();
        prop_assert!(r1 < r2);
        let s = theta_of_rho(&f, r1, &cfg).unwrap();
        prop_assert!((s.theta - t).abs() <= 1e-9 / s.variance.min(1.0));
    }

    #[test]
    fn density_derivative_is_variance(which in 0u8..4, p in 0.0f64..2.0, u in 0.0f64..1.0) {
        let f = builtin(which, p);
        let cfg = MeasureConfig::default();
        let t = inner_theta(which, u);
        let var = tilted_measure(&f, t, &cfg).unwrap().variance();
        let mut errs = Vec::new();
        for h in [1e-3, 1e-4] {
            let d = (rho_of_theta(&f, t + h, &cfg).unwrap() - rho_of_theta(&f, t - h, &cfg).unwrap()) / (2.0 * h);
            errs.push((d - var).abs());
        }
        prop_assert!(errs[0] <= 1e-4 * var.max(1.0), "{errs:?}");
        prop_assert!(errs[1] <= errs[0].max(1e-9 * var.max(1.0)));
    }

    #[test]
    fn chain_rule(idx in 0u64..500, k in 1i32..4) {
        let inst = random_instance(77, idx).unwrap();
        let (lo, hi) = (inst.x_min as f64, inst.x_max() as f64);
        let rho = 0.5 * (lo + hi);
        let h = 1e-4;
        let cfg = tcfg();
        let phi = |x: f64| x.powi(k);
        let e = |r: f64| tilt::solve(&inst.rate, r, &cfg).unwrap().1.expect(phi).unwrap();
        let fd = (e(rho + h) - e(rho - h)) / (2.0 * h);
        let an = d_drho_expectation(&inst.rate, rho, phi, &cfg).unwrap();
        let scale = lo.abs().max(hi.abs()).max(1.0).powi(k);
        prop_assert!((fd - an).abs() <= 1e-5 * scale, "{fd} vs {an}");
    }

    #[test]
    fn g_is_convex(idx in 0u64..100_000) {
        let inst = random_instance(5, idx).unwrap();
        let grid = middle_grid(inst.x_min as f64, inst.x_max() as f64, 0.8, 11).unwrap();
        let r = classify(&inst.rate, |x| inst.phi(x), &grid, &tcfg()).unwrap();
        prop_assert!(r.min_second_difference >= -1e-9 * r.scale);
        match r.classification {
            Classification::Linear => prop_assert!(r.max_abs_second_difference <= 1e-9 * r.scale),
            Classification::StrictlyConvex => prop_assert!(r.min_second_difference > 0.0),
            c => prop_assert!(false, "unexpected {c:?}"),
        }
    }

    #[test]
    fn inequalities_hold(idx in 0u64..100_000) {
        let inst = random_instance(6, idx).unwrap();
        let d = inst.law(inst.theta).unwrap();
        let s = inequality_slacks(&d, |x| inst.phi(x)).unwrap();
        prop_assert!(s.centered_slack >= -1e-10 * s.phi_scale);
        prop_assert!(s.square_slack >= -1e-10 * s.phi_scale);
        prop_assert!(s.abs_slack >= -1e-10 * s.abs_scale);
        for l in s.lines {
            prop_assert!(l >= -1e-12 * s.abs_scale);
        }
        prop_assert!(s.expansion_residual.abs() <= 1e-12 * s.abs_scale);
        if let Some(c) = s.hat_cov_positive {
            prop_assert!(c <= 1e-14);
        }
        if let Some(c) = s.cond_cov_nonpositive {
            prop_assert!(c >= -1e-12 * s.abs_scale);
        }
    }

    #[test]
    fn slack_transformations(idx in 0u64..100_000, a in 0.1f64..10.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let inst = random_instance(8, idx).unwrap();
        let d = inst.law(inst.theta).unwrap();
        let base = square_slack(&d, |x| inst.phi(x)).unwrap();
        let shifted = square_slack(&d, |x| inst.phi(x) + b * x + c).unwrap();
        let scaled = square_slack(&d, |x| a * inst.phi(x)).unwrap();
        let s = inequality_slacks(&d, |x| inst.phi(x)).unwrap();
        let tol = 1e-12 * s.phi_scale * (1.0 + b.abs() + c.abs());
        prop_assert!((shifted - base).abs() <= tol);
        prop_assert!((scaled - a * base).abs() <= 1e-12 * a * s.phi_scale);
    }

    #[test]
    fn kinks_give_strict_slack(idx in 0u64..100_000) {
        let inst = kinked_instance(9, idx).unwrap();
        let x0 = inst.kink.unwrap().x0;
        let y = inst.law(inst.theta).unwrap().shifted(x0);
        prop_assert!(abs_slack(&y).unwrap() > 0.0);
    }

    #[test]
    fn positive_support_zeroes_lines(idx in 0u64..100_000) {
        let inst = positive_instance(10, idx).unwrap();
        let s = inequality_slacks(&inst.law(inst.theta).unwrap(), |x| inst.phi(x)).unwrap();
        prop_assert_eq!(&s.lines[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn nu_is_a_probability(idx in 0u64..100_000, u in 0.1f64..0.9) {
        let inst = random_instance(11, idx).unwrap();
        let (lo, hi) = (inst.x_min as f64, inst.x_max() as f64);
        let nu = nu_measure(&inst.rate, lo + u * (hi - lo), &tcfg()).unwrap();
        prop_assert!(nu.prob.iter().all(|p| *p >= 0.0));
        prop_assert!(nu.normalization_drift.abs() <= 1e-10);
        prop_assert_eq!(nu.y_min, inst.x_min);
        prop_assert_eq!(nu.y_max(), inst.x_max() - 1);
    }

    #[test]
    fn nu_is_tail_derivative(idx in 0u64..100_000, u in 0.2f64..0.8) {
        let inst = random_instance(12, idx).unwrap();
        let (lo, hi) = (inst.x_min as f64, inst.x_max() as f64);
        let rho = lo + u * (hi - lo);
        for y in inst.x_min..inst.x_max() {
            let c = nu_derivative_identity_check(&inst.rate, rho, y, 1e-2, &tcfg()).unwrap();
            prop_assert!(c.covariance_error <= 1e-12);
            prop_assert!(c.second_order(1e-10), "{c:?}");
        }
    }

    #[test]
    fn nu_monotone_in_density(idx in 0u64..100_000) {
        let inst = random_instance(13, idx).unwrap();
        let grid = middle_grid(inst.x_min as f64, inst.x_max() as f64, 0.8, 9).unwrap();
        let r = stochastic_monotonicity_check(&inst.rate, &grid, &tcfg()).unwrap();
        prop_assert!(r.min_margin >= -1e-10);
    }

    #[test]
    fn monotone_test_equivalence(idx in 0u64..100_000, u in 0.3f64..0.7, cut in -3i64..4) {
        let inst = random_instance(14, idx).unwrap();
        let (lo, hi) = (inst.x_min as f64, inst.x_max() as f64);
        let rho = lo + u * (hi - lo);
        let phi = move |y: i64| if y >= cut { 1.0 } else { 0.0 };
        let c = monotone_test_check(&inst.rate, phi, rho, 1e-3, &tcfg()).unwrap();
        prop_assert!(c.identity_error() <= 1e-12);
        prop_assert!(c.derivative_error() <= 1e-4 * c.g_second.abs().max(1.0), "{c:?}");
        prop_assert!(c.g_second >= -1e-12);
    }

    #[test]
    fn zrp_flux_shape_follows_rate(p in 0.2f64..3.0) {
        let f = RateFunction::zrp_power(p).unwrap();
        let cfg = tcfg();
        let grid: Vec<f64> = (0..9).map(|i| 0.3 + 0.3 * i as f64).collect();
        let h: Vec<f64> = grid.iter().map(|&r| zrp_flux(&f, r, &cfg).unwrap()).collect();
        for w in h.windows(3) {
            let d = w[0] - 2.0 * w[1] + w[2];
            if p > 1.05 {
                prop_assert!(d > 0.0);
            } else if p < 0.95 {
                prop_assert!(d < 0.0);
            }
        }
    }

    #[test]
    fn dynamics_conserve_and_repeat(seed in 0u64..1000, which in 0u8..2) {
        let f = if which == 0 { RateFunction::zrp_constant() } else { RateFunction::zrp_linear() };
        let s = sample_stationary(&f, 1.3, 12, seed, &tcfg()).unwrap();
        let (a, la) = simulate(&f, &s, 5.0, seed + 1).unwrap();
        let (b, lb) = simulate(&f, &s, 5.0, seed + 1).unwrap();
        prop_assert_eq!(a.particles(), s.particles());
        prop_assert_eq!(la, lb);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn table_round_trip(x_min in -20i64..20, values in proptest::collection::vec(0.0f64..1e6, 1..40)) {
        use tilted::tables::{parse_csv, parse_json, Table};
        let t = Table { x_min, values };
        let csv: String = (0..t.values.len())
            .map(|i| format!("{},{}\n", x_min + i as i64, t.values[i]))
            .collect();
        let json = format!(
            "{{{}}}",
            (0..t.values.len())
                .map(|i| format!("\"{}\": {}", x_min + i as i64, t.values[i]))
                .collect::<Vec<_>>()
                .join(",")
        );
        prop_assert_eq!(&parse_csv(&format!("x,value\n{csv}")).unwrap(), &t);
        prop_assert_eq!(&parse_json(&json).unwrap(), &t);
    }
}
