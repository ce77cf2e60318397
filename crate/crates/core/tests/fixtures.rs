//! Closed-form cases checked against formulas written out here, not against
//! the library's own sums.

use tilted::convexity::{classify, Classification, G};
use tilted::flux::{flux_derivative, flux_profile, nu_measure, zrp_flux};
use tilted::measure::RateKind;
use tilted::tilt::{self, TiltConfig};
use tilted::RateFunction;

fn cfg() -> TiltConfig {
    TiltConfig::default()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn poisson_pmf(rho: f64, k: u32) -> f64 {
    let mut p = (-rho).exp();
    for j in 1..=k {
        p *= rho / j as f64;
    }
    p
}

#[test]
fn geometric_second_moment() {
    // f ≡ 1: μ^θ is geometric with mean ρ and variance ρ(1+ρ)
    let f = RateFunction::zrp_constant();
    for rho in [0.1, 0.5, 1.0, 2.5, 7.0] {
        let g = G(&f, |x| x * x, rho, &cfg()).unwrap();
        assert!(close(g, 2.0 * rho * rho + rho, 1e-9), "rho {rho}: {g}");
    }
    let grid: Vec<f64> = (0..9).map(|i| 0.25 + 0.5 * i as f64).collect();
    let r = classify(&f, |x| x * x, &grid, &cfg()).unwrap();
    assert_eq!(r.classification, Classification::StrictlyConvex);
    // second difference of 2ρ² + ρ at spacing 0.5
    for d in &r.profile.second_differences {
        assert!(close(*d, 4.0 * 0.25, 1e-8), "{d}");
    }
}

#[test]
fn poisson_second_moment_and_flux() {
    let f = RateFunction::zrp_linear();
    for rho in [0.2, 1.0, 3.0, 10.0] {
        let g = G(&f, |x| x * x, rho, &cfg()).unwrap();
        assert!(close(g, rho * rho + rho, 1e-9));
        assert!(close(zrp_flux(&f, rho, &cfg()).unwrap(), rho, 1e-10));
        assert!(close(flux_derivative(&f, rho, &cfg()).unwrap(), 1.0, 1e-9));
    }
    let grid: Vec<f64> = (1..8).map(|i| i as f64 * 0.5).collect();
    let p = flux_profile(&f, &grid, &cfg()).unwrap();
    assert_eq!(p.classification, Classification::Linear);
}

#[test]
fn geometric_flux_is_concave() {
    let f = RateFunction::zrp_constant();
    for rho in [0.1, 1.0, 4.0] {
        let h = zrp_flux(&f, rho, &cfg()).unwrap();
        assert!(close(h, rho / (1.0 + rho), 1e-10));
        let d = flux_derivative(&f, rho, &cfg()).unwrap();
        assert!(close(d, 1.0 / ((1.0 + rho) * (1.0 + rho)), 1e-8));
    }
    let grid: Vec<f64> = (1..10).map(|i| i as f64 * 0.4).collect();
    let p = flux_profile(&f, &grid, &cfg()).unwrap();
    assert_eq!(p.classification, Classification::StrictlyConcave);
}

#[test]
fn poisson_nu_is_poisson() {
    // Σ_{x>y} (x−ρ) Poi_ρ(x) = ρ Poi_ρ(y)
    let f = RateFunction::zrp_linear();
    for rho in [0.5, 1.0, 4.0] {
        let nu = nu_measure(&f, rho, &cfg()).unwrap();
        for y in 0..20 {
            assert!((nu.at(y) - poisson_pmf(rho, y as u32)).abs() < 1e-12, "rho {rho} y {y}");
        }
    }
}

#[test]
fn geometric_nu_is_negative_binomial() {
    // μ(x) = (1−p)p^x with p = ρ/(1+ρ) gives ν(y) = (y+1)(1−p)²p^y
    let f = RateFunction::zrp_constant();
    for rho in [0.3, 1.0, 3.0] {
        let p = rho / (1.0 + rho);
        let nu = nu_measure(&f, rho, &cfg()).unwrap();
        for y in 0..30 {
            let want = (y + 1) as f64 * (1.0 - p) * (1.0 - p) * p.powi(y as i32);
            assert!((nu.at(y) - want).abs() < 1e-11, "rho {rho} y {y}: {} vs {want}", nu.at(y));
        }
    }
}

#[test]
fn three_point_density_inverse() {
    // support {0,1,2}, weights w: with z = e^θ,
    // ρ = (w1 z + 2 w2 z²)/(w0 + w1 z + w2 z²) is a quadratic in z
    let w = [1.0, 3.0, 0.5];
    let f = RateFunction::from_weights(0, &w).unwrap();
    for rho in [0.2, 0.7, 1.0, 1.6, 1.9] {
        let a = w[2] * (2.0 - rho);
        let b = w[1] * (1.0 - rho);
        let c = -w[0] * rho;
        let z = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        let (s, m) = tilt::solve(&f, rho, &cfg()).unwrap();
        assert!(close(s.theta, z.ln(), 1e-9), "rho {rho}");
        let den = w[0] + w[1] * z + w[2] * z * z;
        let second = (w[1] * z + 4.0 * w[2] * z * z) / den;
        assert!(close(m.expect(|x| x * x).unwrap(), second, 1e-10));
    }
}

#[test]
fn two_point_support_is_linear() {
    // on {0,1} every Φ is affine in x, so G is affine in ρ
    let f = RateFunction::from_table(RateKind::Generic, 0, vec![1.0, 2.0]).unwrap();
    let grid: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let r = classify(&f, |x| (3.0 * x).exp(), &grid, &cfg()).unwrap();
    assert_eq!(r.classification, Classification::Linear);
    for (rho, g) in grid.iter().zip(&r.profile.g_values) {
        assert!(close(*g, 1.0 + rho * (3f64.exp() - 1.0), 1e-9));
    }
}

#[test]
fn symmetric_bridge_flux_at_zero() {
    // θ = 0 gives the symmetric law, so H(0) = 2 E f(X) summed by hand
    let beta = 0.7;
    let f = RateFunction::blp_exp(beta).unwrap();
    let fx = |x: i64| (beta * (x as f64 - 0.5)).exp();
    let log_fact = |x: i64| -> f64 {
        if x >= 0 {
            (1..=x).map(|k| beta * (k as f64 - 0.5)).sum()
        } else {
            -(x + 1..=0).map(|k| beta * (k as f64 - 0.5)).sum::<f64>()
        }
    };
    let (mut z, mut s) = (0.0, 0.0);
    for x in -60..=60 {
        let w = (-log_fact(x)).exp();
        z += w;
        s += w * (fx(x) + fx(-x));
    }
    let h = tilted::flux::flux(&f, 0.0, &cfg()).unwrap();
    assert!(close(h, s / z, 1e-10), "{h} vs {}", s / z);
}
