//! Hydrodynamic flux of zero range and bricklayer processes, the
//! characteristic speed, and the `ν` measure
//!
//! ```text
//! ν(y) = Σ_{x > y} (x − ρ) μ^{θ(ρ)}(x) / Var^{θ(ρ)} X,    x_min ≤ y < x_max,
//! ```
//!
//! which is the `ρ`-derivative of the tail `P^{θ(ρ)}(X > y)`.

use serde::Serialize;

use crate::convexity::{self, Classification};
use crate::error::{Error, Result};
use crate::measure::{distribution::neumaier_sum, RateFunction, RateKind, TiltedMeasure};
use crate::tilt::{self, TiltConfig};

/// Tolerance on `|Σ ν − 1|`.
pub const NU_NORMALIZATION_TOL: f64 = 1e-10;
/// Allowed negative margin in the stochastic-ordering check.
pub const MONOTONICITY_TOL: f64 = 1e-10;
/// Flux of the bricklayer process with `f ≡ 1`.
pub const CONSTANT_BLP_FLUX: f64 = 2.0;

fn rate_or_nan(f: &RateFunction, x: f64) -> f64 {
    f.rate(x as i64).unwrap_or(f64::NAN)
}

/// The function whose tilted expectation is the flux: `f(x)` for zero range,
/// `f(x) + f(−x)` for bricklayer.
pub fn flux_integrand(f: &RateFunction, x: f64) -> f64 {
    match f.kind() {
        RateKind::Blp => rate_or_nan(f, x) + rate_or_nan(f, -x),
        _ => rate_or_nan(f, x),
    }
}

fn require(f: &RateFunction, kind: RateKind) -> Result<()> {
    if f.kind() != kind {
        return Err(Error::InvalidRate(format!(
            "expected a {kind:?} rate, got {:?}",
            f.kind()
        )));
    }
    Ok(())
}

/// `H(ρ) = E^{θ(ρ)} f(X)`.
pub fn zrp_flux(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<f64> {
    require(f, RateKind::Zrp)?;
    let (_, m) = tilt::solve(f, rho, cfg)?;
    m.expect(|x| rate_or_nan(f, x))
}

/// `H(ρ) = E^{θ(ρ)} f(X) + E^{θ(ρ)} f(−X)`.
pub fn blp_flux(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<f64> {
    require(f, RateKind::Blp)?;
    if f.is_constant_one_blp() {
        return Ok(CONSTANT_BLP_FLUX);
    }
    let (_, m) = tilt::solve(f, rho, cfg)?;
    m.expect(|x| flux_integrand(f, x))
}

/// Flux for either kind.
pub fn flux(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<f64> {
    match f.kind() {
        RateKind::Zrp => zrp_flux(f, rho, cfg),
        RateKind::Blp => blp_flux(f, rho, cfg),
        RateKind::Generic => Err(Error::InvalidRate(
            "flux needs a zero range or bricklayer rate".into(),
        )),
    }
}

/// `H′(ρ) = Cov(h(X), X) / Var X` with `h` the flux integrand.
pub fn flux_derivative(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<f64> {
    if f.kind() == RateKind::Generic {
        return Err(Error::InvalidRate(
            "flux needs a zero range or bricklayer rate".into(),
        ));
    }
    if f.is_constant_one_blp() {
        return Ok(0.0);
    }
    tilt::d_drho_expectation(f, rho, |x| flux_integrand(f, x), cfg)
}

/// `V = c·H′(ρ)`.
pub fn characteristic_speed(f: &RateFunction, rho: f64, c: f64, cfg: &TiltConfig) -> Result<f64> {
    Ok(c * flux_derivative(f, rho, cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxProfile {
    pub rho_grid: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    #[serde(rename = "H_prime")]
    pub h_prime: Vec<f64>,
    pub classification: Classification,
    pub second_differences: Vec<f64>,
    /// Second differences agree with the classification.
    pub consistent: bool,
}

/// Flux along `grid`, classified from the shape of the flux integrand on the
/// support.
pub fn flux_profile(f: &RateFunction, grid: &[f64], cfg: &TiltConfig) -> Result<FluxProfile> {
    if f.kind() == RateKind::Generic {
        return Err(Error::InvalidRate(
            "flux needs a zero range or bricklayer rate".into(),
        ));
    }
    if f.is_constant_one_blp() {
        return Ok(FluxProfile {
            rho_grid: grid.to_vec(),
            h: vec![CONSTANT_BLP_FLUX; grid.len()],
            h_prime: vec![0.0; grid.len()],
            classification: Classification::Linear,
            second_differences: vec![0.0; grid.len().saturating_sub(2)],
            consistent: true,
        });
    }
    let report = convexity::classify(f, |x| flux_integrand(f, x), grid, cfg)?;
    Ok(FluxProfile {
        rho_grid: report.profile.rho_grid,
        h: report.profile.g_values,
        h_prime: report.profile.g_prime,
        classification: report.classification,
        second_differences: report.profile.second_differences,
        consistent: report.consistent,
    })
}

// ---------------------------------------------------------------------------
// ν

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuMeasure {
    pub rho: f64,
    pub theta: f64,
    /// Smallest `y` carried by the table.
    pub y_min: i64,
    /// `prob[i] = ν(y_min + i)`.
    pub prob: Vec<f64>,
    pub variance_used: f64,
    /// `Σ ν − 1`.
    pub normalization_drift: f64,
}

impl NuMeasure {
    pub fn y_max(&self) -> i64 {
        self.y_min + self.prob.len() as i64 - 1
    }

    pub fn at(&self, y: i64) -> f64 {
        if y < self.y_min || y > self.y_max() {
            0.0
        } else {
            self.prob[(y - self.y_min) as usize]
        }
    }

    /// `P^ν(X > y)`.
    pub fn tail(&self, y: i64) -> f64 {
        if y < self.y_min {
            return 1.0;
        }
        let start = (y - self.y_min + 1) as usize;
        if start >= self.prob.len() {
            return 0.0;
        }
        neumaier_sum(self.prob[start..].iter().copied()).min(1.0)
    }

    pub fn expect<F: Fn(i64) -> f64>(&self, phi: F) -> f64 {
        neumaier_sum(
            self.prob
                .iter()
                .enumerate()
                .map(|(i, p)| phi(self.y_min + i as i64) * p),
        )
    }
}

/// `ν` computed from a materialized `μ^θ`: suffix sums above the mean and
/// negated prefix sums below it, so that every summand has one sign.
pub fn nu_from_measure(m: &TiltedMeasure, rho: f64) -> Result<NuMeasure> {
    let (lo, hi) = m.window();
    let p = m.probs();
    let mean = m.mean();
    let var = m.variance();
    if !(var > 0.0) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let n = p.len();
    let term = |i: usize| ((lo + i as i64) as f64 - mean) * p[i];

    // ν(lo + i) for i = 0..n-1 (y = hi has an empty sum)
    let mut nu = vec![0.0; n - 1];
    let mut acc = 0.0;
    let mut comp = 0.0;
    for i in (0..n - 1).rev() {
        let y = (lo + i as i64) as f64;
        if y < mean {
            break;
        }
        add(&mut acc, &mut comp, term(i + 1));
        nu[i] = (acc + comp) / var;
    }
    let (mut acc, mut comp) = (0.0, 0.0);
    for (i, slot) in nu.iter_mut().enumerate().take(n - 1) {
        let y = (lo + i as i64) as f64;
        if y >= mean {
            break;
        }
        add(&mut acc, &mut comp, -term(i));
        *slot = (acc + comp) / var;
    }
    debug_assert!(hi == lo + n as i64 - 1);
    let drift = neumaier_sum(nu.iter().copied()) - 1.0;
    Ok(NuMeasure {
        rho,
        theta: m.theta(),
        y_min: lo,
        prob: nu,
        variance_used: var,
        normalization_drift: drift,
    })
}

fn add(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

/// `ν^{θ(ρ)}`; the window is refined until `|Σ ν − 1| ≤ 1e-10`.
pub fn nu_measure(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<NuMeasure> {
    let mut cfg = *cfg;
    let mut last = f64::NAN;
    for _ in 0..3 {
        let (_, m) = tilt::solve(f, rho, &cfg)?;
        let nu = nu_from_measure(&m, rho)?;
        if nu.normalization_drift.abs() <= NU_NORMALIZATION_TOL {
            return Ok(nu);
        }
        last = nu.normalization_drift;
        cfg.measure.tail_tol *= 1e-3;
    }
    Err(Error::TruncationTooCoarse { drift: last })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuDerivativeCheck {
    pub y: i64,
    pub nu: f64,
    /// `Cov(X, 1{X > y}) / Var X`.
    pub covariance_form: f64,
    pub covariance_error: f64,
    /// `(h, |ν(y) − central difference of the tail at step h|)`.
    pub fd_errors: Vec<(f64, f64)>,
    /// Error at `h` over error at `h/2` (about 4 for a second-order error).
    pub richardson_ratio: f64,
}

impl NuDerivativeCheck {
    /// Second-order convergence, or both errors already at rounding level.
    pub fn second_order(&self, floor: f64) -> bool {
        let (e1, e2) = (self.fd_errors[0].1, self.fd_errors[1].1);
        (e1 <= floor && e2 <= floor) || (3.0..=5.0).contains(&self.richardson_ratio)
    }
}

/// Compare `ν(y)` with the central difference of `ρ ↦ P^{θ(ρ)}(X > y)` at
/// steps `h` and `h/2`, and with its covariance form.
pub fn nu_derivative_identity_check(
    f: &RateFunction,
    rho: f64,
    y: i64,
    h: f64,
    cfg: &TiltConfig,
) -> Result<NuDerivativeCheck> {
    let (_, m) = tilt::solve(f, rho, cfg)?;
    let nu = nu_from_measure(&m, rho)?;
    let nu_y = nu.at(y);
    let yf = y as f64;
    let cov_form = m.cov(|x| x, |x| if x > yf { 1.0 } else { 0.0 })? / m.variance();
    let tail = |r: f64| -> Result<f64> { Ok(tilt::solve(f, r, cfg)?.1.tail(y)) };
    let mut fd_errors = Vec::with_capacity(2);
    for step in [h, 0.5 * h] {
        let d = (tail(rho + step)? - tail(rho - step)?) / (2.0 * step);
        fd_errors.push((step, (d - nu_y).abs()));
    }
    Ok(NuDerivativeCheck {
        y,
        nu: nu_y,
        covariance_form: cov_form,
        covariance_error: (cov_form - nu_y).abs(),
        richardson_ratio: fd_errors[0].1 / fd_errors[1].1,
        fd_errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub nus: Vec<NuMeasure>,
    /// `min over consecutive pairs and y of tail(ρ₂) − tail(ρ₁)`.
    pub min_margin: f64,
    /// `(ρ₁, ρ₂, y)` where the minimum occurs.
    pub argmin: Option<(f64, f64, i64)>,
}

/// Check that `ρ ↦ ν^{θ(ρ)}` is stochastically nondecreasing along `grid`.
pub fn stochastic_monotonicity_check(
    f: &RateFunction,
    grid: &[f64],
    cfg: &TiltConfig,
) -> Result<MonotonicityReport> {
    let nus = grid
        .iter()
        .map(|&r| nu_measure(f, r, cfg))
        .collect::<Result<Vec<_>>>()?;
    let report = monotonicity_of(nus);
    if report.min_margin < -MONOTONICITY_TOL {
        let (a, b, y) = report.argmin.unwrap_or((f64::NAN, f64::NAN, 0));
        return Err(Error::MonotonicityViolation {
            rho_lo: a,
            rho_hi: b,
            y,
            margin: report.min_margin,
        });
    }
    Ok(report)
}

/// Margins without the error on violation.
pub fn monotonicity_of(nus: Vec<NuMeasure>) -> MonotonicityReport {
    let mut min_margin = f64::INFINITY;
    let mut argmin = None;
    for w in nus.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let lo = a.y_min.min(b.y_min) - 1;
        let hi = a.y_max().max(b.y_max());
        for y in lo..=hi {
            let margin = b.tail(y) - a.tail(y);
            if margin < min_margin {
                min_margin = margin;
                argmin = Some((a.rho, b.rho, y));
            }
        }
    }
    MonotonicityReport {
        nus,
        min_margin,
        argmin,
    }
}

/// `Φ(x) = Σ_{y=1}^{x−1} φ(y) − Σ_{y=x}^{0} φ(y)`, so `Φ(x+1) − Φ(x) = φ(x)`.
pub fn summed_test_function<F: Fn(i64) -> f64>(phi: F, x: i64) -> f64 {
    if x >= 1 {
        neumaier_sum((1..x).map(&phi))
    } else {
        -neumaier_sum((x..=0).map(&phi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneTestCheck {
    /// `E^ν φ`.
    pub nu_expectation: f64,
    /// `d/dρ E^{θ(ρ)} Φ = Cov(Φ, X) / Var X`.
    pub g_prime: f64,
    /// Central difference of `ρ ↦ E^ν φ` at step `h`.
    pub nu_derivative_fd: f64,
    /// `G″(ρ)` from the covariance slack divided by `Var³`.
    pub g_second: f64,
}

impl MonotoneTestCheck {
    pub fn identity_error(&self) -> f64 {
        (self.nu_expectation - self.g_prime).abs()
    }

    pub fn derivative_error(&self) -> f64 {
        (self.nu_derivative_fd - self.g_second).abs()
    }
}

/// Check `E^ν φ = G′_Φ(ρ)` exactly and `d/dρ E^ν φ = G″_Φ(ρ)` by a central
/// difference, for `φ` on the integers.
pub fn monotone_test_check<F: Fn(i64) -> f64>(
    f: &RateFunction,
    phi: F,
    rho: f64,
    h: f64,
    cfg: &TiltConfig,
) -> Result<MonotoneTestCheck> {
    let big_phi = |x: f64| summed_test_function(&phi, x as i64);
    let (_, m) = tilt::solve(f, rho, cfg)?;
    let nu = nu_from_measure(&m, rho)?;
    let var = m.variance();
    let g_prime = tilt::derivative_at(&m, big_phi)?;
    let g_second = convexity::centered_slack(m.law(), big_phi)? / (var * var * var);
    let e_at = |r: f64| -> Result<f64> { Ok(nu_measure(f, r, cfg)?.expect(&phi)) };
    let nu_derivative_fd = (e_at(rho + h)? - e_at(rho - h)?) / (2.0 * h);
    Ok(MonotoneTestCheck {
        nu_expectation: nu.expect(&phi),
        g_prime,
        nu_derivative_fd,
        g_second,
    })
}
