//! The density–tilt correspondence `ρ(θ) = E^θ X` and its inverse `θ(ρ)`.
//!
//! `dρ/dθ = Var^θ X > 0`, so `ρ` is strictly increasing and the inverse is
//! found by a bracketing search in `θ` combined with Newton steps that use
//! the variance as derivative. A Newton step that leaves the current bracket
//! is replaced by bisection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{MeasureConfig, RateFunction, TiltedMeasure};

/// Largest `|θ|` probed on an unbounded side of the domain.
pub const THETA_CAP: f64 = 700.0;

/// Bracket expansion gives up once it is this close to a domain edge.
const EDGE_RESOLUTION: f64 = 1e-12;

/// Numerical settings for inverting `ρ(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltConfig {
    pub measure: MeasureConfig,
    /// Absolute tolerance on the density residual `|ρ(θ) − ρ|`. It is
    /// floored at 16 ulps of `ρ`.
    pub rho_tol: f64,
    pub max_iter: usize,
}

impl Default for TiltConfig {
    fn default() -> Self {
        TiltConfig {
            measure: MeasureConfig::default(),
            rho_tol: 1e-13,
            max_iter: 200,
        }
    }
}

impl TiltConfig {
    pub fn with_rho_tol(mut self, tol: f64) -> Self {
        self.rho_tol = tol;
        self
    }

    fn effective_tol(&self, rho: f64) -> f64 {
        self.rho_tol.max(16.0 * f64::EPSILON * rho.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltSolution {
    pub rho: f64,
    pub theta: f64,
    /// `Var^θ X` at the solution.
    pub variance: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// `ρ(θ) = E^θ X`.
pub fn rho_of_theta(f: &RateFunction, theta: f64, cfg: &MeasureConfig) -> Result<f64> {
    Ok(TiltedMeasure::new(f, theta, cfg)?.mean())
}

/// Interval of `θ` values the root finder may probe.
fn theta_edges(f: &RateFunction, cfg: &MeasureConfig) -> (f64, f64) {
    let dom = f.domain();
    let lo = if dom.lower.is_finite() {
        dom.lower + 2.0 * cfg.margin
    } else {
        -THETA_CAP
    };
    let hi = if dom.upper.is_finite() {
        dom.upper - 2.0 * cfg.margin
    } else {
        THETA_CAP
    };
    (lo, hi)
}

/// The open interval `J` of attainable densities. A finite side of the
/// support gives its endpoint exactly; an infinite side gives `±∞` when the
/// matching `θ` bound is infinite and `ρ(θ̄ − 2·margin)` (resp. lower side)
/// otherwise.
pub fn attainable_interval(f: &RateFunction, cfg: &MeasureConfig) -> Result<(f64, f64)> {
    let dom = f.domain();
    if dom.is_empty() {
        return Err(Error::InadmissibleDomain {
            lower: dom.lower,
            upper: dom.upper,
        });
    }
    let (elo, ehi) = theta_edges(f, cfg);
    let support = f.support();
    // A window that outgrows the cap at the edge means the density there is
    // beyond anything representable; report the side as unbounded.
    let edge_rho = |theta: f64, unbounded: f64| match rho_of_theta(f, theta, cfg) {
        Err(Error::TruncationFailure { .. }) => Ok(unbounded),
        other => other,
    };
    let lo = match support.x_min {
        Some(v) => v as f64,
        None if dom.lower.is_finite() => edge_rho(elo, f64::NEG_INFINITY)?,
        None => f64::NEG_INFINITY,
    };
    let hi = match support.x_max {
        Some(v) => v as f64,
        None if dom.upper.is_finite() => edge_rho(ehi, f64::INFINITY)?,
        None => f64::INFINITY,
    };
    Ok((lo, hi))
}

/// `θ(ρ)` together with the tilted measure at the solution.
pub fn solve(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<(TiltSolution, TiltedMeasure)> {
    let support = f.support();
    let (jl, jh) = (support.lower_f64(), support.upper_f64());
    if !rho.is_finite() || rho <= jl || rho >= jh {
        return Err(Error::RhoOutOfRange { rho, lo: jl, hi: jh });
    }
    let dom = f.domain();
    if dom.is_empty() {
        return Err(Error::InadmissibleDomain {
            lower: dom.lower,
            upper: dom.upper,
        });
    }
    let (elo, ehi) = theta_edges(f, &cfg.measure);
    if elo >= ehi {
        return Err(Error::DomainExhausted { rho, theta: elo });
    }
    let tol = cfg.effective_tol(rho);
    let eval = |theta: f64| -> Result<TiltedMeasure> { TiltedMeasure::new(f, theta, &cfg.measure) };

    // near a finite θ bound the window can outgrow its cap before ρ is reached
    let expand_eval = |theta: f64| -> Result<TiltedMeasure> {
        match eval(theta) {
            Err(Error::TruncationFailure { .. }) => Err(Error::DomainExhausted { rho, theta }),
            other => other,
        }
    };

    let theta0 = if elo < 0.0 && 0.0 < ehi {
        0.0
    } else if ehi <= 0.0 {
        (ehi - 1.0).max(0.5 * (elo + ehi))
    } else {
        (elo + 1.0).min(0.5 * (elo + ehi))
    };
    let mut iterations = 1;
    let mut cur = eval(theta0)?;
    let mut residual = cur.mean() - rho;
    if residual.abs() <= tol {
        return Ok((finish(rho, &cur, iterations, residual), cur));
    }

    // expand a bracket [a, b] with ρ(a) < rho < ρ(b)
    let (mut a, mut b);
    let mut step = 1.0f64;
    if residual < 0.0 {
        a = theta0;
        loop {
            if ehi - a <= EDGE_RESOLUTION {
                return Err(Error::DomainExhausted { rho, theta: ehi });
            }
            let t = a + step.min(0.5 * (ehi - a));
            iterations += 1;
            let m = expand_eval(t)?;
            let r = m.mean() - rho;
            if r.abs() <= tol {
                return Ok((finish(rho, &m, iterations, r), m));
            }
            if r > 0.0 {
                b = t;
                break;
            }
            a = t;
            cur = m;
            residual = r;
            step *= 2.0;
        }
    } else {
        b = theta0;
        loop {
            if b - elo <= EDGE_RESOLUTION {
                return Err(Error::DomainExhausted { rho, theta: elo });
            }
            let t = b - step.min(0.5 * (b - elo));
            iterations += 1;
            let m = expand_eval(t)?;
            let r = m.mean() - rho;
            if r.abs() <= tol {
                return Ok((finish(rho, &m, iterations, r), m));
            }
            if r < 0.0 {
                a = t;
                break;
            }
            b = t;
            cur = m;
            residual = r;
            step *= 2.0;
        }
    }

    // safeguarded Newton inside the bracket
    let mut best = (residual.abs(), cur.clone(), residual);
    while iterations < cfg.max_iter {
        let theta = cur.theta();
        let var = cur.variance();
        let mut next = if var > 0.0 { theta - residual / var } else { f64::NAN };
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if next <= a || next >= b {
            break;
        }
        iterations += 1;
        cur = eval(next)?;
        residual = cur.mean() - rho;
        if residual.abs() < best.0 {
            best = (residual.abs(), cur.clone(), residual);
        }
        if residual.abs() <= tol {
            return Ok((finish(rho, &cur, iterations, residual), cur));
        }
        if residual < 0.0 {
            a = next;
        } else {
            b = next;
        }
    }
    let (_, m, r) = best;
    Err(Error::NoConvergence {
        theta: m.theta(),
        residual: r.abs(),
        tol,
    })
}

fn finish(rho: f64, m: &TiltedMeasure, iterations: usize, residual: f64) -> TiltSolution {
    TiltSolution {
        rho,
        theta: m.theta(),
        variance: m.variance(),
        iterations,
        residual: residual.abs(),
    }
}

/// `θ(ρ)`.
pub fn theta_of_rho(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<TiltSolution> {
    solve(f, rho, cfg).map(|(s, _)| s)
}

/// `d/dρ E^{θ(ρ)} φ(X) = Cov^{θ(ρ)}(φ(X), X) / Var^{θ(ρ)} X`.
pub fn d_drho_expectation<F: Fn(f64) -> f64>(
    f: &RateFunction,
    rho: f64,
    phi: F,
    cfg: &TiltConfig,
) -> Result<f64> {
    let (_, m) = solve(f, rho, cfg)?;
    derivative_at(&m, phi)
}

/// `Cov(φ, X) / Var X` for an already materialized measure.
pub fn derivative_at<F: Fn(f64) -> f64>(m: &TiltedMeasure, phi: F) -> Result<f64> {
    let var = m.variance();
    if !(var > 0.0) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok(m.cov(phi, |x| x)? / var)
}
