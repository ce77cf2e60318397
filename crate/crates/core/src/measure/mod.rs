//! Rate functions, the generalized factorial, the admissible tilt domain and
//! the tilted measures `μ^θ(x) ∝ e^{θx} / f(x)!`.

pub mod distribution;
pub mod domain;
pub mod rate;

use serde::Serialize;

pub use distribution::{log_sum_exp, Distribution};
pub use domain::{theta_domain, BoundSource, SideEstimate, ThetaDomain};
pub use rate::{log_factorial_product, RateFamily, RateFunction, RateKind, SupportInterval};

use crate::error::{Error, Result};

/// Numerical knobs shared by every operation that materializes `μ^θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureConfig {
    /// Bound on the discarded tail mass, relative to the retained mass.
    pub tail_tol: f64,
    /// `θ` must lie this far inside `(θ̲, θ̄)`.
    pub margin: f64,
    /// Hard cap on the number of materialized sites.
    pub max_window: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            tail_tol: 1e-15,
            margin: 1e-6,
            max_window: 1 << 22,
        }
    }
}

/// A normalized, possibly truncated table of `μ^θ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedMeasure {
    theta: f64,
    window: (i64, i64),
    law: Distribution,
    log_normalizer: f64,
    truncation_error_bound: f64,
}

impl TiltedMeasure {
    pub fn new(f: &RateFunction, theta: f64, cfg: &MeasureConfig) -> Result<Self> {
        let dom = f.domain();
        if !dom.contains(theta, cfg.margin) {
            return Err(Error::ThetaOutOfDomain {
                theta,
                lower: dom.lower,
                upper: dom.upper,
                margin: cfg.margin,
            });
        }
        let support = f.support();

        // log-weights θx − log f(x)!, walked outwards from x = 0
        let mut up: Vec<f64> = vec![0.0];
        let mut down: Vec<f64> = Vec::new();
        let mut lf_up = 0.0f64;
        let mut lf_down = 0.0f64;
        let mut logsum = 0.0f64;
        let mut upper_bound = 0.0f64;
        let mut lower_bound = 0.0f64;
        let log_tol = cfg.tail_tol.ln();

        // upper side
        let mut x = 0i64;
        loop {
            if support.x_max == Some(x) {
                break;
            }
            let ln_f_next = f.ln_rate(x + 1)?;
            if support.x_max.is_none() {
                // ratio of consecutive weights beyond x, nonincreasing for
                // nondecreasing f
                let mut log_q = theta - ln_f_next;
                if dom.upper.is_finite() {
                    log_q = log_q.max(theta - dom.upper + cfg.margin);
                }
                if log_q < 0.0 {
                    let log_bound = up[up.len() - 1] + log_q - (-log_q.exp()).ln_1p();
                    if log_bound - logsum < log_tol {
                        upper_bound = (log_bound - logsum).exp();
                        break;
                    }
                }
            }
            lf_up += ln_f_next;
            x += 1;
            let lw = theta * x as f64 - lf_up;
            logsum = log_add_exp(logsum, lw);
            up.push(lw);
            if up.len() + down.len() > cfg.max_window {
                return Err(Error::TruncationFailure {
                    cap: cfg.max_window,
                    tol: cfg.tail_tol,
                });
            }
        }

        // lower side
        let mut x = 0i64;
        loop {
            if support.x_min == Some(x) {
                break;
            }
            let ln_f_here = f.ln_rate(x)?;
            if support.x_min.is_none() {
                let mut log_q = ln_f_here - theta;
                if dom.lower.is_finite() {
                    log_q = log_q.max(dom.lower - theta + cfg.margin);
                }
                if log_q < 0.0 {
                    let last = down.last().copied().unwrap_or(up[0]);
                    let log_bound = last + log_q - (-log_q.exp()).ln_1p();
                    if log_bound - logsum < log_tol {
                        lower_bound = (log_bound - logsum).exp();
                        break;
                    }
                }
            }
            lf_down -= ln_f_here;
            x -= 1;
            let lw = theta * x as f64 - lf_down;
            logsum = log_add_exp(logsum, lw);
            down.push(lw);
            if up.len() + down.len() > cfg.max_window {
                return Err(Error::TruncationFailure {
                    cap: cfg.max_window,
                    tol: cfg.tail_tol,
                });
            }
        }

        let lo = -(down.len() as i64);
        let mut log_w: Vec<f64> = down.into_iter().rev().collect();
        log_w.extend(up);
        if log_w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tilted log-weight".into()));
        }
        let log_normalizer = log_sum_exp(&log_w);
        let mut probs: Vec<f64> = log_w.iter().map(|v| (v - log_normalizer).exp()).collect();

        // drop underflowed atoms at the ends of the window
        let first = probs.iter().position(|p| *p > 0.0).unwrap_or(0);
        let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        probs.truncate(last + 1);
        probs.drain(..first);
        let lo = lo + first as i64;
        let hi = lo + probs.len() as i64 - 1;
        let law = Distribution::lattice(lo, probs)?;

        Ok(TiltedMeasure {
            theta,
            window: (lo, hi),
            law,
            log_normalizer,
            truncation_error_bound: upper_bound + lower_bound,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Materialized window `(lo, hi)`, both inclusive.
    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    pub fn law(&self) -> &Distribution {
        &self.law
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn truncation_error_bound(&self) -> f64 {
        self.truncation_error_bound
    }

    pub fn prob(&self, x: i64) -> f64 {
        if x < self.window.0 || x > self.window.1 {
            0.0
        } else {
            self.law.probs()[(x - self.window.0) as usize]
        }
    }

    pub fn probs(&self) -> &[f64] {
        self.law.probs()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, phi: F) -> Result<f64> {
        self.law.expect(phi)
    }

    pub fn cov<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(&self, phi: F, psi: G) -> Result<f64> {
        self.law.cov(phi, psi)
    }

    pub fn mean(&self) -> f64 {
        self.law.mean()
    }

    pub fn variance(&self) -> f64 {
        self.law.variance()
    }

    /// `P(X > y)`.
    pub fn tail(&self, y: i64) -> f64 {
        self.law.tail(y as f64)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `μ^θ` for `f`.
pub fn tilted_measure(f: &RateFunction, theta: f64, cfg: &MeasureConfig) -> Result<TiltedMeasure> {
    TiltedMeasure::new(f, theta, cfg)
}

/// `E^θ φ(X)`.
pub fn expect<F: Fn(f64) -> f64>(m: &TiltedMeasure, phi: F) -> Result<f64> {
    m.expect(phi)
}

/// `Cov^θ(φ(X), ψ(X))`.
pub fn cov<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(m: &TiltedMeasure, phi: F, psi: G) -> Result<f64> {
    m.cov(phi, psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MeasureConfig {
        MeasureConfig::default()
    }

    #[test]
    fn linear_rate_gives_poisson() {
        let f = RateFunction::zrp_linear();
        for theta in [-1.0f64, 0.0, 0.5, 2.0] {
            let m = tilted_measure(&f, theta, &cfg()).unwrap();
            let lambda = theta.exp();
            assert!((m.prob(0) - (-lambda).exp()).abs() < 1e-14);
            assert!((m.mean() - lambda).abs() < 1e-12 * lambda.max(1.0));
            let var = m.cov(|x| x, |x| x).unwrap();
            assert!((var - lambda).abs() < 1e-11 * lambda.max(1.0));
            assert!(m.truncation_error_bound() <= cfg().tail_tol);
        }
    }

    #[test]
    fn blp_at_zero_is_symmetric() {
        let f = RateFunction::blp_exp(0.9).unwrap();
        let m = tilted_measure(&f, 0.0, &cfg()).unwrap();
        assert!(m.mean().abs() < 1e-14);
        for x in 1..5 {
            assert!((m.prob(x) - m.prob(-x)).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_two_point_weights() {
        let f = RateFunction::from_weights(0, &[3.0, 3.0]).unwrap();
        let m = tilted_measure(&f, 0.0, &cfg()).unwrap();
        assert_eq!(m.window(), (0, 1));
        assert!((m.prob(0) - 0.5).abs() < 1e-15 && (m.prob(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalization_and_positivity() {
        let f = RateFunction::zrp_constant();
        let m = tilted_measure(&f, -0.05, &cfg()).unwrap();
        let total: f64 = distribution::neumaier_sum(m.probs().iter().copied());
        assert!((total - 1.0).abs() < 1e-12);
        assert!(m.probs().iter().all(|p| *p > 0.0));
        // geometric with q = e^θ
        let q = (-0.05f64).exp();
        assert!((m.mean() - q / (1.0 - q)).abs() < 1e-10);
    }

    #[test]
    fn theta_outside_domain() {
        let f = RateFunction::zrp_constant();
        assert!(matches!(
            tilted_measure(&f, 0.0, &cfg()),
            Err(Error::ThetaOutOfDomain { .. })
        ));
        assert!(tilted_measure(&f, f64::NAN, &cfg()).is_err());
    }

    #[test]
    fn window_cap_reports_truncation_failure() {
        let f = RateFunction::zrp_constant();
        let tight = MeasureConfig {
            max_window: 50,
            ..cfg()
        };
        assert!(matches!(
            tilted_measure(&f, -0.01, &tight),
            Err(Error::TruncationFailure { .. })
        ));
    }

    #[test]
    fn telescoping_matches_window_weights() {
        let f = RateFunction::zrp_power(1.5).unwrap();
        let m = tilted_measure(&f, 0.3, &cfg()).unwrap();
        let (lo, hi) = m.window();
        for x in lo..hi {
            let a = f.log_factorial(x).unwrap();
            let b = f.log_factorial(x + 1).unwrap();
            let step = f.ln_rate(x + 1).unwrap();
            assert!(((b - a) - step).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0));
            let ratio = m.prob(x + 1) / m.prob(x);
            assert!((ratio.ln() - (0.3 - step)).abs() < 1e-12);
        }
    }
}
