//! The admissible tilt interval `(θ̲, θ̄)`.
//!
//! On a finite side the bound is exactly `±∞`. On an infinite side
//! `θ̄ = log liminf (f(x)!)^{1/x}` and `θ̲ = log limsup (f(−x)!)^{−1/x}`,
//! i.e. the liminf of `log f(x)! / x` and the limsup of `−log f(−x)! / x`.
//! These are estimated from the first `probe_depth` terms: the sequence is
//! sampled at `x = 1, 2, 4, …` and declared divergent when its doubling
//! increments stop decaying.

use serde::Serialize;

use super::rate::RateFunction;
use crate::error::{Error, Result};

/// How a bound was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    /// The side of the support is finite.
    FiniteSupport,
    /// Taken from the finite-term estimator.
    Estimated,
    /// Supplied as a known exact value.
    Exact,
}

/// Finite-term estimate for one infinite side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideEstimate {
    /// The numeric estimate (possibly ±∞ when divergence was detected).
    pub estimate: f64,
    /// `s(2^k) − s(2^{k−1})` for the normalized sequence `s`.
    pub doubling_increments: Vec<f64>,
    /// The increments have stopped shrinking.
    pub diverging: bool,
    /// The last two increments are below `1e-6` in magnitude.
    pub slope_stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaDomain {
    pub lower: f64,
    pub upper: f64,
    pub lower_source: BoundSource,
    pub upper_source: BoundSource,
    pub lower_probe: Option<SideEstimate>,
    pub upper_probe: Option<SideEstimate>,
}

impl ThetaDomain {
    pub(crate) fn placeholder() -> Self {
        ThetaDomain {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            lower_source: BoundSource::FiniteSupport,
            upper_source: BoundSource::FiniteSupport,
            lower_probe: None,
            upper_probe: None,
        }
    }

    /// `θ̲ < 0 < θ̄`, the condition under which the untilted measure exists.
    pub fn contains_zero(&self) -> bool {
        self.lower < 0.0 && 0.0 < self.upper
    }

    pub fn require_admissible(&self) -> Result<()> {
        if self.contains_zero() {
            Ok(())
        } else {
            Err(Error::InadmissibleDomain {
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    /// Whether `θ` lies in `(θ̲ + margin, θ̄ − margin)`.
    pub fn contains(&self, theta: f64, margin: f64) -> bool {
        theta.is_finite() && theta > self.lower + margin && theta < self.upper - margin
    }

    pub fn is_empty(&self) -> bool {
        self.lower >= self.upper
    }
}

/// `θ`-domain of `f` estimated from `probe_depth` terms per infinite side.
pub fn theta_domain(f: &RateFunction, probe_depth: usize) -> Result<ThetaDomain> {
    let known = f.domain();
    let exact = (known.lower_source == BoundSource::Exact || known.upper_source == BoundSource::Exact)
        .then_some((known.lower, known.upper));
    estimate(f, probe_depth, exact)
}

pub(crate) fn estimate(
    f: &RateFunction,
    probe_depth: usize,
    exact: Option<(f64, f64)>,
) -> Result<ThetaDomain> {
    let support = f.support();
    let depth = probe_depth.max(4);

    let (upper, upper_source, upper_probe) = match support.x_max {
        Some(_) => (f64::INFINITY, BoundSource::FiniteSupport, None),
        None => {
            let probe = probe_side(f, depth, Side::Upper)?;
            match exact {
                Some((_, hi)) => (hi, BoundSource::Exact, Some(probe)),
                None => (probe.estimate, BoundSource::Estimated, Some(probe)),
            }
        }
    };
    let (lower, lower_source, lower_probe) = match support.x_min {
        Some(_) => (f64::NEG_INFINITY, BoundSource::FiniteSupport, None),
        None => {
            let probe = probe_side(f, depth, Side::Lower)?;
            match exact {
                Some((lo, _)) => (lo, BoundSource::Exact, Some(probe)),
                None => (probe.estimate, BoundSource::Estimated, Some(probe)),
            }
        }
    };

    // An empty interval only arises for non-normalizable weights; callers that
    // need the constant-flux special case (f ≡ 1 bricklayer) build it with
    // exact bounds.
    if lower >= upper && exact.is_none() {
        return Err(Error::InadmissibleDomain { lower, upper });
    }
    Ok(ThetaDomain {
        lower,
        upper,
        lower_source,
        upper_source,
        lower_probe,
        upper_probe,
    })
}

#[derive(Clone, Copy)]
enum Side {
    Upper,
    Lower,
}

fn probe_side(f: &RateFunction, depth: usize, side: Side) -> Result<SideEstimate> {
    // s(x) = log f(x)!/x (upper) or t(x) = -log f(-x)!/x (lower), x = 1..depth
    let mut seq = Vec::with_capacity(depth);
    let mut acc = 0.0f64;
    for n in 1..=depth as i64 {
        match side {
            Side::Upper => acc += f.ln_rate(n)?,
            Side::Lower => acc -= f.ln_rate(1 - n)?,
        }
        let v = match side {
            Side::Upper => acc / n as f64,
            Side::Lower => -acc / n as f64,
        };
        seq.push(v);
    }

    let mut increments = Vec::new();
    let mut k = 1usize;
    while 2 * k <= depth {
        increments.push(seq[2 * k - 1] - seq[k - 1]);
        k *= 2;
    }

    // Upper side diverges to +inf, lower side to -inf.
    let sign = match side {
        Side::Upper => 1.0,
        Side::Lower => -1.0,
    };
    let diverging = match increments.as_slice() {
        [.., prev, last] => {
            let (p, l) = (sign * prev, sign * last);
            l > 1e-9 && p > 1e-9 && l >= 0.75 * p
        }
        _ => false,
    };
    let slope_stable = match increments.as_slice() {
        [.., prev, last] => prev.abs() < 1e-6 && last.abs() < 1e-6,
        _ => false,
    };

    let tail = &seq[depth / 2..];
    let estimate = if diverging {
        sign * f64::INFINITY
    } else {
        match side {
            Side::Upper => tail.iter().copied().fold(f64::INFINITY, f64::min),
            Side::Lower => tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    };

    Ok(SideEstimate {
        estimate,
        doubling_increments: increments,
        diverging,
        slope_stable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::rate::RateKind;

    #[test]
    fn finite_support_is_unbounded() {
        let f = RateFunction::from_table(RateKind::Zrp, 0, (0..=10).map(|x| x as f64).collect())
            .unwrap();
        let d = theta_domain(&f, 256).unwrap();
        assert_eq!(d.lower, f64::NEG_INFINITY);
        assert_eq!(d.upper, f64::INFINITY);
        assert_eq!(d.upper_source, BoundSource::FiniteSupport);
    }

    #[test]
    fn constant_rate_upper_bound_is_zero() {
        let f = RateFunction::zrp_constant();
        let d = theta_domain(&f, 512).unwrap();
        assert_eq!(d.upper, 0.0);
        let probe = d.upper_probe.clone().unwrap();
        assert_eq!(probe.estimate, 0.0);
        assert!(!probe.diverging);
        assert!(probe.slope_stable);
        assert!(!d.contains_zero());
        assert!(d.require_admissible().is_err());
    }

    #[test]
    fn linear_rate_upper_bound_is_infinite() {
        let f = RateFunction::zrp_linear();
        let d = theta_domain(&f, 4096).unwrap();
        assert_eq!(d.upper, f64::INFINITY);
        let probe = d.upper_probe.clone().unwrap();
        assert!(probe.diverging);
        assert_eq!(probe.estimate, f64::INFINITY);
    }

    #[test]
    fn blp_both_sides_diverge() {
        let f = RateFunction::blp_exp(1.0).unwrap();
        let d = f.domain();
        assert!(d.lower_probe.as_ref().unwrap().diverging);
        assert!(d.upper_probe.as_ref().unwrap().diverging);
        assert!(d.contains_zero());
    }

    #[test]
    fn estimator_agrees_with_exact_bounds_for_builtins() {
        for f in [
            RateFunction::zrp_constant(),
            RateFunction::zrp_linear(),
            RateFunction::zrp_power(1.5).unwrap(),
            RateFunction::zrp_power(0.5).unwrap(),
        ] {
            let d = f.domain();
            let probe = d.upper_probe.as_ref().unwrap();
            assert_eq!(probe.estimate, d.upper, "{:?}", f.family());
        }
    }

    #[test]
    fn constant_one_blp_has_empty_domain() {
        let f = RateFunction::blp_exp(0.0).unwrap();
        assert!(f.domain().is_empty());
        assert!(f.is_constant_one_blp());
    }
}
