//! Rate functions `f` on a discrete interval and the generalized factorial
//! `f(x)!` built from them.

use serde::{Deserialize, Serialize};

use super::domain::{self, ThetaDomain};
use crate::error::{Error, Result};

/// Probe range used when a structural property of an infinite-support rate
/// (monotonicity, the bricklayer reflection identity) can only be checked
/// on finitely many points.
pub const STRUCTURE_PROBE: i64 = 64;

/// Default number of terms used by the `θ`-domain estimator.
pub const DEFAULT_PROBE_DEPTH: usize = 4096;

const BLP_REL_TOL: f64 = 1e-12;

/// The discrete interval `{x_min, …, x_max}`; `None` marks an infinite end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub x_min: Option<i64>,
    pub x_max: Option<i64>,
}

impl SupportInterval {
    pub fn new(x_min: Option<i64>, x_max: Option<i64>) -> Result<Self> {
        if let Some(lo) = x_min {
            if lo > 0 {
                return Err(Error::InvalidRate(format!("x_min = {lo} must be <= 0")));
            }
        }
        if let Some(hi) = x_max {
            if hi < 1 {
                return Err(Error::InvalidRate(format!("x_max = {hi} must be >= 1")));
            }
        }
        Ok(SupportInterval { x_min, x_max })
    }

    pub fn finite(x_min: i64, x_max: i64) -> Result<Self> {
        Self::new(Some(x_min), Some(x_max))
    }

    pub fn contains(&self, x: i64) -> bool {
        self.x_min.is_none_or(|lo| x >= lo) && self.x_max.is_none_or(|hi| x <= hi)
    }

    pub fn is_finite(&self) -> bool {
        self.x_min.is_some() && self.x_max.is_some()
    }

    /// Number of support points, `None` when infinite.
    #[allow(clippy::len_without_is_empty)] // never empty
    pub fn len(&self) -> Option<u64> {
        match (self.x_min, self.x_max) {
            (Some(lo), Some(hi)) => Some((hi - lo + 1) as u64),
            _ => None,
        }
    }

    pub fn lower_f64(&self) -> f64 {
        self.x_min.map_or(f64::NEG_INFINITY, |v| v as f64)
    }

    pub fn upper_f64(&self) -> f64 {
        self.x_max.map_or(f64::INFINITY, |v| v as f64)
    }

    fn out_of_support(&self, x: i64) -> Error {
        Error::OutOfSupport {
            x,
            lo: self.x_min.map_or("-inf".into(), |v| v.to_string()),
            hi: self.x_max.map_or("+inf".into(), |v| v.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    Zrp,
    Blp,
    Generic,
}

/// Where the values of `f` come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RateFamily {
    /// `f(x) = 1{x ≥ 1}` on `{0, 1, …}`.
    ZrpConstant,
    /// `f(x) = x` on `{0, 1, …}`.
    ZrpLinear,
    /// `f(x) = x^p` on `{0, 1, …}`, with `f(0) = 0`.
    ZrpPower(f64),
    /// `f(x) = exp(β(x − 1/2))` on all of ℤ.
    BlpExp(f64),
    /// Tabulated `f(x)` for `x = x_min, x_min + 1, …`.
    Table { x_min: i64, values: Vec<f64> },
    /// Tabulated `log(1/f(x)!)` up to an additive constant.
    LogWeights { x_min: i64, log_weights: Vec<f64> },
}

/// A rate function together with its support, kind and `θ`-domain.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    support: SupportInterval,
    kind: RateKind,
    family: RateFamily,
    domain: ThetaDomain,
}

impl RateFunction {
    pub fn zrp_constant() -> Self {
        Self::build_builtin(RateKind::Zrp, RateFamily::ZrpConstant, (f64::NEG_INFINITY, 0.0))
            .expect("builtin zrp-constant is valid")
    }

    pub fn zrp_linear() -> Self {
        Self::build_builtin(
            RateKind::Zrp,
            RateFamily::ZrpLinear,
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .expect("builtin zrp-linear is valid")
    }

    pub fn zrp_power(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidRate(format!(
                "zrp-power exponent must be finite and >= 0, got {p}"
            )));
        }
        let upper = if p > 0.0 { f64::INFINITY } else { 0.0 };
        Self::build_builtin(RateKind::Zrp, RateFamily::ZrpPower(p), (f64::NEG_INFINITY, upper))
    }

    /// Bricklayer rate `exp(β(x − 1/2))`. `β = 0` gives `f ≡ 1`, whose
    /// stationary weights are not normalizable; the returned domain is then
    /// empty and only the constant flux is available.
    pub fn blp_exp(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidRate(format!(
                "blp-exp needs a finite beta >= 0, got {beta}"
            )));
        }
        let dom = if beta > 0.0 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (0.0, 0.0)
        };
        Self::build_builtin(RateKind::Blp, RateFamily::BlpExp(beta), dom)
    }

    /// Tabulated rate on the finite interval `{x_min, …, x_min + len − 1}`.
    pub fn from_table(kind: RateKind, x_min: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidRate("empty rate table".into()));
        }
        let x_max = x_min + values.len() as i64 - 1;
        let support = SupportInterval::finite(x_min, x_max)?;
        if kind == RateKind::Blp {
            return Err(Error::InvalidRate(
                "bricklayer rates live on all of Z and cannot be tabulated".into(),
            ));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidRate(format!(
                "f({}) = {v} is not a finite nonnegative number",
                x_min + i as i64
            )));
        }
        Self::finish(support, kind, RateFamily::Table { x_min, values }, None)
    }

    /// Generic weights: `w(x) ∝ 1/f(x)!` given as logarithms on a finite
    /// interval.
    pub fn from_log_weights(x_min: i64, log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::InvalidRate("empty weight table".into()));
        }
        let x_max = x_min + log_weights.len() as i64 - 1;
        let support = SupportInterval::finite(x_min, x_max)?;
        if let Some((i, _)) = log_weights.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidRate(format!(
                "weight at x = {} is zero or not finite",
                x_min + i as i64
            )));
        }
        Self::finish(
            support,
            RateKind::Generic,
            RateFamily::LogWeights { x_min, log_weights },
            None,
        )
    }

    /// Plain (positive) generic weights.
    pub fn from_weights(x_min: i64, weights: &[f64]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidRate(format!("weight {w} is not positive")));
        }
        Self::from_log_weights(x_min, weights.iter().map(|w| w.ln()).collect())
    }

    /// Replace the `θ`-domain by known exact values.
    pub fn with_domain(mut self, lower: f64, upper: f64) -> Result<Self> {
        let fresh = domain::estimate(&self, DEFAULT_PROBE_DEPTH, Some((lower, upper)))?;
        self.domain = fresh;
        Ok(self)
    }

    fn build_builtin(kind: RateKind, family: RateFamily, exact: (f64, f64)) -> Result<Self> {
        let support = match kind {
            RateKind::Zrp => SupportInterval::new(Some(0), None)?,
            _ => SupportInterval::new(None, None)?,
        };
        Self::finish(support, kind, family, Some(exact))
    }

    fn finish(
        support: SupportInterval,
        kind: RateKind,
        family: RateFamily,
        exact: Option<(f64, f64)>,
    ) -> Result<Self> {
        let mut rf = RateFunction {
            support,
            kind,
            family,
            domain: ThetaDomain::placeholder(),
        };
        rf.validate()?;
        rf.domain = domain::estimate(&rf, DEFAULT_PROBE_DEPTH, exact)?;
        Ok(rf)
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.probe_range();
        match self.kind {
            RateKind::Zrp => {
                if self.support.x_min != Some(0) {
                    return Err(Error::InvalidRate("zero range rates need x_min = 0".into()));
                }
                let f0 = self.rate(0)?;
                let f1 = self.rate(1)?;
                if !(f0 == 0.0 && f1 > 0.0) {
                    return Err(Error::InvalidRate(format!(
                        "zero range rates need f(0) = 0 < f(1), got f(0) = {f0}, f(1) = {f1}"
                    )));
                }
                self.check_nondecreasing(lo, hi)?;
                for x in 1..=hi {
                    if self.rate(x)? <= 0.0 {
                        return Err(Error::InvalidRate(format!("f({x}) must be positive")));
                    }
                }
            }
            RateKind::Blp => {
                if self.support.x_min.is_some() || self.support.x_max.is_some() {
                    return Err(Error::InvalidRate("bricklayer rates live on all of Z".into()));
                }
                self.check_nondecreasing(lo, hi)?;
                for x in lo..=hi {
                    let prod = self.rate(x)? * self.rate(1 - x)?;
                    if (prod - 1.0).abs() > BLP_REL_TOL {
                        return Err(Error::InvalidRate(format!(
                            "bricklayer constraint f(x) f(1-x) = 1 fails at x = {x}: {prod}"
                        )));
                    }
                }
            }
            RateKind::Generic => {
                if let RateFamily::Table { .. } = self.family {
                    let start = lo + 1;
                    for x in start..=hi {
                        if self.rate(x)? <= 0.0 {
                            return Err(Error::InvalidRate(format!("f({x}) must be positive")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_nondecreasing(&self, lo: i64, hi: i64) -> Result<()> {
        let mut prev = self.rate(lo)?;
        for x in lo + 1..=hi {
            let cur = self.rate(x)?;
            if cur < prev {
                return Err(Error::InvalidRate(format!(
                    "f must be nondecreasing: f({}) = {prev} > f({x}) = {cur}",
                    x - 1
                )));
            }
            prev = cur;
        }
        Ok(())
    }

    /// Finite range on which structural checks run.
    pub fn probe_range(&self) -> (i64, i64) {
        (
            self.support.x_min.unwrap_or(-STRUCTURE_PROBE),
            self.support.x_max.unwrap_or(STRUCTURE_PROBE),
        )
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    pub fn family(&self) -> &RateFamily {
        &self.family
    }

    pub fn domain(&self) -> &ThetaDomain {
        &self.domain
    }

    /// `f ≡ 1` bricklayer rate (flux is the constant 2, no stationary measure).
    pub fn is_constant_one_blp(&self) -> bool {
        matches!(self.family, RateFamily::BlpExp(b) if b == 0.0)
    }

    /// `f(x)`.
    pub fn rate(&self, x: i64) -> Result<f64> {
        if !self.support.contains(x) {
            return Err(self.support.out_of_support(x));
        }
        Ok(match &self.family {
            RateFamily::ZrpConstant => {
                if x >= 1 {
                    1.0
                } else {
                    0.0
                }
            }
            RateFamily::ZrpLinear => x as f64,
            RateFamily::ZrpPower(p) => {
                if x == 0 {
                    0.0
                } else {
                    (x as f64).powf(*p)
                }
            }
            RateFamily::BlpExp(beta) => (beta * (x as f64 - 0.5)).exp(),
            RateFamily::Table { x_min, values } => values[(x - x_min) as usize],
            RateFamily::LogWeights {
                x_min,
                log_weights,
            } => {
                if x == *x_min {
                    return Err(Error::InvalidRate(format!(
                        "f({x}) at the left end is not determined by generic weights"
                    )));
                }
                let i = (x - x_min) as usize;
                (log_weights[i - 1] - log_weights[i]).exp()
            }
        })
    }

    /// `log f(x)`, with `SingularRate` when `f(x) = 0`.
    pub fn ln_rate(&self, x: i64) -> Result<f64> {
        if !self.support.contains(x) {
            return Err(self.support.out_of_support(x));
        }
        let v = match &self.family {
            RateFamily::ZrpLinear if x > 0 => (x as f64).ln(),
            RateFamily::ZrpPower(p) if x > 0 => p * (x as f64).ln(),
            RateFamily::BlpExp(beta) => beta * (x as f64 - 0.5),
            RateFamily::LogWeights {
                x_min,
                log_weights,
            } if x > *x_min => {
                let i = (x - x_min) as usize;
                log_weights[i - 1] - log_weights[i]
            }
            _ => self.rate(x)?.ln(),
        };
        if v == f64::NEG_INFINITY {
            return Err(Error::SingularRate { x });
        }
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("log f({x}) = {v}")));
        }
        Ok(v)
    }

    /// `log f(x)!` by the telescoping recurrences
    /// `log f(x)! = log f(x−1)! + log f(x)` (upwards from 0) and
    /// `log f(x)! = log f(x+1)! − log f(x+1)` (downwards from 0).
    pub fn log_factorial(&self, x: i64) -> Result<f64> {
        if !self.support.contains(x) {
            return Err(self.support.out_of_support(x));
        }
        let mut acc = 0.0;
        if x > 0 {
            for y in 1..=x {
                acc += self.ln_rate(y)?;
            }
        } else {
            for y in (x + 1..=0).rev() {
                acc -= self.ln_rate(y)?;
            }
        }
        Ok(acc)
    }
}

/// `log f(x)!` for a rate function (free-function form).
pub fn log_factorial_product(f: &RateFunction, x: i64) -> Result<f64> {
    f.log_factorial(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_at_zero_is_one() {
        for f in [
            RateFunction::zrp_constant(),
            RateFunction::zrp_linear(),
            RateFunction::blp_exp(0.7).unwrap(),
        ] {
            assert_eq!(f.log_factorial(0).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_rate_factorial_vanishes() {
        let f = RateFunction::zrp_constant();
        assert_eq!(f.log_factorial(5).unwrap(), 0.0);
    }

    #[test]
    fn linear_rate_factorial() {
        let f = RateFunction::zrp_linear();
        let direct = (1.0f64 * 2.0 * 3.0).ln();
        assert!((f.log_factorial(3).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn blp_factorial_is_quadratic() {
        let beta = 0.8;
        let f = RateFunction::blp_exp(beta).unwrap();
        for x in -6..=6 {
            let expected = beta * (x * x) as f64 / 2.0;
            assert!((f.log_factorial(x).unwrap() - expected).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn out_of_support_and_singular() {
        let f = RateFunction::zrp_linear();
        assert!(matches!(f.log_factorial(-1), Err(Error::OutOfSupport { .. })));
        let g = RateFunction::from_table(RateKind::Generic, -1, vec![1.0, 0.0, 2.0]).unwrap_err();
        assert!(matches!(g, Error::InvalidRate(_)));
    }

    #[test]
    fn singular_rate_detected_in_product() {
        // zrp table with a zero at x = 0 only: products for x >= 1 are fine
        let f = RateFunction::from_table(RateKind::Zrp, 0, vec![0.0, 1.0, 2.0]).unwrap();
        assert!((f.log_factorial(2).unwrap() - 2f64.ln()).abs() < 1e-15);
        let err = f.ln_rate(0).unwrap_err();
        assert_eq!(err, Error::SingularRate { x: 0 });
    }

    #[test]
    fn zrp_validation() {
        assert!(RateFunction::from_table(RateKind::Zrp, 0, vec![0.0, 2.0, 1.0]).is_err());
        assert!(RateFunction::from_table(RateKind::Zrp, 0, vec![0.5, 1.0]).is_err());
        assert!(RateFunction::from_table(RateKind::Zrp, -1, vec![1.0, 0.0, 1.0]).is_err());
        assert!(RateFunction::from_table(RateKind::Blp, 0, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn support_bounds() {
        assert!(SupportInterval::new(Some(1), None).is_err());
        assert!(SupportInterval::new(Some(0), Some(0)).is_err());
        let s = SupportInterval::finite(-2, 3).unwrap();
        assert_eq!(s.len(), Some(6));
        assert!(s.contains(-2) && s.contains(3) && !s.contains(4));
    }

    #[test]
    fn generic_weight_rates_telescope() {
        let f = RateFunction::from_weights(-1, &[2.0, 1.0, 4.0]).unwrap();
        // w(x) ∝ 1/f(x)!, so f(x) = w(x-1)/w(x)
        assert!((f.rate(0).unwrap() - 2.0).abs() < 1e-15);
        assert!((f.rate(1).unwrap() - 0.25).abs() < 1e-15);
        assert!(f.rate(-1).is_err());
        assert!((f.log_factorial(-1).unwrap() - (-(2f64.ln()))).abs() < 1e-15);
    }
}
