//! Finite discrete distributions on the real line with compensated moment
//! evaluation.

use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier-compensated sum.
pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `log Σ exp(v)` with max shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + neumaier_sum(values.iter().map(|v| (v - max).exp())).ln()
}

/// A probability distribution on finitely many, strictly increasing points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    points: Vec<f64>,
    probs: Vec<f64>,
}

impl Distribution {
    /// Build from points and nonnegative masses; masses are renormalized.
    /// Single-atom distributions are rejected.
    pub fn new(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if points.len() != probs.len() {
            return Err(Error::Config(format!(
                "{} points but {} probabilities",
                points.len(),
                probs.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("distribution point".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("points must be strictly increasing".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config("probabilities must be finite and >= 0".into()));
        }
        let total = neumaier_sum(probs.iter().copied());
        if !(total > 0.0) {
            return Err(Error::Degenerate("total mass is zero".into()));
        }
        let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
        if probs.iter().filter(|p| **p > 0.0).count() < 2 {
            return Err(Error::Degenerate("mass sits on a single point".into()));
        }
        Ok(Distribution { points, probs })
    }

    /// From unnormalized log-weights, normalized with a max shift.
    pub fn from_log_weights(points: Vec<f64>, log_weights: &[f64]) -> Result<Self> {
        let lse = log_sum_exp(log_weights);
        if !lse.is_finite() {
            return Err(Error::NonFinite("log normalizer".into()));
        }
        let probs = log_weights.iter().map(|w| (w - lse).exp()).collect();
        Self::new(points, probs)
    }

    /// Contiguous lattice `{lo, lo + 1, …}`.
    pub fn lattice(lo: i64, probs: Vec<f64>) -> Result<Self> {
        let points = (0..probs.len()).map(|i| (lo + i as i64) as f64).collect();
        Self::new(points, probs)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of atoms carrying positive mass.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|p| **p > 0.0).count()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.probs.iter().copied())
    }

    /// `E φ(X)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, phi: F) -> Result<f64> {
        let v = neumaier_sum(self.atoms().map(|(x, p)| if p == 0.0 { 0.0 } else { phi(x) * p }));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("expectation".into()))
        }
    }

    /// `Cov(φ(X), ψ(X))`, evaluated as the centered cross moment.
    pub fn cov<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(&self, phi: F, psi: G) -> Result<f64> {
        let a = self.expect(&phi)?;
        let b = self.expect(&psi)?;
        self.expect(|x| (phi(x) - a) * (psi(x) - b))
    }

    pub fn mean(&self) -> f64 {
        neumaier_sum(self.atoms().map(|(x, p)| x * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        neumaier_sum(self.atoms().map(|(x, p)| (x - m) * (x - m) * p))
    }

    /// Reweight by `e^{θx}` and renormalize.
    pub fn tilt(&self, theta: f64) -> Result<Distribution> {
        let lw: Vec<f64> = self
            .atoms()
            .map(|(x, p)| if p > 0.0 { p.ln() + theta * x } else { f64::NEG_INFINITY })
            .collect();
        Self::from_log_weights(self.points.clone(), &lw)
    }

    /// Law of `X − c`.
    pub fn shifted(&self, c: f64) -> Distribution {
        Distribution {
            points: self.points.iter().map(|x| x - c).collect(),
            probs: self.probs.clone(),
        }
    }

    /// `P(X > y)`.
    pub fn tail(&self, y: f64) -> f64 {
        let start = self.points.partition_point(|x| *x <= y);
        neumaier_sum(self.probs[start..].iter().copied())
    }

    /// Index of the atom selected by inverse CDF at `u ∈ [0, 1)`.
    pub fn quantile_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    /// Probability of the point `x` (0 if absent).
    pub fn prob_at(&self, x: f64) -> f64 {
        match self.points.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform3() -> Distribution {
        Distribution::lattice(-1, vec![1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn constant_expectation() {
        let d = Distribution::lattice(0, vec![0.2, 0.5, 0.3]).unwrap();
        assert!((d.expect(|_| 3.5).unwrap() - 3.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_second_moment() {
        let d = uniform3();
        assert!((d.expect(|x| x * x).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn covariances() {
        let d = uniform3();
        assert!(d.cov(|x| x, |x| x * x).unwrap().abs() < 1e-16);
        assert_eq!(d.cov(|_| 4.0, |x| x).unwrap(), 0.0);
        let e = Distribution::lattice(0, vec![0.1, 0.6, 0.3]).unwrap();
        let a = e.cov(|x| x.exp(), |x| x * x).unwrap();
        let b = e.cov(|x| x * x, |x| x.exp()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_atom_rejected() {
        assert!(matches!(
            Distribution::lattice(0, vec![0.0, 1.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn tails_and_quantiles() {
        let d = Distribution::lattice(0, vec![0.25, 0.25, 0.5]).unwrap();
        assert!((d.tail(0.0) - 0.75).abs() < 1e-15);
        assert!((d.tail(-3.0) - 1.0).abs() < 1e-15);
        assert_eq!(d.tail(2.0), 0.0);
        assert_eq!(d.quantile_index(0.1), 0);
        assert_eq!(d.quantile_index(0.3), 1);
        assert_eq!(d.quantile_index(0.99), 2);
    }

    #[test]
    fn tilt_group_property() {
        let d = Distribution::lattice(-2, vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let a = d.tilt(0.4).unwrap().tilt(-1.1).unwrap();
        let b = d.tilt(-0.7).unwrap();
        for (p, q) in a.probs().iter().zip(b.probs()) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
