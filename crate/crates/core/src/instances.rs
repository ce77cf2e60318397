//! Seeded random instances for the property suites.
//!
//! An instance is a finite support `{x_min, …, x_max}` of size 2–12 with
//! `x_min ≤ 0 < x_max`, log-weights uniform in `[−3, 3]` (turned into a rate
//! function whose untilted measure has those weights), and a convex Φ built
//! from cumulative sums of nonnegative slope increments, optionally plus a
//! kink `c + a(x − x₀)⁺ − b(x − x₀)⁻`.
//!
//! Instance `i` under seed `s` is drawn from a ChaCha8 stream seeded by `s`
//! with stream number `i`, so any single instance can be regenerated alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::convexity::{
    classify, extend_piecewise, inequality_slacks, middle_grid, verify_reduction_chain,
    Classification, Kink, PiecewiseConvexFn,
};
use crate::error::Result;
use crate::tilt::TiltConfig;
use crate::measure::{Distribution, RateFunction};

pub const MIN_SUPPORT: usize = 2;
pub const MAX_SUPPORT: usize = 12;
pub const LOG_WEIGHT_RANGE: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub index: u64,
    pub x_min: i64,
    pub log_weights: Vec<f64>,
    pub rate: RateFunction,
    pub phi: PiecewiseConvexFn,
    pub kink: Option<Kink>,
    /// A tilt at which the inequality suites evaluate the instance.
    pub theta: f64,
}

impl Instance {
    pub fn x_max(&self) -> i64 {
        self.x_min + self.log_weights.len() as i64 - 1
    }

    pub fn points(&self) -> Vec<f64> {
        (self.x_min..=self.x_max()).map(|x| x as f64).collect()
    }

    /// The measure with weights `e^{θx + w(x)}`.
    pub fn law(&self, theta: f64) -> Result<Distribution> {
        let lw: Vec<f64> = self
            .log_weights
            .iter()
            .enumerate()
            .map(|(i, w)| w + theta * (self.x_min + i as i64) as f64)
            .collect();
        Distribution::from_log_weights(self.points(), &lw)
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.phi.eval(x)
    }
}

pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn support_and_weights(rng: &mut ChaCha8Rng, min_size: usize, positive: bool) -> (i64, Vec<f64>) {
    let n = rng.random_range(min_size..=MAX_SUPPORT);
    let x_min = if positive {
        0
    } else {
        -(rng.random_range(0..=(n - 2)) as i64)
    };
    let w = (0..n)
        .map(|_| rng.random_range(-LOG_WEIGHT_RANGE..=LOG_WEIGHT_RANGE))
        .collect();
    (x_min, w)
}

/// Convex values on `x_min..x_min + n`: a random start and slope, then each
/// interior slope increment is 0 or uniform in `[0.1, 2]`. About one in five
/// draws is forced linear.
pub fn random_convex_values(rng: &mut ChaCha8Rng, x_min: i64, n: usize) -> Vec<(f64, f64)> {
    let linear = rng.random_bool(0.2);
    let mut v = rng.random_range(-2.0..2.0);
    let mut slope = rng.random_range(-2.0..2.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(((x_min + i as i64) as f64, v));
        if i > 0 && !linear && rng.random_bool(0.5) {
            slope += rng.random_range(0.1..=2.0);
        }
        v += slope;
    }
    out
}

fn random_kink(rng: &mut ChaCha8Rng, x0: f64) -> Kink {
    let b = rng.random_range(-2.0..2.0);
    let a = b + rng.random_range(0.1..=2.0);
    let c = rng.random_range(-2.0..2.0);
    Kink { a, b, x0, c }
}

/// General instance: random convex Φ with a kink added in a third of cases.
pub fn random_instance(seed: u64, index: u64) -> Result<Instance> {
    let mut rng = instance_rng(seed, index);
    let (x_min, log_weights) = support_and_weights(&mut rng, MIN_SUPPORT, false);
    build(seed, index, rng, x_min, log_weights, false)
}

/// Instance with `x_min = 0`, so `X ≥ 0` under every tilt.
pub fn positive_instance(seed: u64, index: u64) -> Result<Instance> {
    let mut rng = instance_rng(seed, index);
    let (x_min, log_weights) = support_and_weights(&mut rng, MIN_SUPPORT, true);
    build(seed, index, rng, x_min, log_weights, false)
}

/// Instance whose Φ is a single kink at an interior support point, so that
/// `P(X < x₀) P(X = x₀) P(X > x₀) > 0` and the slopes jump at `x₀`.
pub fn kinked_instance(seed: u64, index: u64) -> Result<Instance> {
    let mut rng = instance_rng(seed, index);
    let (x_min, log_weights) = support_and_weights(&mut rng, 3, false);
    build(seed, index, rng, x_min, log_weights, true)
}

fn build(
    seed: u64,
    index: u64,
    mut rng: ChaCha8Rng,
    x_min: i64,
    log_weights: Vec<f64>,
    kink_only: bool,
) -> Result<Instance> {
    let n = log_weights.len();
    let x_max = x_min + n as i64 - 1;
    let (values, kink) = if kink_only {
        let x0 = rng.random_range((x_min + 1)..x_max) as f64;
        let k = random_kink(&mut rng, x0);
        let v = (x_min..=x_max).map(|x| (x as f64, k.eval(x as f64))).collect();
        (v, Some(k))
    } else {
        let mut v = random_convex_values(&mut rng, x_min, n);
        let kink = if rng.random_bool(1.0 / 3.0) {
            let x0 = rng.random_range(x_min..=x_max) as f64;
            let k = random_kink(&mut rng, x0);
            for p in v.iter_mut() {
                p.1 += k.eval(p.0);
            }
            Some(k)
        } else {
            None
        };
        (v, kink)
    };
    let theta = rng.random_range(-1.0..=1.0);
    let phi = extend_piecewise(&values)?;
    let rate = RateFunction::from_log_weights(x_min, log_weights.clone())?;
    Ok(Instance {
        seed,
        index,
        x_min,
        log_weights,
        rate,
        phi,
        kink,
        theta,
    })
}

/// Smallest relative values seen by the randomized suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub instances: u64,
    pub seed: u64,
    /// Slacks of the covariance inequalities over their scale.
    pub min_slack: f64,
    /// The four part-moment terms over their scale.
    pub min_line: f64,
    /// Largest `|expanded − 2 Σ lines|` over scale.
    pub max_expansion_residual: f64,
    /// Smallest of `−Ĉov(X, 1/X)` and `Cov(X², |X| | X ≤ 0)`.
    pub min_conditional_sign: f64,
    /// Instances whose reduction chain did not close.
    pub chain_failures: Vec<u64>,
    /// Second differences of `G` over scale.
    pub min_second_difference: f64,
    pub misclassified: Vec<u64>,
    /// `max |line|` of the three terms that vanish when `X ≥ 0`.
    pub positive_support_max_line: f64,
    /// `|X − x₀|` slack over scale on kinked instances.
    pub min_kink_slack: f64,
}

impl VerifySummary {
    pub fn violations(&self, tol: f64) -> Vec<String> {
        let mut v = Vec::new();
        if self.min_slack < -tol {
            v.push(format!("covariance slack {:e}", self.min_slack));
        }
        if self.min_line < -1e-2 * tol {
            v.push(format!("part-moment line {:e}", self.min_line));
        }
        if self.max_expansion_residual > tol {
            v.push(format!("expansion residual {:e}", self.max_expansion_residual));
        }
        if self.min_conditional_sign < -tol {
            v.push(format!("conditional covariance sign {:e}", self.min_conditional_sign));
        }
        if !self.chain_failures.is_empty() {
            v.push(format!("reduction chain on {:?}", self.chain_failures));
        }
        if self.min_second_difference < -10.0 * tol {
            v.push(format!("second difference {:e}", self.min_second_difference));
        }
        if !self.misclassified.is_empty() {
            v.push(format!("classification on {:?}", self.misclassified));
        }
        if self.positive_support_max_line != 0.0 {
            v.push(format!("positive-support lines {:e}", self.positive_support_max_line));
        }
        if !(self.min_kink_slack > 1e-2 * tol) {
            v.push(format!("kink slack {:e}", self.min_kink_slack));
        }
        v
    }
}

struct Row {
    slack: f64,
    line: f64,
    expansion: f64,
    conditional: f64,
    chain_ok: bool,
    second: f64,
    class_ok: bool,
    positive_line: f64,
    kink_slack: f64,
}

fn verify_one(seed: u64, i: u64, cfg: &TiltConfig) -> Result<Row> {
    let inst = random_instance(seed, i)?;
    let d = inst.law(inst.theta)?;
    let s = inequality_slacks(&d, |x| inst.phi(x))?;
    let slack = (s.centered_slack / s.phi_scale)
        .min(s.square_slack / s.phi_scale)
        .min(s.abs_slack / s.abs_scale);
    let line = s.lines.iter().fold(f64::INFINITY, |m, l| m.min(l / s.abs_scale));
    let conditional = s
        .hat_cov_positive
        .map_or(0.0, |c| -c)
        .min(s.cond_cov_nonpositive.unwrap_or(0.0));
    let chain_ok = verify_reduction_chain(&d, |x| inst.phi(x), inst.kink, &[1e-3, 1e-4])?
        .check(1e-9, 1e-6)
        .is_ok();

    let grid = middle_grid(inst.x_min as f64, inst.x_max() as f64, 0.8, 21)?;
    let r = classify(&inst.rate, |x| inst.phi(x), &grid, cfg)?;
    let tol = 1e-9 * r.scale;
    let class_ok = match r.classification {
        Classification::Linear => r.max_abs_second_difference <= tol,
        Classification::StrictlyConvex => r.min_second_difference > 0.0,
        _ => false,
    };

    let pos = positive_instance(seed ^ 0x5eed, i)?;
    let ps = inequality_slacks(&pos.law(pos.theta)?, |x| pos.phi(x))?;
    let positive_line = ps.lines[1..].iter().fold(0.0f64, |m, l| m.max(l.abs()));

    let kinked = kinked_instance(seed ^ 0xc0de, i)?;
    let x0 = kinked.kink.map_or(0.0, |k| k.x0);
    let ks = inequality_slacks(&kinked.law(kinked.theta)?.shifted(x0), f64::abs)?;

    Ok(Row {
        slack,
        line,
        expansion: s.expansion_residual.abs() / s.abs_scale,
        conditional,
        chain_ok,
        second: r.min_second_difference / r.scale,
        class_ok,
        positive_line,
        kink_slack: ks.abs_slack / ks.abs_scale,
    })
}

/// Run every randomized check on `count` instances of each family.
pub fn verify_suite(count: u64, seed: u64, cfg: &TiltConfig) -> Result<VerifySummary> {
    let rows: Vec<Row> = (0..count)
        .into_par_iter()
        .map(|i| verify_one(seed, i, cfg))
        .collect::<Result<_>>()?;
    let min = |g: fn(&Row) -> f64| rows.iter().map(g).fold(f64::INFINITY, f64::min);
    let max = |g: fn(&Row) -> f64| rows.iter().map(g).fold(0.0, f64::max);
    let failing = |g: fn(&Row) -> bool| {
        rows.iter()
            .enumerate()
            .filter(|(_, r)| !g(r))
            .map(|(i, _)| i as u64)
            .collect()
    };
    Ok(VerifySummary {
        instances: count,
        seed,
        min_slack: min(|r| r.slack),
        min_line: min(|r| r.line),
        max_expansion_residual: max(|r| r.expansion),
        min_conditional_sign: min(|r| r.conditional),
        chain_failures: failing(|r| r.chain_ok),
        min_second_difference: min(|r| r.second),
        misclassified: failing(|r| r.class_ok),
        positive_support_max_line: max(|r| r.positive_line),
        min_kink_slack: min(|r| r.kink_slack),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{tilted_measure, MeasureConfig};

    #[test]
    fn reproducible() {
        let a = random_instance(7, 3).unwrap();
        let b = random_instance(7, 3).unwrap();
        assert_eq!(a.log_weights, b.log_weights);
        assert_eq!(a.phi, b.phi);
        let c = random_instance(7, 4).unwrap();
        assert_ne!(a.log_weights, c.log_weights);
    }

    #[test]
    fn shapes_within_bounds() {
        for i in 0..200 {
            let inst = random_instance(1, i).unwrap();
            let n = inst.log_weights.len();
            assert!((MIN_SUPPORT..=MAX_SUPPORT).contains(&n));
            assert!(inst.x_min <= 0 && inst.x_max() >= 1);
            assert!(inst.log_weights.iter().all(|w| w.abs() <= LOG_WEIGHT_RANGE));
        }
    }

    #[test]
    fn rate_reproduces_weights() {
        let inst = random_instance(11, 0).unwrap();
        let m = tilted_measure(&inst.rate, 0.0, &MeasureConfig::default()).unwrap();
        let d = inst.law(0.0).unwrap();
        for (x, p) in d.atoms() {
            assert!((m.prob(x as i64) - p).abs() < 1e-14);
        }
    }

    #[test]
    fn kinked_instances_have_interior_kink() {
        for i in 0..50 {
            let inst = kinked_instance(2, i).unwrap();
            let k = inst.kink.unwrap();
            assert!(k.x0 > inst.x_min as f64 && k.x0 < inst.x_max() as f64);
            assert_eq!(inst.phi.strict_points(), &[k.x0]);
        }
    }

    #[test]
    fn small_suite_is_clean() {
        let s = verify_suite(40, 3, &TiltConfig::default()).unwrap();
        assert!(s.violations(1e-10).is_empty(), "{s:?}");
        assert_eq!(s.positive_support_max_line, 0.0);
    }
}
