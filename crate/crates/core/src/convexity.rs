//! Convexity of `G(ρ) = E^{θ(ρ)} Φ(X)` in the density `ρ`.
//!
//! For convex `Φ`, `G″(ρ) = S(θ) / Var³` where `S` is the covariance
//! expression
//!
//! ```text
//! S = Cov(Φ̃·X, X)·Cov(X, X) − Cov(Φ, X)·Cov(X̃·X, X)      (centered Φ̃, X̃)
//!   = Cov(Φ, X²)·Cov(X, X) − Cov(Φ, X)·Cov(X², X)
//! ```
//!
//! and nonnegativity of `S` reduces, via kink functions
//! `c + a(x − x₀)⁺ − b(x − x₀)⁻`, to the case `Φ = |X|`, whose slack splits
//! into four terms built from positive/negative-part moments
//! `P_i = E (X⁺)^i`, `N_i = E (X⁻)^i`. This module evaluates every one of
//! these quantities on concrete distributions so that each step can be
//! checked numerically.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{Distribution, RateFunction, TiltedMeasure};
use crate::tilt::{self, TiltConfig};

/// Relative threshold for an upward slope jump to count as a strict point.
pub const SLOPE_JUMP_REL_EPS: f64 = 1e-9;

/// Φ on a finite, strictly increasing point set, extended piecewise
/// linearly between neighbouring points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseConvexFn {
    points: Vec<(f64, f64)>,
    slopes: Vec<f64>,
    strict_points: Vec<f64>,
}

impl PiecewiseConvexFn {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Interior points where the slope jumps upward.
    pub fn strict_points(&self) -> &[f64] {
        &self.strict_points
    }

    pub fn is_linear(&self) -> bool {
        self.strict_points.is_empty()
    }

    /// Value of the extension; `NaN` outside the hull of the points.
    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        let i = pts.partition_point(|p| p.0 < x);
        if i < pts.len() && pts[i].0 == x {
            return pts[i].1;
        }
        if i == 0 || i == pts.len() {
            return f64::NAN;
        }
        let (x0, y0) = pts[i - 1];
        y0 + self.slopes[i - 1] * (x - x0)
    }

    pub fn max_abs_value(&self) -> f64 {
        self.points.iter().map(|p| p.1.abs()).fold(0.0, f64::max)
    }
}

/// Slopes and strict points of a piecewise-linear function; `Err` carries the
/// first point where the slope drops beyond tolerance.
fn slope_analysis(points: &[(f64, f64)]) -> std::result::Result<(Vec<f64>, Vec<f64>), Error> {
    let slopes: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    let mut strict = Vec::new();
    for i in 1..slopes.len() {
        let (left, right) = (slopes[i - 1], slopes[i]);
        let dx = (points[i].0 - points[i - 1].0).min(points[i + 1].0 - points[i].0);
        let value_scale =
            (points[i - 1].1.abs() + points[i].1.abs() + points[i + 1].1.abs()) / dx;
        let scale = left.abs().max(right.abs()).max(value_scale);
        let jump = right - left;
        if jump > SLOPE_JUMP_REL_EPS * scale {
            strict.push(points[i].0);
        } else if jump < -SLOPE_JUMP_REL_EPS * scale {
            return Err(Error::ConvexityViolation {
                x: points[i].0,
                left,
                right,
            });
        }
    }
    Ok((slopes, strict))
}

fn sorted_points(values: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let mut pts = values.to_vec();
    if pts.len() < 2 {
        return Err(Error::Config("need at least two support points".into()));
    }
    if pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::NonFinite("function value".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Config("duplicate support point".into()));
    }
    Ok(pts)
}

/// Extend values on the support to a convex piecewise-linear function.
pub fn extend_piecewise(values: &[(f64, f64)]) -> Result<PiecewiseConvexFn> {
    let points = sorted_points(values)?;
    let (slopes, strict_points) = slope_analysis(&points)?;
    Ok(PiecewiseConvexFn {
        points,
        slopes,
        strict_points,
    })
}

/// Shape of a function on its support points.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Linear,
    StrictlyConvex { strict_points: Vec<f64> },
    StrictlyConcave { strict_points: Vec<f64> },
    Neither,
}

pub fn shape_of(values: &[(f64, f64)]) -> Result<Shape> {
    let points = sorted_points(values)?;
    if let Ok((_, strict)) = slope_analysis(&points) {
        return Ok(if strict.is_empty() {
            Shape::Linear
        } else {
            Shape::StrictlyConvex {
                strict_points: strict,
            }
        });
    }
    let negated: Vec<(f64, f64)> = points.iter().map(|(x, v)| (*x, -v)).collect();
    match slope_analysis(&negated) {
        Ok((_, strict)) => Ok(Shape::StrictlyConcave {
            strict_points: strict,
        }),
        Err(_) => Ok(Shape::Neither),
    }
}

/// Kink function `c + a(x − x₀)⁺ − b(x − x₀)⁻` with `a > b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kink {
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub c: f64,
}

impl Kink {
    pub fn new(a: f64, b: f64, x0: f64, c: f64) -> Result<Self> {
        if !(a > b) {
            return Err(Error::Config(format!("kink needs a > b, got a = {a}, b = {b}")));
        }
        Ok(Kink { a, b, x0, c })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.x0;
        self.c + self.a * d.max(0.0) - self.b * (-d).max(0.0)
    }

    /// `A > 0` with `A·φ(x) + B·x + C = |x − x₀|`.
    pub fn normalizing_factor(&self) -> f64 {
        2.0 / (self.a - self.b)
    }
}

// ---------------------------------------------------------------------------
// covariance slacks

/// `Cov(Φ̃·X, X)·Cov(X, X) − Cov(Φ, X)·Cov(X̃·X, X)`.
pub fn centered_slack<F: Fn(f64) -> f64>(d: &Distribution, phi: F) -> Result<f64> {
    let e_phi = d.expect(&phi)?;
    let m = d.mean();
    let var = d.variance();
    let a = d.cov(|x| (phi(x) - e_phi) * x, |x| x)?;
    let b = d.cov(&phi, |x| x)?;
    let c = d.cov(|x| (x - m) * x, |x| x)?;
    Ok(a * var - b * c)
}

/// `Cov(Φ, X²)·Cov(X, X) − Cov(Φ, X)·Cov(X², X)`.
pub fn square_slack<F: Fn(f64) -> f64>(d: &Distribution, phi: F) -> Result<f64> {
    let var = d.variance();
    let a = d.cov(&phi, |x| x * x)?;
    let b = d.cov(&phi, |x| x)?;
    let c = d.cov(|x| x * x, |x| x)?;
    Ok(a * var - b * c)
}

/// `Cov(|X|, X²)·Cov(X, X) − Cov(|X|, X)·Cov(X², X)`.
pub fn abs_slack(d: &Distribution) -> Result<f64> {
    square_slack(d, f64::abs)
}

/// `(P₁, P₂, P₃)` and `(N₁, N₂, N₃)`.
pub fn part_moments(d: &Distribution) -> Result<([f64; 3], [f64; 3])> {
    let mut p = [0.0; 3];
    let mut n = [0.0; 3];
    for i in 0..3 {
        let k = (i + 1) as i32;
        p[i] = d.expect(|x| x.max(0.0).powi(k))?;
        n[i] = d.expect(|x| (-x).max(0.0).powi(k))?;
    }
    Ok((p, n))
}

/// The four nonnegative terms whose sum is half the expanded `|X|` slack.
pub fn part_lines(p: [f64; 3], n: [f64; 3]) -> [f64; 4] {
    let [p1, p2, p3] = p;
    let [n1, n2, n3] = n;
    [
        n1 * (p3 * p1 - p2 * p2),
        p1 * (n3 * n1 - n2 * n2),
        p2 * n3 - p1 * p1 * n3 - p2 * n2 * n1,
        p3 * n2 - p3 * n1 * n1 - p2 * p1 * n2,
    ]
}

/// The `|X|` slack written directly in the part moments.
pub fn expanded_abs_slack(p: [f64; 3], n: [f64; 3]) -> f64 {
    let [p1, p2, p3] = p;
    let [n1, n2, n3] = n;
    let lhs = (p3 + n3 - (p1 + n1) * (p2 + n2)) * (p2 + n2 - (p1 - n1) * (p1 - n1));
    let rhs = (p2 - n2 - (p1 + n1) * (p1 - n1)) * (p3 - n3 - (p2 + n2) * (p1 - n1));
    lhs - rhs
}

/// `Ĉov(X, 1/X)` under `Ê(·) = E(· X² | X > 0) / E(X² | X > 0)`; `None`
/// when `P(X > 0) = 0`.
pub fn hat_cov_positive(d: &Distribution) -> Result<Option<f64>> {
    let pos: f64 = d.atoms().filter(|(x, _)| *x > 0.0).map(|(_, p)| p).sum();
    if pos == 0.0 {
        return Ok(None);
    }
    let w: Vec<(f64, f64)> = d
        .atoms()
        .filter(|(x, p)| *x > 0.0 && *p > 0.0)
        .map(|(x, p)| (x, p * x * x))
        .collect();
    let total: f64 = w.iter().map(|(_, q)| q).sum();
    let ex: f64 = w.iter().map(|(x, q)| x * q).sum::<f64>() / total;
    let einv: f64 = w.iter().map(|(x, q)| q / x).sum::<f64>() / total;
    Ok(Some(1.0 - ex * einv))
}

/// `Cov(X², |X| | X ≤ 0)`; `None` when `P(X ≤ 0) = 0`.
pub fn cond_cov_nonpositive(d: &Distribution) -> Result<Option<f64>> {
    let atoms: Vec<(f64, f64)> = d.atoms().filter(|(x, _)| *x <= 0.0).collect();
    let mass: f64 = atoms.iter().map(|(_, p)| p).sum();
    if mass == 0.0 {
        return Ok(None);
    }
    let e = |g: &dyn Fn(f64) -> f64| atoms.iter().map(|(x, p)| g(*x) * p).sum::<f64>() / mass;
    let a = e(&|x| x * x);
    let b = e(&|x| x.abs());
    Ok(Some(e(&|x| (x * x - a) * (x.abs() - b))))
}

/// Every inequality of the reduction chain evaluated on one distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalitySlacks {
    pub centered_slack: f64,
    pub square_slack: f64,
    pub abs_slack: f64,
    pub lines: [f64; 4],
    pub p_moments: [f64; 3],
    pub n_moments: [f64; 3],
    /// `expanded_abs_slack − 2·Σ lines`, zero up to rounding.
    pub expansion_residual: f64,
    pub hat_cov_positive: Option<f64>,
    pub cond_cov_nonpositive: Option<f64>,
    /// `max|Φ| · max(1, max|x|)^4`, the natural size of the Φ slacks.
    pub phi_scale: f64,
    /// `max(1, max|x|)^5`, the natural size of the `|X|` slack and lines.
    pub abs_scale: f64,
}

impl InequalitySlacks {
    /// Smallest slack relative to its scale.
    pub fn min_relative(&self) -> f64 {
        let mut v = vec![
            self.centered_slack / self.phi_scale,
            self.square_slack / self.phi_scale,
            self.abs_slack / self.abs_scale,
        ];
        v.extend(self.lines.iter().map(|l| l / self.abs_scale));
        v.into_iter().fold(f64::INFINITY, f64::min)
    }
}

pub fn x_scale(d: &Distribution) -> f64 {
    d.points().iter().map(|x| x.abs()).fold(1.0, f64::max)
}

pub fn inequality_slacks<F: Fn(f64) -> f64>(d: &Distribution, phi: F) -> Result<InequalitySlacks> {
    let (p, n) = part_moments(d)?;
    let lines = part_lines(p, n);
    let sx = x_scale(d);
    let phi_max = d
        .points()
        .iter()
        .map(|x| phi(*x).abs())
        .fold(f64::MIN_POSITIVE, f64::max);
    Ok(InequalitySlacks {
        centered_slack: centered_slack(d, &phi)?,
        square_slack: square_slack(d, &phi)?,
        abs_slack: abs_slack(d)?,
        lines,
        p_moments: p,
        n_moments: n,
        expansion_residual: expanded_abs_slack(p, n) - 2.0 * lines.iter().sum::<f64>(),
        hat_cov_positive: hat_cov_positive(d)?,
        cond_cov_nonpositive: cond_cov_nonpositive(d)?,
        phi_scale: phi_max * sx.powi(4),
        abs_scale: sx.powi(5),
    })
}

/// `Φ̂ = Φ − C·X` with `C = Cov(Φ, X) / Var X`.
#[derive(Debug, Clone, Copy)]
pub struct Decorrelated<F> {
    phi: F,
    pub coefficient: f64,
}

impl<F: Fn(f64) -> f64> Decorrelated<F> {
    pub fn eval(&self, x: f64) -> f64 {
        (self.phi)(x) - self.coefficient * x
    }
}

pub fn hat_transform<F: Fn(f64) -> f64>(d: &Distribution, phi: F) -> Result<Decorrelated<F>> {
    let var = d.variance();
    if !(var > 0.0) {
        return Err(Error::Degenerate("Var X = 0".into()));
    }
    let coefficient = d.cov(&phi, |x| x)? / var;
    Ok(Decorrelated { phi, coefficient })
}

// ---------------------------------------------------------------------------
// G(ρ) and its profile

/// `G(ρ) = E^{θ(ρ)} Φ(X)`.
#[allow(non_snake_case)]
pub fn G<F: Fn(f64) -> f64>(f: &RateFunction, phi: F, rho: f64, cfg: &TiltConfig) -> Result<f64> {
    let (_, m) = tilt::solve(f, rho, cfg)?;
    m.expect(phi)
}

/// The `Φ̃`-form covariance slack at `θ(ρ)`.
#[allow(non_snake_case)]
pub fn G_second_slack<F: Fn(f64) -> f64>(
    f: &RateFunction,
    phi: F,
    rho: f64,
    cfg: &TiltConfig,
) -> Result<f64> {
    let (_, m) = tilt::solve(f, rho, cfg)?;
    centered_slack(m.law(), phi)
}

/// `n` evenly spaced points covering the middle `fraction` of `(lo, hi)`.
pub fn middle_grid(lo: f64, hi: f64, fraction: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!(
            "cannot place a grid inside ({lo}, {hi}); give explicit bounds"
        )));
    }
    if n < 3 {
        return Err(Error::Config("grid needs at least 3 points".into()));
    }
    let pad = 0.5 * (1.0 - fraction) * (hi - lo);
    Ok(linspace(lo + pad, hi - pad, n))
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { b } else { a + step * i as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Linear,
    StrictlyConvex,
    StrictlyConcave,
    Indeterminate,
}

/// `G`, `G′` and second differences on a uniform density grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub rho_grid: Vec<f64>,
    pub g_values: Vec<f64>,
    pub g_prime: Vec<f64>,
    /// Covariance slack at each grid point.
    pub centered_slack: Vec<f64>,
    /// Raw centered second differences `G(ρ−h) − 2G(ρ) + G(ρ+h)`, interior
    /// points only.
    pub second_differences: Vec<f64>,
    /// Second differences divided by `h²`, interior points only.
    pub g_second_fd: Vec<f64>,
}

/// Evaluate the profile of `G` along `grid` (uniform spacing assumed).
///
/// Each `G` value is corrected to first order for the density residual of
/// the root finder: `G(ρ) ≈ E^θ Φ − G′·(ρ(θ) − ρ)`.
pub fn profile<F: Fn(f64) -> f64>(
    f: &RateFunction,
    phi: F,
    grid: &[f64],
    cfg: &TiltConfig,
) -> Result<Profile> {
    let mut g_values = Vec::with_capacity(grid.len());
    let mut g_prime = Vec::with_capacity(grid.len());
    let mut slacks = Vec::with_capacity(grid.len());
    for &rho in grid {
        let (_, m) = tilt::solve(f, rho, cfg)?;
        let gp = tilt::derivative_at(&m, &phi)?;
        let g = m.expect(&phi)? - gp * (m.mean() - rho);
        g_values.push(g);
        g_prime.push(gp);
        slacks.push(centered_slack(m.law(), &phi)?);
    }
    let h = if grid.len() > 1 {
        (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64
    } else {
        f64::NAN
    };
    let second_differences: Vec<f64> = g_values
        .windows(3)
        .map(|w| (w[0] - w[1]) + (w[2] - w[1]))
        .collect();
    let g_second_fd = second_differences.iter().map(|d| d / (h * h)).collect();
    Ok(Profile {
        rho_grid: grid.to_vec(),
        g_values,
        g_prime,
        centered_slack: slacks,
        second_differences,
        g_second_fd,
    })
}

/// Tolerance band for second differences, relative to the instance scale.
pub const SECOND_DIFF_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub classification: Classification,
    pub support_size: Option<u64>,
    pub strict_points: Vec<f64>,
    pub profile: Profile,
    pub min_second_difference: f64,
    pub max_second_difference: f64,
    pub max_abs_second_difference: f64,
    /// `max|Φ|` over the support (or the probe window for infinite support).
    pub scale: f64,
    /// Numbers agree with the classification.
    pub consistent: bool,
}

/// Φ values on the finite support, or on the union of the windows of the
/// tilted measures along the grid when the support is infinite.
pub fn probe_points<F: Fn(f64) -> f64>(
    f: &RateFunction,
    phi: F,
    grid: &[f64],
    cfg: &TiltConfig,
) -> Result<Vec<(f64, f64)>> {
    let support = f.support();
    let (lo, hi) = match (support.x_min, support.x_max) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let mut lo = i64::MAX;
            let mut hi = i64::MIN;
            for &rho in grid {
                let (_, m) = tilt::solve(f, rho, cfg)?;
                let (a, b) = m.window();
                lo = lo.min(a);
                hi = hi.max(b);
            }
            (
                support.x_min.map_or(lo, |v| v.max(lo)),
                support.x_max.map_or(hi, |v| v.min(hi)),
            )
        }
    };
    Ok((lo..=hi).map(|x| (x as f64, phi(x as f64))).collect())
}

/// Linear / strictly convex / strictly concave verdict from the slopes of
/// Φ on the support, plus a numeric profile along `grid`.
pub fn classify<F: Fn(f64) -> f64>(
    f: &RateFunction,
    phi: F,
    grid: &[f64],
    cfg: &TiltConfig,
) -> Result<ConvexityReport> {
    let values = probe_points(f, &phi, grid, cfg)?;
    let shape = shape_of(&values)?;
    let (classification, strict_points) = match shape {
        Shape::Linear => (Classification::Linear, vec![]),
        Shape::StrictlyConvex { strict_points } => (Classification::StrictlyConvex, strict_points),
        Shape::StrictlyConcave { strict_points } => {
            (Classification::StrictlyConcave, strict_points)
        }
        Shape::Neither => (Classification::Indeterminate, vec![]),
    };
    let prof = profile(f, &phi, grid, cfg)?;
    let scale = values.iter().map(|p| p.1.abs()).fold(f64::MIN_POSITIVE, f64::max);
    let d = &prof.second_differences;
    let min_d = d.iter().copied().fold(f64::INFINITY, f64::min);
    let max_d = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_abs = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = SECOND_DIFF_REL_TOL * scale;
    let consistent = match classification {
        Classification::Linear => max_abs <= tol,
        Classification::StrictlyConvex => min_d > 0.0,
        Classification::StrictlyConcave => max_d < 0.0,
        Classification::Indeterminate => true,
    };
    Ok(ConvexityReport {
        classification,
        support_size: f.support().len(),
        strict_points,
        profile: prof,
        min_second_difference: min_d,
        max_second_difference: max_d,
        max_abs_second_difference: max_abs,
        scale,
        consistent,
    })
}

// ---------------------------------------------------------------------------
// reduction chain

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdCheck {
    pub h: f64,
    /// `|finite-difference form − analytic slack|`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KinkCheck {
    pub kink: Kink,
    /// `A · square_slack(kink)`.
    pub scaled_kink_slack: f64,
    /// `abs_slack` for `Y = X − x₀`.
    pub shifted_abs_slack: f64,
    /// Deviation of each side of the `|X − x₀|` inequality from the `Y`
    /// form after removing `2x₀·Cov(|Y|, Y)·Var Y`.
    pub shift_residuals: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub centered_slack: f64,
    /// (i) derivative form `Var·∂θ Cov(Φ, X) − Cov(Φ, X)·∂θ Var`.
    pub derivative_form: Vec<FdCheck>,
    /// (ii) `centered_slack(Φ) − centered_slack(Φ̂)`.
    pub decorrelation_residual: f64,
    pub hat_coefficient: f64,
    /// (iii) `square_slack(Φ̂) − Var·Cov(Φ̂, X²)` and `Cov(Φ̂, X²)`.
    pub uncorrelated_residual: f64,
    pub cov_hat_x2: f64,
    /// (iv) kink reduction, when a kink is supplied.
    pub kink: Option<KinkCheck>,
    /// `max|Φ| · max(1, max|x|)^4`.
    pub scale: f64,
}

impl ChainReport {
    /// Check the exact identities to `rel_tol · scale` and the finite
    /// difference form at the smallest step to `fd_rel_tol · scale`.
    pub fn check(&self, rel_tol: f64, fd_rel_tol: f64) -> Result<()> {
        let tol = rel_tol * self.scale;
        let fail = |step: &str, detail: String| {
            Err(Error::ChainMismatch {
                step: step.into(),
                detail,
            })
        };
        if let Some(last) = self.derivative_form.last() {
            if !(last.error <= fd_rel_tol * self.scale) {
                return fail("i", format!("finite-difference error {:e} at h = {}", last.error, last.h));
            }
        }
        if !(self.decorrelation_residual.abs() <= tol) {
            return fail("ii", format!("residual {:e}", self.decorrelation_residual));
        }
        if !(self.uncorrelated_residual.abs() <= tol) {
            return fail("iii", format!("residual {:e}", self.uncorrelated_residual));
        }
        if !(self.cov_hat_x2 >= -tol) {
            return fail("iii", format!("Cov(hat phi, X^2) = {:e} < 0", self.cov_hat_x2));
        }
        if let Some(k) = &self.kink {
            let kscale = tol.max(rel_tol * k.shifted_abs_slack.abs());
            if !((k.scaled_kink_slack - k.shifted_abs_slack).abs() <= kscale) {
                return fail(
                    "iv",
                    format!("{:e} vs {:e}", k.scaled_kink_slack, k.shifted_abs_slack),
                );
            }
            if k.shift_residuals.iter().any(|r| !(r.abs() <= kscale)) {
                return fail("iv", format!("shift residuals {:?}", k.shift_residuals));
            }
        }
        Ok(())
    }
}

fn cov_phi_x_and_var<F: Fn(f64) -> f64>(d: &Distribution, phi: F) -> Result<(f64, f64)> {
    Ok((d.cov(&phi, |x| x)?, d.variance()))
}

/// Evaluate every link of the reduction chain on `d`.
pub fn verify_reduction_chain<F: Fn(f64) -> f64>(
    d: &Distribution,
    phi: F,
    kink: Option<Kink>,
    steps: &[f64],
) -> Result<ChainReport> {
    let s23 = centered_slack(d, &phi)?;
    let (cov0, var0) = cov_phi_x_and_var(d, &phi)?;

    let mut derivative_form = Vec::with_capacity(steps.len());
    for &h in steps {
        let plus = d.tilt(h)?;
        let minus = d.tilt(-h)?;
        let (cp, vp) = cov_phi_x_and_var(&plus, &phi)?;
        let (cm, vm) = cov_phi_x_and_var(&minus, &phi)?;
        let dcov = (cp - cm) / (2.0 * h);
        let dvar = (vp - vm) / (2.0 * h);
        let form = var0 * dcov - cov0 * dvar;
        derivative_form.push(FdCheck {
            h,
            error: (form - s23).abs(),
        });
    }

    let hat = hat_transform(d, &phi)?;
    let s23_hat = centered_slack(d, |x| hat.eval(x))?;
    let s24_hat = square_slack(d, |x| hat.eval(x))?;
    let cov_hat_x2 = d.cov(|x| hat.eval(x), |x| x * x)?;

    let kink_check = match kink {
        None => None,
        Some(k) => {
            let big_a = k.normalizing_factor();
            let scaled = big_a * square_slack(d, |x| k.eval(x))?;
            let y = d.shifted(k.x0);
            let shifted = abs_slack(&y)?;
            let x0 = k.x0;
            let var_y = y.variance();
            let cov_abs_y = y.cov(f64::abs, |v| v)?;
            let shift = 2.0 * x0 * cov_abs_y * var_y;
            let lhs_x = y.cov(f64::abs, |v| (v + x0) * (v + x0))? * var_y;
            let rhs_x = cov_abs_y * y.cov(|v| (v + x0) * (v + x0), |v| v)?;
            let lhs_y = y.cov(f64::abs, |v| v * v)? * var_y;
            let rhs_y = cov_abs_y * y.cov(|v| v * v, |v| v)?;
            Some(KinkCheck {
                kink: k,
                scaled_kink_slack: scaled,
                shifted_abs_slack: shifted,
                shift_residuals: [(lhs_x - shift) - lhs_y, (rhs_x - shift) - rhs_y],
            })
        }
    };

    let phi_max = d
        .points()
        .iter()
        .map(|x| phi(*x).abs())
        .fold(f64::MIN_POSITIVE, f64::max);
    Ok(ChainReport {
        centered_slack: s23,
        derivative_form,
        decorrelation_residual: s23 - s23_hat,
        hat_coefficient: hat.coefficient,
        uncorrelated_residual: s24_hat - var0 * cov_hat_x2,
        cov_hat_x2,
        kink: kink_check,
        scale: phi_max * x_scale(d).powi(4),
    })
}

/// Tilted measure at the density `rho` (shortcut used by the CLI).
pub fn measure_at(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<TiltedMeasure> {
    tilt::solve(f, rho, cfg).map(|(_, m)| m)
}
