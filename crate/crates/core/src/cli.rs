//! Command-line front end. Every subcommand is a library function returning
//! an [`Output`] so that it can be exercised without spawning a process.
//!
//! Exit codes: 0 success, 1 a checked property failed, 2 bad configuration
//! or a domain error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::convexity::{self, Classification, Kink};
use crate::error::{Error, Result};
use crate::flux;
use crate::instances;
use crate::measure::{RateFunction, RateKind};
use crate::sim::{self, ExperimentConfig};
use crate::tables::{self, Table};
use crate::tilt::{self, TiltConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tilted", version, about = "Tilted lattice measures, convexity checks, flux and zero range simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flux H(ρ), H′(ρ) and its convexity class.
    Flux(FluxArgs),
    /// G(ρ) = E Φ(X) along a density grid with its convexity verdict.
    Convexity(ConvexityArgs),
    /// ν tables along a density grid and their stochastic ordering.
    Nu(NuArgs),
    /// Randomized inequality and reduction-chain suite.
    Verify(VerifyArgs),
    /// Current variance versus second class deviation on a ring.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableKind {
    /// Zero range rates `f(x)`, `x ≥ 0`.
    Zrp,
    /// Rates `f(x)` on a finite interval.
    Generic,
    /// Positive weights `w(x) ∝ 1/f(x)!`.
    Weights,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    /// zrp-constant | zrp-linear | zrp-power:P | blp-exp:BETA | uniform:LO,HI
    #[arg(long, conflicts_with = "rate_file")]
    pub rate: Option<String>,
    /// Two-column CSV or JSON table.
    #[arg(long)]
    pub rate_file: Option<PathBuf>,
    /// How to read --rate-file.
    #[arg(long, value_enum, default_value = "zrp")]
    pub kind: TableKind,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub rho_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho_max: Option<f64>,
    #[arg(long, default_value_t = 21)]
    pub rho_steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FluxArgs {
    #[command(flatten)]
    pub rate: RateArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Relative band for second differences.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ConvexityArgs {
    #[command(flatten)]
    pub rate: RateArgs,
    /// x2 | abs[:X0] | kink:A,B,X0[,C] | linear:A,B | rate
    #[arg(long, conflicts_with = "phi_file")]
    pub phi: Option<String>,
    #[arg(long)]
    pub phi_file: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct NuArgs {
    #[command(flatten)]
    pub rate: RateArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Allowed negative margin in the ordering check.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    pub instances: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub rate: RateArgs,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Ring size.
    #[arg(long = "sites", short = 'L', default_value_t = 128)]
    pub sites: usize,
    /// Observer speed.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub v: f64,
    /// Comma-separated checkpoints.
    #[arg(long, default_value = "6,12,18,24,30", value_delimiter = ',')]
    pub t_grid: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Largest accepted relative spread of the variance ratio.
    #[arg(long, default_value_t = 0.15)]
    pub tol: f64,
}

/// Rendered result of a subcommand.
#[derive(Debug, Clone)]
pub struct Output {
    pub csv: String,
    pub json: serde_json::Value,
    /// Description of a failed property check.
    pub violation: Option<String>,
}

impl Output {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.csv.clone(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).unwrap_or_default();
                s.push('\n');
                s
            }
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse number {p:?}")))
        })
        .collect()
}

fn split_spec(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (spec.trim(), None),
    }
}

fn one_param(name: &str, p: Option<&str>) -> Result<f64> {
    let v = parse_list(p.ok_or_else(|| Error::Config(format!("{name} needs a parameter")))?)?;
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(Error::Config(format!("{name} takes one parameter"))),
    }
}

/// Parse a builtin rate name.
pub fn parse_rate(spec: &str) -> Result<RateFunction> {
    let (name, p) = split_spec(spec);
    match name {
        "zrp-constant" => Ok(RateFunction::zrp_constant()),
        "zrp-linear" => Ok(RateFunction::zrp_linear()),
        "zrp-power" => RateFunction::zrp_power(one_param(name, p)?),
        "blp-exp" => RateFunction::blp_exp(one_param(name, p)?),
        "uniform" => {
            let v = parse_list(p.unwrap_or("0,1"))?;
            let [lo, hi] = v.as_slice() else {
                return Err(Error::Config("uniform takes LO,HI".into()));
            };
            if lo.fract() != 0.0 || hi.fract() != 0.0 || lo >= hi {
                return Err(Error::Config("uniform needs integers LO < HI".into()));
            }
            let n = (hi - lo) as usize + 1;
            RateFunction::from_weights(*lo as i64, &vec![1.0; n])
        }
        _ => Err(Error::Config(format!("unknown rate {spec:?}"))),
    }
}

pub fn resolve_rate(a: &RateArgs) -> Result<RateFunction> {
    match (&a.rate, &a.rate_file) {
        (Some(s), None) => parse_rate(s),
        (None, Some(path)) => {
            let t = tables::load_table(path)?;
            match a.kind {
                TableKind::Zrp => RateFunction::from_table(RateKind::Zrp, t.x_min, t.values),
                TableKind::Generic => RateFunction::from_table(RateKind::Generic, t.x_min, t.values),
                TableKind::Weights => RateFunction::from_weights(t.x_min, &t.values),
            }
        }
        (None, None) => Err(Error::Config("give --rate or --rate-file".into())),
        (Some(_), Some(_)) => Err(Error::Config("give only one of --rate and --rate-file".into())),
    }
}

/// A test function Φ.
#[derive(Debug, Clone)]
pub enum PhiSpec {
    Square,
    Abs(f64),
    Kink(Kink),
    Linear(f64, f64),
    Rate,
    Table(Table),
}

pub fn parse_phi(spec: &str) -> Result<PhiSpec> {
    let (name, p) = split_spec(spec);
    match name {
        "x2" | "square" => Ok(PhiSpec::Square),
        "abs" => Ok(PhiSpec::Abs(p.map(|_| one_param(name, p)).transpose()?.unwrap_or(0.0))),
        "kink" => {
            let v = parse_list(p.unwrap_or(""))?;
            match v.as_slice() {
                [a, b, x0] => Ok(PhiSpec::Kink(Kink::new(*a, *b, *x0, 0.0)?)),
                [a, b, x0, c] => Ok(PhiSpec::Kink(Kink::new(*a, *b, *x0, *c)?)),
                _ => Err(Error::Config("kink takes A,B,X0[,C]".into())),
            }
        }
        "linear" => {
            let v = parse_list(p.unwrap_or(""))?;
            match v.as_slice() {
                [a, b] => Ok(PhiSpec::Linear(*a, *b)),
                _ => Err(Error::Config("linear takes A,B".into())),
            }
        }
        "rate" => Ok(PhiSpec::Rate),
        _ => Err(Error::Config(format!("unknown phi {spec:?}"))),
    }
}

impl PhiSpec {
    pub fn eval(&self, f: &RateFunction, x: f64) -> f64 {
        match self {
            PhiSpec::Square => x * x,
            PhiSpec::Abs(x0) => (x - x0).abs(),
            PhiSpec::Kink(k) => k.eval(x),
            PhiSpec::Linear(a, b) => a + b * x,
            PhiSpec::Rate => flux::flux_integrand(f, x),
            PhiSpec::Table(t) => t.get(x as i64).unwrap_or(f64::NAN),
        }
    }
}

fn resolve_phi(a: &ConvexityArgs) -> Result<PhiSpec> {
    match (&a.phi, &a.phi_file) {
        (Some(s), None) => parse_phi(s),
        (None, Some(p)) => Ok(PhiSpec::Table(tables::load_table(p)?)),
        (None, None) => Ok(PhiSpec::Square),
        (Some(_), Some(_)) => Err(Error::Config("give only one of --phi and --phi-file".into())),
    }
}

/// Explicit bounds, or the middle 80% of the attainable interval.
pub fn resolve_grid(f: &RateFunction, g: &GridArgs, cfg: &TiltConfig) -> Result<Vec<f64>> {
    if g.rho_steps < 3 {
        return Err(Error::Config("--rho-steps must be at least 3".into()));
    }
    let (lo, hi) = tilt::attainable_interval(f, &cfg.measure)?;
    match (g.rho_min, g.rho_max) {
        (Some(a), Some(b)) => {
            if !(a < b && a > lo && b < hi) {
                return Err(Error::Config(format!(
                    "grid [{a}, {b}] must lie strictly inside ({lo}, {hi})"
                )));
            }
            Ok(convexity::linspace(a, b, g.rho_steps))
        }
        (None, None) => convexity::middle_grid(lo, hi, 0.8, g.rho_steps),
        _ => Err(Error::Config("give both --rho-min and --rho-max".into())),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn csv_string<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn class_name(c: Classification) -> &'static str {
    match c {
        Classification::Linear => "linear",
        Classification::StrictlyConvex => "strictly_convex",
        Classification::StrictlyConcave => "strictly_concave",
        Classification::Indeterminate => "indeterminate",
    }
}

#[derive(Serialize)]
struct FluxRow {
    rho: f64,
    #[serde(rename = "H")]
    h: f64,
    #[serde(rename = "H_prime")]
    h_prime: f64,
    classification: &'static str,
}

pub fn cmd_flux(a: &FluxArgs) -> Result<Output> {
    check_tol(a.tol)?;
    let cfg = TiltConfig::default();
    let f = resolve_rate(&a.rate)?;
    let grid = if f.is_constant_one_blp() {
        let lo = a.grid.rho_min.unwrap_or(-1.0);
        let hi = a.grid.rho_max.unwrap_or(1.0);
        convexity::linspace(lo, hi, a.grid.rho_steps.max(3))
    } else {
        resolve_grid(&f, &a.grid, &cfg)?
    };
    let p = flux::flux_profile(&f, &grid, &cfg)?;
    let name = class_name(p.classification);
    let rows: Vec<FluxRow> = (0..grid.len())
        .map(|i| FluxRow {
            rho: p.rho_grid[i],
            h: p.h[i],
            h_prime: p.h_prime[i],
            classification: name,
        })
        .collect();
    let scale = p.h.iter().map(|v| v.abs()).fold(f64::MIN_POSITIVE, f64::max);
    let d = &p.second_differences;
    let band = a.tol * scale;
    let violation = match p.classification {
        Classification::Linear if d.iter().any(|v| v.abs() > band) => Some("linear flux bends".into()),
        Classification::StrictlyConvex if d.iter().any(|v| *v <= 0.0) => {
            Some("strictly convex flux has a nonpositive second difference".into())
        }
        Classification::StrictlyConcave if d.iter().any(|v| *v >= 0.0) => {
            Some("strictly concave flux has a nonnegative second difference".into())
        }
        _ => None,
    };
    Ok(Output {
        csv: csv_string(&rows)?,
        json: json!({
            "classification": name,
            "consistent": violation.is_none(),
            "rows": rows,
            "second_differences": p.second_differences,
        }),
        violation,
    })
}

#[derive(Serialize)]
struct ConvexityRow {
    rho: f64,
    #[serde(rename = "G")]
    g: f64,
    #[serde(rename = "G_prime")]
    g_prime: f64,
    slack: f64,
    second_difference: Option<f64>,
    classification: &'static str,
}

pub fn cmd_convexity(a: &ConvexityArgs) -> Result<Output> {
    check_tol(a.tol)?;
    let cfg = TiltConfig::default();
    let f = resolve_rate(&a.rate)?;
    let phi = resolve_phi(a)?;
    let grid = resolve_grid(&f, &a.grid, &cfg)?;
    let r = convexity::classify(&f, |x| phi.eval(&f, x), &grid, &cfg)?;
    let name = class_name(r.classification);
    let p = &r.profile;
    let rows: Vec<ConvexityRow> = (0..grid.len())
        .map(|i| ConvexityRow {
            rho: p.rho_grid[i],
            g: p.g_values[i],
            g_prime: p.g_prime[i],
            slack: p.centered_slack[i],
            second_difference: (i > 0 && i + 1 < grid.len()).then(|| p.second_differences[i - 1]),
            classification: name,
        })
        .collect();
    let band = a.tol * r.scale;
    let violation = if r.min_second_difference < -band && r.classification != Classification::StrictlyConcave
    {
        Some(format!("second difference {:e} below -{band:e}", r.min_second_difference))
    } else if r.classification == Classification::Linear && r.max_abs_second_difference > band {
        Some("linear verdict with bending G".into())
    } else if r.classification == Classification::Indeterminate {
        Some("phi is neither convex nor concave on the support".into())
    } else {
        None
    };
    Ok(Output {
        csv: csv_string(&rows)?,
        json: json!({
            "classification": name,
            "strict_points": r.strict_points,
            "min_second_difference": r.min_second_difference,
            "max_abs_second_difference": r.max_abs_second_difference,
            "scale": r.scale,
            "rows": rows,
        }),
        violation,
    })
}

#[derive(Serialize)]
struct NuRow {
    rho: f64,
    y: i64,
    nu: f64,
    tail: f64,
}

pub fn cmd_nu(a: &NuArgs) -> Result<Output> {
    check_tol(a.tol)?;
    let cfg = TiltConfig::default();
    let f = resolve_rate(&a.rate)?;
    let grid = resolve_grid(&f, &a.grid, &cfg)?;
    let nus = grid
        .iter()
        .map(|&r| flux::nu_measure(&f, r, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for nu in &nus {
        for (i, p) in nu.prob.iter().enumerate() {
            let y = nu.y_min + i as i64;
            rows.push(NuRow {
                rho: nu.rho,
                y,
                nu: *p,
                tail: nu.tail(y),
            });
        }
    }
    let drift = nus
        .iter()
        .map(|n| n.normalization_drift.abs())
        .fold(0.0, f64::max);
    let negative = nus.iter().flat_map(|n| n.prob.iter()).any(|p| *p < 0.0);
    let rep = flux::monotonicity_of(nus);
    let violation = if rep.min_margin < -a.tol {
        Some(format!("tails decrease by {:e} at {:?}", -rep.min_margin, rep.argmin))
    } else if drift > flux::NU_NORMALIZATION_TOL || negative {
        Some(format!("normalization drift {drift:e}"))
    } else {
        None
    };
    Ok(Output {
        csv: csv_string(&rows)?,
        json: json!({
            "monotone": violation.is_none(),
            "min_margin": rep.min_margin,
            "max_normalization_drift": drift,
            "rows": rows,
        }),
        violation,
    })
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<Output> {
    check_tol(a.tol)?;
    let s = instances::verify_suite(a.instances, a.seed, &TiltConfig::default())?;
    let v = s.violations(a.tol);
    let json = serde_json::to_value(&s).map_err(|e| Error::Io(e.to_string()))?;
    let mut rows: Vec<(String, String)> = Vec::new();
    if let serde_json::Value::Object(m) = &json {
        for (k, val) in m {
            rows.push((k.clone(), val.to_string()));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "value"]).map_err(|e| Error::Io(e.to_string()))?;
    for (k, val) in &rows {
        w.write_record([k, val]).map_err(|e| Error::Io(e.to_string()))?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(Output {
        csv,
        json,
        violation: (!v.is_empty()).then(|| v.join("; ")),
    })
}

#[derive(Serialize)]
struct SimRow {
    t: f64,
    observer: i64,
    var_j: f64,
    var_j_stderr: f64,
    mean_absdev_q: f64,
    mean_absdev_q_stderr: f64,
    ratio: Option<f64>,
    ratio_stderr: Option<f64>,
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<Output> {
    check_tol(a.tol)?;
    let cfg = TiltConfig::default();
    let f = resolve_rate(&a.rate)?;
    let e = ExperimentConfig {
        rho: a.rho,
        v: a.v,
        t_grid: a.t_grid.clone(),
        l: a.sites,
        replicas: a.replicas,
        seed: a.seed,
    };
    let s = sim::current_variance_experiment(&f, &e, &cfg)?;
    let rows: Vec<SimRow> = (0..s.t_grid.len())
        .map(|i| SimRow {
            t: s.t_grid[i],
            observer: s.observer[i],
            var_j: s.var_j[i],
            var_j_stderr: s.var_j_stderr[i],
            mean_absdev_q: s.mean_absdev_q[i],
            mean_absdev_q_stderr: s.mean_absdev_q_stderr[i],
            ratio: s.ratio[i],
            ratio_stderr: s.ratio_stderr[i],
        })
        .collect();
    let violation = match s.ratio_spread {
        Some(sp) if sp > a.tol => Some(format!("ratio spread {sp:.3} exceeds {}", a.tol)),
        _ => None,
    };
    Ok(Output {
        csv: csv_string(&rows)?,
        json: serde_json::to_value(&s).map_err(|e| Error::Io(e.to_string()))?,
        violation,
    })
}

/// Exit code for a library error.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::ConvexityViolation { .. }
        | Error::ChainMismatch { .. }
        | Error::MonotonicityViolation { .. }
        | Error::TruncationTooCoarse { .. } => EXIT_VIOLATION,
        _ => EXIT_CONFIG,
    }
}

fn output_args(c: &Command) -> &OutputArgs {
    match c {
        Command::Flux(a) => &a.output,
        Command::Convexity(a) => &a.output,
        Command::Nu(a) => &a.output,
        Command::Verify(a) => &a.output,
        Command::Simulate(a) => &a.output,
    }
}

/// Run a parsed command, writing the table to `--out` or `stdout` and
/// diagnostics to `stderr`.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Flux(a) => cmd_flux(a),
        Command::Convexity(a) => cmd_convexity(a),
        Command::Nu(a) => cmd_nu(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code_for(&e);
        }
    };
    let oa = output_args(&cli.command);
    let text = out.render(oa.format);
    let written = match &oa.out {
        Some(p) => std::fs::write(p, text),
        None => stdout.write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_CONFIG;
    }
    match out.violation {
        Some(v) => {
            let _ = writeln!(stderr, "violation: {v}");
            EXIT_VIOLATION
        }
        None => EXIT_OK,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("tilted").chain(args.iter().copied())).unwrap()
    }

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let cli = parse(args);
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(&cli, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn rate_specs() {
        assert!(parse_rate("zrp-power:1.5").is_ok());
        assert!(parse_rate("zrp-power").is_err());
        assert!(parse_rate("blp-exp:0.5").is_ok());
        assert_eq!(parse_rate("uniform:-1,1").unwrap().support().len(), Some(3));
        assert!(parse_rate("nope").is_err());
    }

    #[test]
    fn phi_specs() {
        let f = RateFunction::zrp_linear();
        assert_eq!(parse_phi("abs:1").unwrap().eval(&f, -1.0), 2.0);
        assert_eq!(parse_phi("kink:2,1,0").unwrap().eval(&f, -1.0), -1.0);
        assert!(parse_phi("kink:1,2,0").is_err());
        assert_eq!(parse_phi("rate").unwrap().eval(&f, 3.0), 3.0);
    }

    #[test]
    fn flux_linear_table() {
        let (code, out, _) = run_args(&[
            "flux", "--rate", "zrp-linear", "--rho-min", "0.5", "--rho-max", "2", "--rho-steps", "4",
        ]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("rho,H,H_prime,classification"));
        for l in lines {
            let v: Vec<&str> = l.split(',').collect();
            let rho: f64 = v[0].parse().unwrap();
            let h: f64 = v[1].parse().unwrap();
            assert!((rho - h).abs() < 1e-8);
            assert_eq!(v[3], "linear");
        }
    }

    #[test]
    fn constant_blp_flux_is_linear() {
        let (code, out, _) = run_args(&["flux", "--rate", "blp-exp:0", "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["classification"], "linear");
        assert_eq!(v["rows"][0]["H"], 2.0);
    }

    #[test]
    fn convexity_verdicts() {
        let (code, out, _) = run_args(&[
            "convexity", "--rate", "uniform:0,1", "--phi", "x2", "--format", "json",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["classification"], "linear");

        let (code, out, _) = run_args(&[
            "convexity", "--rate", "uniform:-1,1", "--phi", "x2", "--rho-min", "-0.5", "--rho-max",
            "0.5", "--rho-steps", "3", "--format", "json",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["classification"], "strictly_convex");
        let g0 = v["rows"][1]["G"].as_f64().unwrap();
        assert!((g0 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bad_config_exits_two() {
        let (code, _, err) = run_args(&["flux", "--rate", "zrp-linear"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("error"));
        let (code, _, _) = run_args(&["convexity", "--rate", "uniform:0,2", "--rho-min", "-1", "--rho-max", "1"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn indeterminate_phi_is_a_violation() {
        let (code, _, err) = run_args(&["convexity", "--rate", "uniform:-2,2", "--phi", "linear:0,1"]);
        assert_eq!(code, 0, "{err}");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("phi.csv");
        std::fs::write(&p, "-2,0\n-1,1\n0,0\n1,1\n2,0\n").unwrap();
        let (code, _, err) = run_args(&[
            "convexity", "--rate", "uniform:-2,2", "--phi-file", p.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_VIOLATION, "{err}");
    }

    #[test]
    fn nu_two_point() {
        let (code, out, _) = run_args(&["nu", "--rate", "uniform:0,1", "--rho-steps", "5"]);
        assert_eq!(code, 0);
        for l in out.lines().skip(1) {
            let v: Vec<&str> = l.split(',').collect();
            assert_eq!(v[1], "0");
            assert!((v[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn simulate_geometry_error() {
        let (code, _, err) = run_args(&[
            "simulate", "--rate", "zrp-linear", "-L", "16", "--t-grid", "10,20", "--replicas", "100",
        ]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("reach"));
    }
}
