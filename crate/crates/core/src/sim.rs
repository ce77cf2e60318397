//! Event-driven totally asymmetric zero range process on a ring.
//!
//! Each site holding `x` particles carries an exponential clock of rate
//! `f(x)`; when it rings one particle moves to the next site. Clocks live in
//! a binary heap and are redrawn whenever the rate of their site changes,
//! stale entries being skipped through a per-clock version counter.
//!
//! A second class particle follows the basic coupling: at a site with `x`
//! ordinary particles it jumps forward at rate `f(x + 1) − f(x)`, and ordinary
//! particles arriving at its site simply join it.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flux::{self, NuMeasure};
use crate::measure::{RateFunction, RateKind, TiltedMeasure};
use crate::tilt::{self, TiltConfig};

/// Bootstrap resamples used for the ratio standard errors.
pub const BOOTSTRAP_RESAMPLES: usize = 400;
/// Smallest ensemble accepted by the current-variance experiment.
pub const MIN_REPLICAS: usize = 100;

fn require_zrp(f: &RateFunction) -> Result<()> {
    if f.kind() != RateKind::Zrp {
        return Err(Error::Config(format!(
            "the simulator runs zero range dynamics only, got a {:?} rate",
            f.kind()
        )));
    }
    Ok(())
}

/// `[Vt]`: `Vt` truncated toward the origin.
pub fn observer_position(v: f64, t: f64) -> i64 {
    (v * t).trunc() as i64
}

/// `f(0), f(1), …` up to the largest occupancy that can occur.
#[derive(Debug, Clone)]
struct RateCache {
    values: Vec<f64>,
}

impl RateCache {
    fn new(f: &RateFunction, max_occupancy: usize) -> Self {
        let mut values = Vec::with_capacity(max_occupancy + 1);
        for x in 0..=max_occupancy as i64 {
            if !f.support().contains(x) {
                break;
            }
            match f.rate(x) {
                Ok(v) if v.is_finite() && v >= 0.0 => values.push(v),
                _ => break,
            }
        }
        RateCache { values }
    }

    fn get(&self, x: u32) -> Result<f64> {
        self.values
            .get(x as usize)
            .copied()
            .ok_or(Error::RateTableExhausted { occupancy: x as i64 })
    }

    /// `f(x + 1) − f(x)`.
    fn increment(&self, x: u32) -> Result<f64> {
        let d = self.get(x + 1)? - self.get(x)?;
        if d < 0.0 {
            return Err(Error::CouplingUndefined { x: x as i64 });
        }
        Ok(d)
    }
}

/// Occupancies of a ring of `L = occ.len()` sites at time `time`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingState {
    pub occ: Vec<u32>,
    pub time: f64,
}

impl RingState {
    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn particles(&self) -> u64 {
        self.occ.iter().map(|&x| x as u64).sum()
    }
}

/// Inverse-CDF sampler for a lattice table.
#[derive(Debug, Clone)]
pub struct LatticeSampler {
    lo: i64,
    cdf: Vec<f64>,
}

impl LatticeSampler {
    pub fn new(lo: i64, probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        LatticeSampler { lo, cdf }
    }

    pub fn from_measure(m: &TiltedMeasure) -> Self {
        Self::new(m.window().0, m.probs())
    }

    pub fn from_nu(nu: &NuMeasure) -> Self {
        Self::new(nu.y_min, &nu.prob)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> i64 {
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let i = self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1);
        self.lo + i as i64
    }
}

fn occupancy(x: i64) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::RateTableExhausted { occupancy: x })
}

fn stationary_sampler(f: &RateFunction, rho: f64, cfg: &TiltConfig) -> Result<LatticeSampler> {
    let (_, m) = tilt::solve(f, rho, cfg)?;
    Ok(LatticeSampler::from_measure(&m))
}

fn draw_ring<R: Rng>(sampler: &LatticeSampler, l: usize, rng: &mut R) -> Result<Vec<u32>> {
    (0..l).map(|_| occupancy(sampler.sample(rng))).collect()
}

fn replica_rng(seed: u64, ensemble: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((ensemble << 40) | replica);
    rng
}

/// i.i.d. occupancies from `μ^{θ(ρ)}`.
pub fn sample_stationary(
    f: &RateFunction,
    rho: f64,
    l: usize,
    seed: u64,
    cfg: &TiltConfig,
) -> Result<RingState> {
    require_zrp(f)?;
    if l == 0 {
        return Err(Error::Config("ring needs at least one site".into()));
    }
    let sampler = stationary_sampler(f, rho, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(RingState {
        occ: draw_ring(&sampler, l, &mut rng)?,
        time: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Jump,
    SecondClassJump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub site: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy)]
struct Clock {
    time: f64,
    id: usize,
    version: u64,
}

impl PartialEq for Clock {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Clock {}
impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.id.cmp(&other.id))
    }
}

/// Position of the second class particle: unwrapped displacement `q` and
/// the ring site it sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SecondClassState {
    pub q: i64,
    pub attached_site: usize,
}

struct Dynamics {
    rates: Arc<RateCache>,
    occ: Vec<u32>,
    time: f64,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<Clock>>,
    /// One version per site plus one for the second class particle.
    version: Vec<u64>,
    second: Option<i64>,
    /// Jumps across the bond from site 0 to site 1.
    flux_0: i64,
    jumps: u64,
    particles: u64,
    log: Option<Vec<Event>>,
}

impl Dynamics {
    fn new(
        rates: Arc<RateCache>,
        occ: Vec<u32>,
        time: f64,
        rng: ChaCha8Rng,
        second: bool,
        log: bool,
    ) -> Result<Self> {
        let l = occ.len();
        let particles = occ.iter().map(|&x| x as u64).sum();
        let mut d = Dynamics {
            rates,
            occ,
            time,
            rng,
            heap: BinaryHeap::with_capacity(2 * l + 2),
            version: vec![0; l + 1],
            second: second.then_some(0),
            flux_0: 0,
            jumps: 0,
            particles,
            log: log.then(Vec::new),
        };
        for i in 0..l {
            d.schedule_site(i)?;
        }
        d.schedule_second()?;
        Ok(d)
    }

    fn l(&self) -> usize {
        self.occ.len()
    }

    fn second_site(&self) -> Option<usize> {
        self.second.map(|q| q.rem_euclid(self.l() as i64) as usize)
    }

    fn push(&mut self, id: usize, rate: f64) {
        self.version[id] += 1;
        if rate > 0.0 {
            let e: f64 = Exp1.sample(&mut self.rng);
            self.heap.push(Reverse(Clock {
                time: self.time + e / rate,
                id,
                version: self.version[id],
            }));
        }
    }

    fn schedule_site(&mut self, i: usize) -> Result<()> {
        let r = self.rates.get(self.occ[i])?;
        self.push(i, r);
        Ok(())
    }

    fn schedule_second(&mut self) -> Result<()> {
        if let Some(s) = self.second_site() {
            let r = self.rates.increment(self.occ[s])?;
            self.push(self.l(), r);
        }
        Ok(())
    }

    fn compact(&mut self) {
        if self.heap.len() > 4 * (self.l() + 1) + 64 {
            let version = &self.version;
            self.heap.retain(|Reverse(c)| c.version == version[c.id]);
        }
    }

    /// Run all events up to `horizon`, leaving the clock at `horizon`.
    fn advance_to(&mut self, horizon: f64) -> Result<()> {
        while let Some(Reverse(c)) = self.heap.pop() {
            if c.version != self.version[c.id] {
                continue;
            }
            if c.time > horizon {
                self.heap.push(Reverse(c));
                break;
            }
            self.time = c.time;
            self.fire(c.id)?;
            self.compact();
        }
        self.time = self.time.max(horizon);
        Ok(())
    }

    fn fire(&mut self, id: usize) -> Result<()> {
        let l = self.l();
        if id == l {
            let from = self.second_site().expect("second class clock without particle");
            if let Some(q) = self.second.as_mut() {
                *q += 1;
            }
            if let Some(log) = self.log.as_mut() {
                log.push(Event {
                    time: self.time,
                    site: from,
                    kind: EventKind::SecondClassJump,
                });
            }
            return self.schedule_second();
        }
        let i = id;
        if self.occ[i] == 0 {
            return Err(Error::Config(format!("clock rang at empty site {i}")));
        }
        let j = (i + 1) % l;
        self.occ[i] -= 1;
        self.occ[j] += 1;
        self.jumps += 1;
        if i == 0 && l > 1 {
            self.flux_0 += 1;
        }
        if let Some(log) = self.log.as_mut() {
            log.push(Event {
                time: self.time,
                site: i,
                kind: EventKind::Jump,
            });
        }
        self.schedule_site(i)?;
        if j != i {
            self.schedule_site(j)?;
        }
        if matches!(self.second_site(), Some(s) if s == i || s == j) {
            self.schedule_second()?;
        }
        Ok(())
    }

    fn check_conservation(&self) -> Result<()> {
        let n: u64 = self.occ.iter().map(|&x| x as u64).sum();
        if n != self.particles {
            return Err(Error::Config(format!(
                "particle count changed from {} to {n}",
                self.particles
            )));
        }
        Ok(())
    }

    /// `J^{(V)}(t)` for the observer at `[Vt]`.
    fn observer_current(&self, v: f64) -> i64 {
        let n = observer_position(v, self.time);
        let l = self.l() as i64;
        let at = |k: i64| self.occ[k.rem_euclid(l) as usize] as i64;
        if n >= 0 {
            self.flux_0 - (1..=n).map(at).sum::<i64>()
        } else {
            self.flux_0 + ((n + 1)..=0).map(at).sum::<i64>()
        }
    }

    fn second_state(&self) -> Option<SecondClassState> {
        Some(SecondClassState {
            q: self.second?,
            attached_site: self.second_site()?,
        })
    }
}

fn max_occupancy(occ: &[u32], extra: u32) -> usize {
    occ.iter().map(|&x| x as usize).sum::<usize>() + extra as usize
}

/// Run the ring from `state` until `horizon` and return the final state and
/// every jump.
pub fn simulate(
    f: &RateFunction,
    state: &RingState,
    horizon: f64,
    seed: u64,
) -> Result<(RingState, Vec<Event>)> {
    require_zrp(f)?;
    if state.is_empty() {
        return Err(Error::Config("ring needs at least one site".into()));
    }
    let rates = Arc::new(RateCache::new(f, max_occupancy(&state.occ, 0)));
    let rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dynamics::new(rates, state.occ.clone(), state.time, rng, false, true)?;
    d.advance_to(horizon)?;
    d.check_conservation()?;
    let log = d.log.take().unwrap_or_default();
    Ok((
        RingState {
            occ: d.occ,
            time: d.time,
        },
        log,
    ))
}

/// Second class particle positions at each checkpoint, plus the ordinary
/// configuration it started from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondClassTrajectory {
    pub initial: RingState,
    pub times: Vec<f64>,
    pub states: Vec<SecondClassState>,
}

fn check_checkpoints(t: &[f64]) -> Result<()> {
    if t.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || t.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config(
            "checkpoints must be finite, nonnegative and nondecreasing".into(),
        ));
    }
    Ok(())
}

/// Ordinary occupancies `μ^{θ(ρ)}` off the origin and `ν^{θ(ρ)}` at the
/// origin, with the second class particle starting at the origin.
fn second_class_replica(
    rates: &Arc<RateCache>,
    mu: &LatticeSampler,
    nu: &LatticeSampler,
    l: usize,
    checkpoints: &[f64],
    mut rng: ChaCha8Rng,
) -> Result<SecondClassTrajectory> {
    let mut occ = Vec::with_capacity(l);
    occ.push(occupancy(nu.sample(&mut rng))?);
    for _ in 1..l {
        occ.push(occupancy(mu.sample(&mut rng))?);
    }
    let initial = RingState {
        occ: occ.clone(),
        time: 0.0,
    };
    let mut d = Dynamics::new(rates.clone(), occ, 0.0, rng, true, false)?;
    let mut states = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        d.advance_to(t)?;
        states.push(d.second_state().expect("second class particle present"));
    }
    d.check_conservation()?;
    Ok(SecondClassTrajectory {
        initial,
        times: checkpoints.to_vec(),
        states,
    })
}

struct SecondClassSetup {
    mu: LatticeSampler,
    nu: LatticeSampler,
    rates: Arc<RateCache>,
}

fn second_class_setup(f: &RateFunction, rho: f64, l: usize, cfg: &TiltConfig) -> Result<SecondClassSetup> {
    require_zrp(f)?;
    let (_, m) = tilt::solve(f, rho, cfg)?;
    let nu = flux::nu_from_measure(&m, rho)?;
    let (_, hi) = m.window();
    // the whole ring can pile onto one site only with negligible probability;
    // the table covers every occupancy that the initial windows allow
    let cap = (hi.max(0) as usize).saturating_mul(l).saturating_add(1).min(1 << 20);
    let rates = RateCache::new(f, cap);
    for x in 0..rates.values.len().saturating_sub(1) {
        rates.increment(x as u32)?;
    }
    let rates = Arc::new(rates);
    Ok(SecondClassSetup {
        mu: LatticeSampler::from_measure(&m),
        nu: LatticeSampler::from_nu(&nu),
        rates,
    })
}

/// One second class trajectory observed at `checkpoints`.
pub fn run_second_class(
    f: &RateFunction,
    rho: f64,
    l: usize,
    checkpoints: &[f64],
    seed: u64,
    cfg: &TiltConfig,
) -> Result<SecondClassTrajectory> {
    if l < 2 {
        return Err(Error::Config("ring needs at least two sites".into()));
    }
    check_checkpoints(checkpoints)?;
    let s = second_class_setup(f, rho, l, cfg)?;
    second_class_replica(&s.rates, &s.mu, &s.nu, l, checkpoints, ChaCha8Rng::seed_from_u64(seed))
}

// ---------------------------------------------------------------------------
// ensembles

/// Mean and standard error of i.i.d. samples.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// `max(|V|, |H′|)·t + 4√t < L/2`, so nothing wraps the ring before `t`.
pub fn check_geometry(l: usize, speed: f64, horizon: f64) -> Result<()> {
    let reach = speed.abs() * horizon + 4.0 * horizon.sqrt();
    if !(reach < l as f64 / 2.0) {
        return Err(Error::Geometry(format!(
            "reach {reach:.2} by t = {horizon} is not below L/2 = {}",
            l as f64 / 2.0
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub rho: f64,
    pub l: usize,
    pub horizon: f64,
    pub replicas: usize,
    /// Total variation between the pooled site occupancies at the horizon and
    /// `μ^{θ(ρ)}`.
    pub tv_distance: f64,
    /// Jumps per site per unit time, averaged over replicas.
    pub jump_rate: f64,
    pub jump_rate_stderr: f64,
    /// `H(ρ)`.
    pub flux: f64,
}

/// Run `replicas` stationary rings to `horizon` and compare the final
/// occupancy histogram with `μ^{θ(ρ)}` and the jump rate with `H(ρ)`.
pub fn stationarity_experiment(
    f: &RateFunction,
    rho: f64,
    l: usize,
    horizon: f64,
    replicas: usize,
    seed: u64,
    cfg: &TiltConfig,
) -> Result<StationarityReport> {
    require_zrp(f)?;
    if replicas < 2 || l < 2 {
        return Err(Error::Config("need at least two replicas and two sites".into()));
    }
    let (_, m) = tilt::solve(f, rho, cfg)?;
    let sampler = LatticeSampler::from_measure(&m);
    let (lo, hi) = m.window();
    let cap = (hi.max(0) as usize).saturating_mul(l).min(1 << 20);
    let rates = Arc::new(RateCache::new(f, cap));
    let runs: Vec<(Vec<u32>, u64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, 0, r);
            let occ = draw_ring(&sampler, l, &mut rng)?;
            let mut d = Dynamics::new(rates.clone(), occ, 0.0, rng, false, false)?;
            d.advance_to(horizon)?;
            d.check_conservation()?;
            Ok((d.occ, d.jumps))
        })
        .collect::<Result<_>>()?;

    let mut counts = std::collections::BTreeMap::<i64, u64>::new();
    for (occ, _) in &runs {
        for &x in occ {
            *counts.entry(x as i64).or_default() += 1;
        }
    }
    let total = (replicas * l) as f64;
    let mut tv = 0.0;
    for x in lo.min(0)..=hi {
        let emp = counts.get(&x).copied().unwrap_or(0) as f64 / total;
        tv += (emp - m.prob(x)).abs();
    }
    for (&x, &c) in &counts {
        if x < lo.min(0) || x > hi {
            tv += c as f64 / total;
        }
    }
    let rates_per_site: Vec<f64> = runs
        .iter()
        .map(|(_, j)| *j as f64 / (l as f64 * horizon))
        .collect();
    let (jump_rate, jump_rate_stderr) = mean_stderr(&rates_per_site);
    Ok(StationarityReport {
        rho,
        l,
        horizon,
        replicas,
        tv_distance: 0.5 * tv,
        jump_rate,
        jump_rate_stderr,
        flux: flux::zrp_flux(f, rho, cfg)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityReport {
    pub rho: f64,
    pub horizon: f64,
    pub replicas: usize,
    /// Mean of `Q(t)/t`.
    pub velocity: f64,
    pub stderr: f64,
    /// `H′(ρ)`.
    pub characteristic_speed: f64,
}

/// Mean velocity of the second class particle over `replicas` runs.
pub fn second_class_velocity(
    f: &RateFunction,
    rho: f64,
    l: usize,
    horizon: f64,
    replicas: usize,
    seed: u64,
    cfg: &TiltConfig,
) -> Result<VelocityReport> {
    if replicas < 2 {
        return Err(Error::Config("need at least two replicas".into()));
    }
    let speed = flux::characteristic_speed(f, rho, 1.0, cfg)?;
    check_geometry(l, speed, horizon)?;
    let s = second_class_setup(f, rho, l, cfg)?;
    let v: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let tr = second_class_replica(&s.rates, &s.mu, &s.nu, l, &[horizon], replica_rng(seed, 1, r))?;
            Ok(tr.states[0].q as f64 / horizon)
        })
        .collect::<Result<_>>()?;
    let (velocity, stderr) = mean_stderr(&v);
    Ok(VelocityReport {
        rho,
        horizon,
        replicas,
        velocity,
        stderr,
        characteristic_speed: speed,
    })
}

/// Configuration of the current-variance experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub rho: f64,
    pub v: f64,
    pub t_grid: Vec<f64>,
    pub l: usize,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentStats {
    pub rho: f64,
    pub v: f64,
    pub l: usize,
    pub replicas: usize,
    pub t_grid: Vec<f64>,
    pub observer: Vec<i64>,
    pub mean_j: Vec<f64>,
    pub var_j: Vec<f64>,
    pub var_j_stderr: Vec<f64>,
    /// `Ê|Q(t) − [Vt]|`.
    pub mean_absdev_q: Vec<f64>,
    pub mean_absdev_q_stderr: Vec<f64>,
    /// `Var J / Ê|Q − [Vt]|`, undefined when both vanish.
    pub ratio: Vec<Option<f64>>,
    pub ratio_stderr: Vec<Option<f64>>,
    /// `(max − min) / mean` of the defined ratios.
    pub ratio_spread: Option<f64>,
    /// Mean of `Q(t)/t` at the last checkpoint.
    pub second_class_velocity: f64,
    pub second_class_velocity_stderr: f64,
    pub characteristic_speed: f64,
}

/// Stationary runs measuring `Var J^{(V)}(t)` and `ν`-started second class
/// runs measuring `Ê|Q(t) − [Vt]|` on the same checkpoints.
pub fn current_variance_experiment(
    f: &RateFunction,
    cfg_exp: &ExperimentConfig,
    cfg: &TiltConfig,
) -> Result<ExperimentStats> {
    let ExperimentConfig {
        rho,
        v,
        ref t_grid,
        l,
        replicas,
        seed,
    } = *cfg_exp;
    require_zrp(f)?;
    if replicas < MIN_REPLICAS {
        return Err(Error::Config(format!(
            "need at least {MIN_REPLICAS} replicas, got {replicas}"
        )));
    }
    if t_grid.is_empty() {
        return Err(Error::Config("empty checkpoint grid".into()));
    }
    check_checkpoints(t_grid)?;
    let speed = flux::characteristic_speed(f, rho, 1.0, cfg)?;
    let t_max = t_grid[t_grid.len() - 1];
    check_geometry(l, v.abs().max(speed.abs()), t_max)?;

    let s = second_class_setup(f, rho, l, cfg)?;
    let k = t_grid.len();

    let currents: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, 2, r);
            let occ = draw_ring(&s.mu, l, &mut rng)?;
            let mut d = Dynamics::new(s.rates.clone(), occ, 0.0, rng, false, false)?;
            let mut out = Vec::with_capacity(k);
            for &t in t_grid {
                d.advance_to(t)?;
                out.push(d.observer_current(v) as f64);
            }
            d.check_conservation()?;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let positions: Vec<Vec<i64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let tr = second_class_replica(&s.rates, &s.mu, &s.nu, l, t_grid, replica_rng(seed, 3, r))?;
            Ok(tr.states.iter().map(|s| s.q).collect())
        })
        .collect::<Result<_>>()?;

    let observer: Vec<i64> = t_grid.iter().map(|&t| observer_position(v, t)).collect();
    let column_j = |i: usize| -> Vec<f64> { currents.iter().map(|row| row[i]).collect() };
    let column_q = |i: usize| -> Vec<f64> {
        positions
            .iter()
            .map(|row| (row[i] - observer[i]).abs() as f64)
            .collect()
    };

    let mut boot = ChaCha8Rng::seed_from_u64(seed);
    boot.set_stream(u64::MAX);
    let idx_j: Vec<Vec<usize>> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..replicas).map(|_| boot.random_range(0..replicas)).collect())
        .collect();
    let idx_q: Vec<Vec<usize>> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..replicas).map(|_| boot.random_range(0..replicas)).collect())
        .collect();

    let mut stats = ExperimentStats {
        rho,
        v,
        l,
        replicas,
        t_grid: t_grid.clone(),
        observer: observer.clone(),
        mean_j: Vec::with_capacity(k),
        var_j: Vec::with_capacity(k),
        var_j_stderr: Vec::with_capacity(k),
        mean_absdev_q: Vec::with_capacity(k),
        mean_absdev_q_stderr: Vec::with_capacity(k),
        ratio: Vec::with_capacity(k),
        ratio_stderr: Vec::with_capacity(k),
        ratio_spread: None,
        second_class_velocity: f64::NAN,
        second_class_velocity_stderr: f64::NAN,
        characteristic_speed: speed,
    };
    for i in 0..k {
        let j = column_j(i);
        let q = column_q(i);
        let var_j = sample_variance(&j);
        let (dev, dev_se) = mean_stderr(&q);
        let mut boot_var = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        let mut boot_ratio = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for (ij, iq) in idx_j.iter().zip(&idx_q) {
            let bj: Vec<f64> = ij.iter().map(|&r| j[r]).collect();
            let bv = sample_variance(&bj);
            let bd = iq.iter().map(|&r| q[r]).sum::<f64>() / replicas as f64;
            boot_var.push(bv);
            if bd > 0.0 {
                boot_ratio.push(bv / bd);
            }
        }
        stats.mean_j.push(j.iter().sum::<f64>() / replicas as f64);
        stats.var_j.push(var_j);
        stats.var_j_stderr.push(sample_variance(&boot_var).sqrt());
        stats.mean_absdev_q.push(dev);
        stats.mean_absdev_q_stderr.push(dev_se);
        if dev > 0.0 {
            stats.ratio.push(Some(var_j / dev));
            stats.ratio_stderr.push((boot_ratio.len() > 1).then(|| sample_variance(&boot_ratio).sqrt()));
        } else {
            stats.ratio.push(None);
            stats.ratio_stderr.push(None);
        }
    }
    let defined: Vec<f64> = stats.ratio.iter().flatten().copied().collect();
    if defined.is_empty() && t_max > 0.0 {
        return Err(Error::Statistics(
            "no checkpoint has a nonzero second class deviation".into(),
        ));
    }
    if !defined.is_empty() {
        let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        stats.ratio_spread = Some((max - min) / mean);
    }
    if t_max > 0.0 {
        let vel: Vec<f64> = positions.iter().map(|row| row[k - 1] as f64 / t_max).collect();
        let (m, se) = mean_stderr(&vel);
        stats.second_class_velocity = m;
        stats.second_class_velocity_stderr = se;
    }
    Ok(stats)
}
