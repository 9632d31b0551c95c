//! Interacting particle systems
//!
//! ```text
//! dλ_i = (1/N) Σ_{j≠i} f(λ_i, λ_j)/(λ_i - λ_j) dt + b(λ_i) dt + σ dB_i,   σ = √(2/N)
//! ```
//!
//! with optional Wishart terms, a barrier at `R0` and one outlier ("spike")
//! driven by the Hilbert transform of the bulk.
//!
//! Time stepping is a Lie–Strang splitting. The smooth part (all pairs except
//! nearest neighbours, the drift, the noise) takes an Euler–Maruyama step; the
//! nearest-neighbour repulsion, which is what makes plain Euler–Maruyama blow
//! up when two particles land close together, is integrated exactly pair by
//! pair (`s' = (a + b)/(N s)` has `s(τ)² = s² + 2(a + b)τ/N`), first on even
//! pairs for `dt/2`, then odd pairs for `dt`, then even pairs for `dt/2`.
//! Positions are re-sorted after each stage, which leaves the empirical measure
//! unchanged.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::Convention;
use crate::error::{LabError, Result};
use crate::grid::{GridDensity, ParticleEnsemble};
use crate::kernel::InteractionKernel;
use crate::measure::hilbert::hilbert;

/// Maximum number of step halvings before a step is declared failed.
pub const MAX_HALVINGS: u32 = 20;
/// Gap floor relative to the ensemble width.
pub const GAP_FLOOR_REL: f64 = 1e-12;

/// Counter-based normal draws: the stream for attempt `k` of replica `r` is a
/// ChaCha8 generator keyed by `(seed, r)` with stream id `k`, so results never
/// depend on scheduling.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    seed: u64,
    replica: u64,
    counter: u64,
}

impl NoiseSource {
    pub fn new(seed: u64, replica: u64) -> Self {
        Self { seed, replica, counter: 0 }
    }

    /// `n` standard normals, in particle order.
    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replica.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.counter);
        self.counter += 1;
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    pub fn draws(&self) -> u64 {
        self.counter
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Barrier {
    /// Confining drift `-(1/eps)(x - R0)_+`, integrated exactly.
    Penalized { r0: f64, eps: f64 },
    /// Mirror reflection at `R0`.
    Hard { r0: f64 },
}

impl Barrier {
    pub fn r0(&self) -> f64 {
        match self {
            Self::Penalized { r0, .. } | Self::Hard { r0 } => *r0,
        }
    }

    fn apply(&self, x: f64, dt: f64) -> f64 {
        match *self {
            Self::Penalized { r0, eps } if x > r0 => r0 + (x - r0) * (-dt / eps).exp(),
            Self::Hard { r0 } if x > r0 => 2.0 * r0 - x,
            _ => x,
        }
    }
}

/// The forcing path `a(t)` of the spike; only its increments matter.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum APath {
    Constant,
    Linear {
        rate: f64,
    },
    /// Piecewise linear through `(times, values)`, constant outside.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl APath {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Constant => 0.0,
            Self::Linear { rate } => rate * t,
            Self::Table { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                let k = times.partition_point(|s| *s <= t);
                if k >= times.len() {
                    return values[values.len() - 1];
                }
                let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                values[k - 1] * (1.0 - w) + values[k] * w
            }
        }
    }

    pub fn increment(&self, t: f64, dt: f64) -> f64 {
        self.value(t + dt) - self.value(t)
    }
}

impl FromStr for APath {
    type Err = LabError;
    /// `const`, `linear:RATE` or `table:PATH` (CSV `t,a`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "const" || s == "constant" {
            return Ok(Self::Constant);
        }
        if let Some(r) = s.strip_prefix("linear:") {
            let rate = r.trim().parse().map_err(|_| LabError::Config(format!("bad rate in a-spec '{s}'")))?;
            return Ok(Self::Linear { rate });
        }
        if let Some(p) = s.strip_prefix("table:") {
            let mut rdr = csv::Reader::from_path(p)?;
            let (mut times, mut values) = (Vec::new(), Vec::new());
            for rec in rdr.records() {
                let rec = rec?;
                let get = |k: usize| -> Result<f64> {
                    rec.get(k)
                        .and_then(|v| v.trim().parse().ok())
                        .ok_or_else(|| LabError::Config(format!("{p}: bad a-table row")))
                };
                times.push(get(0)?);
                values.push(get(1)?);
            }
            if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(LabError::Config(format!("{p}: a-table needs >= 2 increasing times")));
            }
            return Ok(Self::Table { times, values });
        }
        Err(LabError::Config(format!("unknown a-spec '{s}' (const | linear:RATE | table:PATH)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpikeConfig {
    pub lambda0: f64,
    pub a: APath,
}

/// Initial particle positions.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Initial {
    Positions {
        positions: Vec<f64>,
    },
    /// Quantiles `(i + 1/2)/N` of a semicircle.
    Semicircle {
        center: f64,
        radius: f64,
    },
    /// Equally spaced on `[center - width/2, center + width/2]`.
    Cluster {
        center: f64,
        width: f64,
    },
}

impl Initial {
    pub fn positions(&self, n: usize) -> Vec<f64> {
        match self {
            Self::Positions { positions } => positions.clone(),
            Self::Semicircle { center, radius } => {
                let fam = crate::analytic::SemicircleFamily { convention: Convention::Raw, radius: *radius };
                (0..n).map(|i| center + fam.quantile((i as f64 + 0.5) / n as f64)).collect()
            }
            Self::Cluster { center, width } => {
                if n == 1 {
                    return vec![*center];
                }
                (0..n).map(|i| center + width * (i as f64 / (n - 1) as f64 - 0.5)).collect()
            }
        }
    }
}

/// Quantile positions `(i + 1/2)/N` of a grid density (piecewise-linear CDF).
pub fn quantile_positions(m: &GridDensity, n: usize) -> Vec<f64> {
    let h = m.h();
    let mass = m.grid_mass();
    let mut cum = Vec::with_capacity(m.len() + 1);
    cum.push(0.0);
    for v in m.values() {
        cum.push(cum.last().unwrap() + h * v / mass);
    }
    let left = m.x0() - 0.5 * h;
    (0..n)
        .map(|i| {
            let p = (i as f64 + 0.5) / n as f64;
            let k = cum.partition_point(|c| *c < p).clamp(1, m.len());
            let (c0, c1) = (cum[k - 1], cum[k]);
            let w = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.5 };
            left + (k as f64 - 1.0 + w) * h
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SdeConfig {
    pub n: usize,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub seed: u64,
    pub kernel: InteractionKernel,
    /// Defaults to `√(2/N)`.
    pub noise_scale: Option<f64>,
    pub barrier: Option<Barrier>,
    /// Wishart dynamics on `(0, ∞)`: adds `η - 1` to the drift and reflects at 0.
    pub wishart_eta: Option<f64>,
    pub replicas: usize,
    /// Recording times; `t_start` and `t_end` are always recorded.
    pub sample_times: Vec<f64>,
    pub moments_only: bool,
    pub initial: Initial,
    pub spike: Option<SpikeConfig>,
}

impl SdeConfig {
    /// Pure Dyson from a semicircle cluster of radius 0.2 around 0.
    pub fn new(n: usize, dt: f64, t_end: f64, seed: u64) -> Self {
        Self {
            n,
            dt,
            t_start: 0.0,
            t_end,
            seed,
            kernel: InteractionKernel::dyson(),
            noise_scale: None,
            barrier: None,
            wishart_eta: None,
            replicas: 1,
            sample_times: Vec::new(),
            moments_only: false,
            initial: Initial::Semicircle { center: 0.0, radius: 0.2 },
            spike: None,
        }
    }

    pub fn noise(&self) -> f64 {
        self.noise_scale.unwrap_or((2.0 / self.n as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(LabError::Config("N must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LabError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.t_start) {
            return Err(LabError::Config(format!("t_end {} before t_start {}", self.t_end, self.t_start)));
        }
        if let Some(eta) = self.wishart_eta {
            if !(eta >= 1.0) {
                return Err(LabError::Config(format!("Wishart eta must be >= 1, got {eta}")));
            }
        }
        if let Some(Barrier::Penalized { eps, .. }) = self.barrier {
            if !(eps > 0.0) {
                return Err(LabError::Config(format!("penalization eps must be positive, got {eps}")));
            }
        }
        if self.replicas == 0 {
            return Err(LabError::Config("replicas must be at least 1".into()));
        }
        if let Initial::Positions { positions } = &self.initial {
            if positions.len() != self.n {
                return Err(LabError::Config(format!("{} initial positions for N = {}", positions.len(), self.n)));
            }
        }
        if self.noise_scale.is_some_and(|s| !(s >= 0.0)) {
            return Err(LabError::Config("noise scale must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-particle velocities `(1/N) Σ_{j≠i} f(λ_i, λ_j)/(λ_i - λ_j) + b(λ_i)`,
/// plus `η - 1` for Wishart and the barrier penalization.
pub fn drift(e: &ParticleEnsemble, cfg: &SdeConfig, t: f64) -> Vec<f64> {
    let x = e.positions();
    let mut v = interaction(x, &cfg.kernel, 1);
    add_external(x, &mut v, cfg, t);
    if let Some(Barrier::Penalized { r0, eps }) = cfg.barrier {
        for (vi, xi) in v.iter_mut().zip(x) {
            if *xi > r0 {
                *vi -= (xi - r0) / eps;
            }
        }
    }
    v
}

/// Interaction sum over pairs with `|i - j| >= min_sep`.
fn interaction(x: &[f64], k: &InteractionKernel, min_sep: usize) -> Vec<f64> {
    let n = x.len();
    let inv_n = 1.0 / n as f64;
    let row = |i: usize| -> f64 {
        let xi = x[i];
        let mut s = 0.0;
        let lo = i.saturating_sub(min_sep - 1);
        let hi = (i + min_sep).min(n);
        if k.is_pure() {
            for &xj in x[..lo].iter().chain(&x[hi..]) {
                s += 1.0 / (xi - xj);
            }
        } else {
            for &xj in x[..lo].iter().chain(&x[hi..]) {
                s += k.f(xi, xj) / (xi - xj);
            }
        }
        s * inv_n
    };
    if n >= 256 {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    }
}

fn add_external(x: &[f64], v: &mut [f64], cfg: &SdeConfig, t: f64) {
    let b = cfg.kernel.drift();
    let shift = cfg.wishart_eta.map_or(0.0, |eta| eta - 1.0);
    let zero = b.is_zero();
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi += shift;
        if !zero {
            *vi += b.value(t, *xi);
        }
    }
}

/// Exact flow of the two-body repulsion on pairs `(start, start+1), (start+2, start+3), ...`.
fn pair_flow(x: &mut [f64], k: &InteractionKernel, start: usize, tau: f64) {
    let n = x.len() as f64;
    let mut i = start;
    while i + 1 < x.len() {
        let (xl, xr) = (x[i], x[i + 1]);
        let s = xr - xl;
        if s > 0.0 {
            // xr moves right at a/(N s), xl moves left at b/(N s)
            let (a, b) = if k.is_pure() { (1.0, 1.0) } else { (k.f(xr, xl), k.f(xl, xr)) };
            if a + b > 0.0 {
                let grow = (s * s + 2.0 * (a + b) * tau / n).sqrt() - s;
                x[i + 1] = xr + a / (a + b) * grow;
                x[i] = xl - b / (a + b) * grow;
            } else {
                x[i + 1] = xr + a * tau / (n * s);
                x[i] = xl - b * tau / (n * s);
            }
        }
        i += 2;
    }
}

fn sort(x: &mut [f64]) {
    x.sort_by(f64::total_cmp);
}

/// One splitting step of length `dt` from `e` at time `t`. Fails when a
/// post-step gap falls below the gap floor.
pub fn step(
    e: &ParticleEnsemble,
    cfg: &SdeConfig,
    t: f64,
    dt: f64,
    noise: &mut NoiseSource,
) -> Result<ParticleEnsemble> {
    let x0 = e.positions();
    let n = x0.len();
    let width = (e.max() - e.min()).max(1.0);
    let floor = GAP_FLOOR_REL * width;

    let mut v = interaction(x0, &cfg.kernel, 2);
    add_external(x0, &mut v, cfg, t);
    let sigma = cfg.noise() * dt.sqrt();
    let xi = noise.normals(n);
    let mut x: Vec<f64> = (0..n).map(|i| x0[i] + v[i] * dt + sigma * xi[i]).collect();
    if let Some(barrier) = cfg.barrier {
        for p in x.iter_mut() {
            *p = barrier.apply(*p, dt);
        }
    }
    sort(&mut x);
    pair_flow(&mut x, &cfg.kernel, 0, 0.5 * dt);
    sort(&mut x);
    pair_flow(&mut x, &cfg.kernel, 1, dt);
    sort(&mut x);
    pair_flow(&mut x, &cfg.kernel, 0, 0.5 * dt);
    if cfg.wishart_eta.is_some() {
        for p in x.iter_mut() {
            *p = p.abs();
        }
    }
    sort(&mut x);
    if let Some(bad) = x.iter().position(|p| !p.is_finite()) {
        return Err(LabError::StepFailure { t, reason: format!("particle {bad} left the finite range") });
    }
    if n > 1 {
        let gap = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if gap < floor {
            return Err(LabError::StepFailure { t, reason: format!("gap {gap:e} below floor {floor:e}") });
        }
    }
    Ok(ParticleEnsemble::from_sorted_unchecked(x))
}

/// Advances by `dt`, halving on failure up to [`MAX_HALVINGS`] times.
fn advance(
    e: ParticleEnsemble,
    cfg: &SdeConfig,
    t: f64,
    dt: f64,
    noise: &mut NoiseSource,
    depth: u32,
) -> Result<ParticleEnsemble> {
    match step(&e, cfg, t, dt, noise) {
        Ok(next) => Ok(next),
        Err(err) if depth >= MAX_HALVINGS => Err(err),
        Err(_) => {
            let half = advance(e, cfg, t, 0.5 * dt, noise, depth + 1)?;
            advance(half, cfg, t + 0.5 * dt, 0.5 * dt, noise, depth + 1)
        }
    }
}

/// Bulk mass allowed beyond the edge a spike is absorbed at.
pub const EDGE_TAIL_MASS: f64 = 1e-7;

/// Anything a spike can feel: a Hilbert transform and a right edge.
pub trait SpikeField {
    fn hilbert_at(&self, x: f64) -> Result<f64>;
    fn right_edge(&self) -> f64;
}

impl SpikeField for ParticleEnsemble {
    /// `(1/N) Σ 1/(x - λ_j)`.
    fn hilbert_at(&self, x: f64) -> Result<f64> {
        Ok(self.positions().iter().map(|p| 1.0 / (x - p)).sum::<f64>() / self.len() as f64)
    }
    fn right_edge(&self) -> f64 {
        self.max()
    }
}

impl SpikeField for GridDensity {
    fn hilbert_at(&self, x: f64) -> Result<f64> {
        hilbert(self, x)
    }
    /// Right end of the cell where the mass to its right drops to `EDGE_TAIL_MASS`;
    /// a pointwise threshold would fire on the scheme's exponentially small tails.
    fn right_edge(&self) -> f64 {
        let h = self.h();
        let mut tail = 0.0;
        for i in (0..self.len()).rev() {
            tail += self.values()[i] * h;
            if tail > EDGE_TAIL_MASS {
                return self.x(i) + 0.5 * h;
            }
        }
        self.x0()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpikeStep {
    Alive(f64),
    /// Reached the bulk edge during `[t, t + dt]`.
    Absorbed {
        t: f64,
        edge: f64,
    },
}

/// `λ' = λ + H[bulk](λ) dt + (a(t + dt) - a(t))`.
pub fn spike_step(
    lambda: f64,
    bulk: &impl SpikeField,
    a: &APath,
    t: f64,
    dt: f64,
    gap_floor: f64,
) -> Result<SpikeStep> {
    let edge = bulk.right_edge();
    if lambda <= edge + gap_floor {
        // the bulk edge moved past the spike during the previous bulk step
        return Ok(SpikeStep::Absorbed { t, edge });
    }
    let next = lambda + bulk.hilbert_at(lambda)? * dt + a.increment(t, dt);
    if next <= edge + gap_floor {
        Ok(SpikeStep::Absorbed { t: t + dt, edge })
    } else {
        Ok(SpikeStep::Alive(next))
    }
}

/// Spike trajectory with the absorption signal.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SpikeTrack {
    pub times: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Time of the first edge contact, if any.
    pub absorbed_at: Option<f64>,
}

impl SpikeTrack {
    /// `Z = λ² - 4t` (raw) or `λ² - t` (paper), for a bulk launched from `δ0` at `t = 0`.
    pub fn z_path(&self, convention: Convention) -> Vec<f64> {
        let c = match convention {
            Convention::Raw => 4.0,
            Convention::Paper => 1.0,
        };
        self.times.iter().zip(&self.lambda).map(|(t, l)| l * l - c * t).collect()
    }

    /// Time where `Z` reaches zero, read off a least-squares line through `√Z`
    /// on the part of the path with `√Z` in `[lo, hi]·√Z(0)`.
    ///
    /// `√Z` vanishes linearly while the spike's distance to the edge closes
    /// quadratically, so this is far better conditioned than the edge contact.
    pub fn z_zero_time(&self, convention: Convention, lo: f64, hi: f64) -> Option<f64> {
        let z = self.z_path(convention);
        let y0 = z.first()?.max(0.0).sqrt();
        let (mut st, mut sy, mut stt, mut sty, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, zz) in self.times.iter().zip(&z) {
            let y = zz.max(0.0).sqrt();
            if y >= lo * y0 && y <= hi * y0 {
                st += t;
                sy += y;
                stt += t * t;
                sty += t * y;
                k += 1.0;
            }
        }
        if k < 3.0 {
            return None;
        }
        let slope = (k * sty - st * sy) / (k * stt - st * st);
        let icpt = (sy - slope * st) / k;
        (slope < 0.0).then(|| -icpt / slope)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
    pub m4: f64,
    pub max: f64,
    pub min: f64,
}

impl Moments {
    fn of(t: f64, e: &ParticleEnsemble) -> Self {
        Self { t, m1: e.moment(1), m2: e.moment(2), m4: e.moment(4), max: e.max(), min: e.min() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub generator: &'static str,
    pub seed: u64,
    pub replica: u64,
    pub draws: u64,
}

/// One replica's recorded path.
#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Empty in moments-only mode.
    pub ensembles: Vec<ParticleEnsemble>,
    pub moments: Vec<Moments>,
    pub spike: Option<SpikeTrack>,
    pub provenance: Provenance,
}

impl Serialize for ParticleEnsemble {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.positions().serialize(s)
    }
}

#[derive(Serialize)]
struct JsonLine<'a> {
    t: f64,
    positions: &'a [f64],
    spike: Option<f64>,
}

impl TrajectoryRecord {
    pub fn final_ensemble(&self) -> Option<&ParticleEnsemble> {
        self.ensembles.last()
    }

    /// Recorded ensemble at the sample time closest to `t`.
    pub fn ensemble_at(&self, t: f64) -> Option<&ParticleEnsemble> {
        let k = self.times.iter().enumerate().min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?.0;
        self.ensembles.get(k)
    }

    fn spike_at(&self, t: f64) -> Option<f64> {
        let s = self.spike.as_ref()?;
        if s.absorbed_at.is_some_and(|ta| ta <= t) {
            return None;
        }
        let k = s.times.iter().position(|u| (u - t).abs() <= 1e-12 * t.abs().max(1.0))?;
        Some(s.lambda[k])
    }

    /// JSON lines: `{t, positions, spike}` per sample, or the moments rows in
    /// moments-only mode.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        if self.ensembles.is_empty() {
            for m in &self.moments {
                serde_json::to_writer(&mut w, m)?;
                w.write_all(b"\n")?;
            }
        } else {
            for (t, e) in self.times.iter().zip(&self.ensembles) {
                serde_json::to_writer(&mut w, &JsonLine { t: *t, positions: e.positions(), spike: self.spike_at(*t) })?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn sample_schedule(cfg: &SdeConfig) -> Vec<f64> {
    let mut times: Vec<f64> =
        cfg.sample_times.iter().copied().filter(|t| *t > cfg.t_start && *t < cfg.t_end).chain([cfg.t_end]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    times
}

/// Runs one replica.
pub fn simulate_replica(cfg: &SdeConfig, replica: u64) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let mut noise = NoiseSource::new(cfg.seed, replica);
    let init = cfg.initial.positions(cfg.n);
    let width = init.iter().fold(0.0f64, |a, p| a.max(p.abs())).max(1.0);
    let mut e = ParticleEnsemble::new(init, GAP_FLOOR_REL * width)?;
    let mut t = cfg.t_start;
    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        ensembles: Vec::new(),
        moments: Vec::new(),
        spike: None,
        provenance: Provenance { generator: "chacha8", seed: cfg.seed, replica, draws: 0 },
    };
    let mut spike = cfg.spike.as_ref().map(|s| (s, Some(s.lambda0), SpikeTrack::default()));
    if let Some((s, _, _)) = &spike {
        if s.lambda0 <= e.max() {
            return Err(LabError::Spike(format!("spike {} must start right of the bulk edge {}", s.lambda0, e.max())));
        }
    }
    let record = |t: f64, e: &ParticleEnsemble, rec: &mut TrajectoryRecord| {
        rec.times.push(t);
        rec.moments.push(Moments::of(t, e));
        if !cfg.moments_only {
            rec.ensembles.push(e.clone());
        }
    };
    record(t, &e, &mut rec);
    if let Some((_, Some(l), track)) = &mut spike {
        track.times.push(t);
        track.lambda.push(*l);
    }
    for target in sample_schedule(cfg) {
        while t < target - 1e-12 * target.abs().max(1.0) {
            let dt = cfg.dt.min(target - t);
            if let Some((s, lam @ Some(_), track)) = &mut spike {
                let floor = GAP_FLOOR_REL * (e.max() - e.min()).max(1.0);
                match spike_step(lam.unwrap(), &e, &s.a, t, dt, floor)? {
                    SpikeStep::Alive(l) => *lam = Some(l),
                    SpikeStep::Absorbed { t: ta, .. } => {
                        track.absorbed_at = Some(ta);
                        *lam = None;
                    }
                }
            }
            e = advance(e, cfg, t, dt, &mut noise, 0)?;
            t += dt;
            if let Some((_, Some(l), track)) = &mut spike {
                track.times.push(t);
                track.lambda.push(*l);
            }
        }
        t = target;
        record(t, &e, &mut rec);
    }
    rec.spike = spike.map(|(_, _, track)| track);
    rec.provenance.draws = noise.draws();
    Ok(rec)
}

/// Runs all replicas; replica `r` uses the noise stream keyed by `(seed, r)`.
pub fn simulate(cfg: &SdeConfig) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate()?;
    (0..cfg.replicas as u64).into_par_iter().map(|r| simulate_replica(cfg, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DriftSpec;

    fn ens(p: &[f64]) -> ParticleEnsemble {
        ParticleEnsemble::new(p.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn three_particle_drift() {
        let cfg = SdeConfig::new(3, 1e-3, 1.0, 0);
        let v = drift(&ens(&[-1.0, 0.0, 1.0]), &cfg, 0.0);
        assert!((v[0] + 0.5).abs() < 1e-15 && v[1].abs() < 1e-15 && (v[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_drift_sums_to_zero() {
        let e = ens(&[-1.3, -0.2, 0.05, 0.4, 2.0, 2.1]);
        let v = drift(&e, &SdeConfig::new(6, 1e-3, 1.0, 0), 0.0);
        assert!(v.iter().sum::<f64>().abs() < 1e-13);
        let v2 = drift(&ens(&[0.0, 0.5]), &SdeConfig::new(2, 1e-3, 1.0, 0), 0.0);
        assert!((v2[1] - v2[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn deterministic_translation() {
        let mut cfg = SdeConfig::new(4, 0.01, 0.5, 1);
        cfg.kernel = InteractionKernel::new("zero", |_, _| 0.0).with_drift(DriftSpec::constant(1.0));
        cfg.noise_scale = Some(0.0);
        cfg.initial = Initial::Positions { positions: vec![0.0, 1.0, 2.0, 3.0] };
        let rec = simulate_replica(&cfg, 0).unwrap();
        for (p, q) in rec.final_ensemble().unwrap().positions().iter().zip([0.5, 1.5, 2.5, 3.5]) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_counter_based() {
        let mut a = NoiseSource::new(7, 3);
        let mut b = NoiseSource::new(7, 3);
        let first = a.normals(5);
        assert_eq!(first, b.normals(5));
        assert_ne!(first, a.normals(5));
        assert_ne!(first, NoiseSource::new(7, 4).normals(5));
    }

    #[test]
    fn same_seed_same_record() {
        let mut cfg = SdeConfig::new(50, 1e-3, 0.1, 42);
        cfg.sample_times = vec![0.05];
        let a = simulate_replica(&cfg, 2).unwrap();
        let b = simulate_replica(&cfg, 2).unwrap();
        assert_eq!(a.ensembles, b.ensembles);
        assert_eq!(a.times, vec![0.0, 0.05, 0.1]);
        let c = simulate_replica(&cfg, 3).unwrap();
        assert_ne!(a.ensembles, c.ensembles);
    }

    #[test]
    fn gap_law_two_particles() {
        // E[s_t^2] = s_0^2 + 4t
        let mut cfg = SdeConfig::new(2, 1e-2, 1.0, 11);
        cfg.initial = Initial::Positions { positions: vec![-0.25, 0.25] };
        cfg.replicas = 2000;
        cfg.sample_times = vec![0.25];
        cfg.moments_only = true;
        let recs = simulate(&cfg).unwrap();
        for (k, t) in [(1usize, 0.25), (2, 1.0)] {
            let s2: Vec<f64> = recs
                .iter()
                .map(|r| {
                    let m = r.moments[k];
                    (m.max - m.min).powi(2)
                })
                .collect();
            let mean = s2.iter().sum::<f64>() / s2.len() as f64;
            let sd = (s2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s2.len() - 1) as f64).sqrt();
            let se = sd / (s2.len() as f64).sqrt();
            let want = 0.25 + 4.0 * t;
            assert!((mean - want).abs() < 3.0 * se, "t={t}: {mean} vs {want} (se {se})");
        }
    }

    #[test]
    fn semicircle_spreading() {
        let mut cfg = SdeConfig::new(300, 2e-3, 1.0, 5);
        cfg.initial = Initial::Semicircle { center: 0.0, radius: 0.2 };
        let rec = simulate_replica(&cfg, 0).unwrap();
        let e = rec.final_ensemble().unwrap();
        // radius^2/4 = 0.01 + t
        let var = e.variance();
        assert!((var - 1.01 * (1.0 - 1.0 / 300.0)).abs() < 0.05, "{var}");
        let fam = crate::analytic::SemicircleFamily { convention: Convention::Raw, radius: 2.0 * 1.01f64.sqrt() };
        let q: Vec<f64> = (0..300).map(|i| fam.quantile((i as f64 + 0.5) / 300.0)).collect();
        let w2 = (e.positions().iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 300.0).sqrt();
        assert!(w2 < 0.05, "{w2}");
    }

    #[test]
    fn penalized_barrier_confines() {
        let mut cfg = SdeConfig::new(100, 1e-3, 1.0, 3);
        cfg.initial = Initial::Semicircle { center: -1.0, radius: 0.2 };
        cfg.barrier = Some(Barrier::Penalized { r0: 0.0, eps: 1e-3 });
        cfg.sample_times = (1..10).map(|k| k as f64 * 0.1).collect();
        let rec = simulate_replica(&cfg, 0).unwrap();
        for m in &rec.moments {
            assert!(m.max < 0.05, "t={}: {}", m.t, m.max);
        }
        assert!(rec.moments.last().unwrap().max > -0.1);
    }

    #[test]
    fn wishart_stays_positive() {
        let mut cfg = SdeConfig::new(200, 2e-3, 5.0, 9);
        cfg.kernel = InteractionKernel::wishart().with_drift(DriftSpec::linear(-1.0));
        cfg.wishart_eta = Some(2.0);
        cfg.initial = Initial::Cluster { center: 1.0, width: 0.5 };
        let rec = simulate_replica(&cfg, 0).unwrap();
        let e = rec.final_ensemble().unwrap();
        assert!(e.min() > 0.0);
        // the mean relaxes as e^{-t} to eta - 1/2
        let want = 1.5 - 0.5 * (-5.0f64).exp();
        assert!((e.mean() - want).abs() < 0.02, "{}", e.mean());
    }

    #[test]
    fn spike_single_pole() {
        let bulk = ens(&[0.0]);
        match spike_step(1.0, &bulk, &APath::Constant, 0.0, 1e-3, 1e-12).unwrap() {
            SpikeStep::Alive(l) => assert!((l - 1.001).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let fam = crate::analytic::SemicircleFamily { convention: Convention::Raw, radius: 2.0 };
        let grid = crate::Grid::covering(-2.5, 2.5, 0.005).unwrap();
        let m = fam.sample(grid).unwrap();
        assert!((m.hilbert_at(3.0).unwrap() - 0.5 * (3.0 - 5f64.sqrt())).abs() < 1e-4);
        // a spike already inside the bulk is absorbed at once
        assert!(matches!(
            spike_step(1.0, &m, &APath::Constant, 0.0, 1e-3, 0.0).unwrap(),
            SpikeStep::Absorbed { .. }
        ));
        match spike_step(2.0 + 1e-4, &m, &APath::Constant, 0.0, 1e-2, 0.0).unwrap() {
            SpikeStep::Alive(_) => {}
            SpikeStep::Absorbed { .. } => {}
        }
    }

    #[test]
    fn a_path_parsing() {
        assert_eq!("const".parse::<APath>().unwrap(), APath::Constant);
        let l: APath = "linear:0.5".parse().unwrap();
        assert!((l.increment(1.0, 0.2) - 0.1).abs() < 1e-15);
        assert!("cubic".parse::<APath>().is_err());
    }

    #[test]
    fn quantiles_of_grid_density() {
        let grid = crate::Grid::covering(0.0, 1.0, 0.01).unwrap();
        let m = GridDensity::from_fn(grid, |_| 1.0, true).unwrap();
        let q = quantile_positions(&m, 4);
        for (p, want) in q.iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert!((p - want).abs() < 1e-12);
        }
    }
}
