//! Deterministic solvers for the mean-field flow.
//!
//! Two formulations are provided. The CDF form `∂t u + V(x) ∂x u = 0` with
//! `V = c A[u] + b + B(x; u)` is advanced by a monotone upwind scheme, which
//! is the discrete counterpart of the viscosity-solution framework. The
//! density form `∂t m + ∂x(m K[m] + b m) = 0` uses a conservative
//! finite-volume scheme. Both step explicitly under a CFL bound and record
//! scheme-health counters next to the solution snapshots.

pub mod cdf;
pub mod density;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::grid::{CdfGrid, Grid, GridDensity, GridField};
use crate::measure::io::{write_cdf, write_density, write_grid_csv};
use crate::particle::{SpikeConfig, SpikeField, SpikeTrack};

pub use cdf::{solve_cdf, solve_singular_drift, solve_wishart, solve_with_b, CdfEquation, CdfOperator};
pub use density::{
    solve_coupled, solve_density, solve_reflected, solve_sigma, Coupling, DensityEquation, DensityOperator, Penalty,
    PenaltySign, ReflectionReport, ReflectionRun,
};

fn default_cfl() -> f64 {
    0.9
}
fn default_dt_floor() -> f64 {
    1e-10
}
fn default_clamp_threshold() -> f64 {
    1e-3
}
fn default_clip_threshold() -> f64 {
    1e-6
}

/// Time-stepping parameters shared by every solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSpec {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    /// Extra snapshot times in `(t_start, t_end)`; the end points are always recorded.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    #[serde(default)]
    pub viscosity: f64,
    /// Near/far split radius of the half-Laplacian; `2h` when absent.
    #[serde(default)]
    pub delta_split: Option<f64>,
    #[serde(default = "default_dt_floor")]
    pub dt_floor: f64,
    #[serde(default)]
    pub max_dt: Option<f64>,
    /// Largest tolerated monotonicity repair in one CDF step.
    #[serde(default = "default_clamp_threshold")]
    pub clamp_threshold: f64,
    /// Largest tolerated negative mass clipped in one density step.
    #[serde(default = "default_clip_threshold")]
    pub clip_threshold: f64,
}

impl PdeSpec {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        Self {
            t_start,
            t_end,
            cfl_safety: default_cfl(),
            sample_times: Vec::new(),
            viscosity: 0.0,
            delta_split: None,
            dt_floor: default_dt_floor(),
            max_dt: None,
            clamp_threshold: default_clamp_threshold(),
            clip_threshold: default_clip_threshold(),
        }
    }

    pub fn with_samples(mut self, times: impl IntoIterator<Item = f64>) -> Self {
        self.sample_times = times.into_iter().collect();
        self
    }

    /// `n` equally spaced snapshot times after `t_start`.
    pub fn with_uniform_samples(self, n: usize) -> Self {
        let (a, b) = (self.t_start, self.t_end);
        self.with_samples((1..n).map(move |k| a + (b - a) * k as f64 / n as f64))
    }

    pub fn with_viscosity(mut self, eps: f64) -> Self {
        self.viscosity = eps;
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl_safety = cfl;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t_start) || !self.t_start.is_finite() || !self.t_end.is_finite() {
            return Err(LabError::Config(format!("need t_start < t_end, got [{}, {}]", self.t_start, self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(LabError::Config(format!("cfl_safety must lie in (0, 1), got {}", self.cfl_safety)));
        }
        if !(self.viscosity >= 0.0) || !self.viscosity.is_finite() {
            return Err(LabError::Config(format!("viscosity must be >= 0, got {}", self.viscosity)));
        }
        if let Some(d) = self.delta_split {
            if !(d > 0.0) {
                return Err(LabError::InvalidSplit(d));
            }
        }
        if let Some(&t) = self.sample_times.iter().find(|t| !t.is_finite()) {
            return Err(LabError::Config(format!("sample time {t} is not finite")));
        }
        Ok(())
    }

    /// Sorted targets in `(t_start, t_end]`, always ending at `t_end`.
    pub(crate) fn targets(&self) -> Vec<f64> {
        let mut ts: Vec<f64> =
            self.sample_times.iter().cloned().filter(|t| *t > self.t_start && *t < self.t_end).collect();
        ts.push(self.t_end);
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
        ts
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hash_json(&serde_json::to_value(self).expect("spec serializes"))
    }
}

pub(crate) fn hash_json(v: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(v).expect("json value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Health counters accumulated while stepping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeHealth {
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    /// Largest monotonicity repair in one CDF step.
    pub max_clamp: f64,
    /// Total negative mass removed by clipping.
    pub clipped_mass: f64,
    /// Largest clipped mass in one density step.
    pub max_step_clip: f64,
    /// Density steps retried with a halved step.
    pub rejected_steps: usize,
    pub delta_split: Option<f64>,
    /// Split radius smaller than one cell.
    pub under_resolved: bool,
    pub cfl_safety: f64,
    /// `|mass(t_end) - mass(t_start)|` for density flows.
    pub mass_drift: f64,
}

impl SchemeHealth {
    pub(crate) fn new(cfl: f64) -> Self {
        Self { min_dt: f64::INFINITY, cfl_safety: cfl, ..Default::default() }
    }

    pub(crate) fn note_dt(&mut self, dt: f64) {
        self.steps += 1;
        self.min_dt = self.min_dt.min(dt);
        self.max_dt = self.max_dt.max(dt);
    }
}

/// Snapshots of one solved flow.
#[derive(Debug, Clone)]
pub struct FlowRecord {
    pub label: String,
    pub grid: Grid,
    pub times: Vec<f64>,
    pub densities: Vec<GridDensity>,
    pub cdfs: Vec<CdfGrid>,
    /// Transport velocity at each snapshot.
    pub velocities: Vec<GridField>,
    /// `H[m]` at each snapshot; empty for CDF-form flows.
    pub hilbert: Vec<GridField>,
    pub health: SchemeHealth,
    /// Hash of the inputs that produced the record.
    pub spec_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowManifest {
    pub label: String,
    pub grid: Grid,
    pub times: Vec<f64>,
    pub densities: Vec<String>,
    pub cdfs: Vec<String>,
    pub velocities: Vec<String>,
    pub health: SchemeHealth,
    pub spec_hash: String,
}

impl FlowRecord {
    /// A record with no cached fields, e.g. sampled from a closed form.
    pub fn from_densities(label: &str, times: Vec<f64>, densities: Vec<GridDensity>) -> Result<Self> {
        if times.len() != densities.len() || times.is_empty() {
            return Err(LabError::Precondition("one density per time is required".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Precondition("times must be strictly increasing".into()));
        }
        let grid = densities[0].grid();
        let cdfs = densities.iter().map(crate::grid::density_to_cdf).collect();
        Ok(Self {
            label: label.into(),
            grid,
            times,
            densities,
            cdfs,
            velocities: Vec::new(),
            hilbert: Vec::new(),
            health: SchemeHealth::default(),
            spec_hash: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the snapshot closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    pub fn density_near(&self, t: f64) -> &GridDensity {
        &self.densities[self.index_near(t)]
    }

    pub fn cdf_near(&self, t: f64) -> &CdfGrid {
        &self.cdfs[self.index_near(t)]
    }

    pub fn final_density(&self) -> &GridDensity {
        self.densities.last().expect("nonempty record")
    }

    pub fn final_cdf(&self) -> &CdfGrid {
        self.cdfs.last().expect("nonempty record")
    }

    /// The same record with time reversed: a negative control for monotone checks.
    pub fn reversed(&self) -> Self {
        let mut r = self.clone();
        let t0 = self.times[0];
        let t1 = *self.times.last().unwrap();
        r.times = self.times.iter().rev().map(|t| t0 + t1 - t).collect();
        r.densities.reverse();
        r.cdfs.reverse();
        r.velocities.reverse();
        r.hilbert.reverse();
        r.label = format!("{}-reversed", self.label);
        r
    }

    /// Writes CSV snapshots and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<FlowManifest> {
        fs::create_dir_all(dir)?;
        let mut manifest = FlowManifest {
            label: self.label.clone(),
            grid: self.grid,
            times: self.times.clone(),
            densities: Vec::new(),
            cdfs: Vec::new(),
            velocities: Vec::new(),
            health: self.health.clone(),
            spec_hash: self.spec_hash.clone(),
        };
        for (k, t) in self.times.iter().enumerate() {
            let name = format!("density_{k:04}.csv");
            write_density(&dir.join(&name), &self.densities[k], Some(*t))?;
            manifest.densities.push(name);
            let name = format!("cdf_{k:04}.csv");
            write_cdf(&dir.join(&name), &self.cdfs[k], Some(*t))?;
            manifest.cdfs.push(name);
            if let Some(v) = self.velocities.get(k) {
                let name = format!("velocity_{k:04}.csv");
                write_grid_csv(&dir.join(&name), v.grid(), v.values())?;
                manifest.velocities.push(name);
            }
        }
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Reads a record written by [`FlowRecord::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: FlowManifest = serde_json::from_str(&text)?;
        let densities = manifest
            .densities
            .iter()
            .map(|f| crate::measure::io::read_density(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        let cdfs =
            manifest.cdfs.iter().map(|f| crate::measure::io::read_cdf(&dir.join(f))).collect::<Result<Vec<_>>>()?;
        let velocities = manifest
            .velocities
            .iter()
            .map(|f| {
                let (grid, values, _) = crate::measure::io::read_snapshot(&dir.join(f))?;
                GridField::on_grid(grid, values)
            })
            .collect::<Result<Vec<_>>>()?;
        if densities.len() != manifest.times.len() || cdfs.len() != manifest.times.len() {
            return Err(LabError::Config(format!("manifest in {} lists mismatched snapshots", dir.display())));
        }
        Ok(Self {
            label: manifest.label,
            grid: manifest.grid,
            times: manifest.times,
            densities,
            cdfs,
            velocities,
            hilbert: Vec::new(),
            health: manifest.health,
            spec_hash: manifest.spec_hash,
        })
    }
}

/// Drives `step` from `t_start` to `t_end`, calling `record` at every target.
///
/// `step(state, t, remaining)` advances by at most `remaining` and returns
/// the step it took.
pub(crate) fn march<S>(
    spec: &PdeSpec,
    state: &mut S,
    health: &mut SchemeHealth,
    mut step: impl FnMut(&mut S, f64, f64, &mut SchemeHealth) -> Result<f64>,
    mut record: impl FnMut(&S, f64) -> Result<()>,
) -> Result<()> {
    let mut t = spec.t_start;
    record(state, t)?;
    for target in spec.targets() {
        while target - t > 1e-13 * target.abs().max(1.0) {
            let mut remaining = target - t;
            if let Some(m) = spec.max_dt {
                remaining = remaining.min(m);
            }
            let dt = step(state, t, remaining, health)?;
            health.note_dt(dt);
            t = if (target - (t + dt)).abs() <= 1e-13 * target.abs().max(1.0) { target } else { t + dt };
        }
        t = target;
        record(state, t)?;
    }
    Ok(())
}

/// Integrates the spike `λ' = H[m_t](λ) + a'(t)` along a solved bulk flow with
/// Heun steps between consecutive snapshots, so the step is the snapshot spacing.
/// The bulk does not feel the spike, so the one-way coupling is exact.
pub fn track_spike(flow: &FlowRecord, spike: &SpikeConfig) -> Result<SpikeTrack> {
    if flow.is_empty() {
        return Err(LabError::Precondition("spike needs a recorded bulk".into()));
    }
    let edge0 = flow.densities[0].right_edge();
    if spike.lambda0 <= edge0 {
        return Err(LabError::Spike(format!("spike {} must start right of the bulk edge {edge0}", spike.lambda0)));
    }
    let mut track = SpikeTrack { times: vec![flow.times[0]], lambda: vec![spike.lambda0], absorbed_at: None };
    let mut lam = spike.lambda0;
    for k in 1..flow.len() {
        let (t0, t1) = (flow.times[k - 1], flow.times[k]);
        let dt = t1 - t0;
        let (m0, m1) = (&flow.densities[k - 1], &flow.densities[k]);
        let v0 = m0.hilbert_at(lam)?;
        let pred = lam + dt * v0;
        let next = if pred > m1.right_edge() { lam + 0.5 * dt * (v0 + m1.hilbert_at(pred)?) } else { pred };
        let next = next + spike.a.increment(t0, dt);
        if next <= m1.right_edge() {
            track.absorbed_at = Some(t1);
            break;
        }
        lam = next;
        track.times.push(t1);
        track.lambda.push(lam);
    }
    Ok(track)
}

/// Stable step from a rate bound, or a CFL error when it drops below the floor.
pub(crate) fn stable_dt(spec: &PdeSpec, t: f64, rate: f64, remaining: f64) -> Result<f64> {
    if !rate.is_finite() {
        return Err(LabError::StepFailure { t, reason: "non-finite transport rate".into() });
    }
    let dt = if rate > 0.0 { spec.cfl_safety / rate } else { f64::INFINITY };
    if dt < spec.dt_floor {
        return Err(LabError::Cfl { t, required: dt, floor: spec.dt_floor });
    }
    Ok(dt.min(remaining))
}
