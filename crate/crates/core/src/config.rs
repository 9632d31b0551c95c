//! Versioned JSON run configuration.
//!
//! A config file carries `"schema": 1` and one optional section per subcommand.
//! Every section rejects unknown keys; parse failures are reported with the
//! file name, line and column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::{BurgersSeed, Convention, MarcenkoPastur, SemicircleFamily};
use crate::error::{LabError, Result};
use crate::grid::{density_to_cdf, CdfGrid, Grid, GridDensity};
use crate::kernel::{BetaKernel, DriftSpec, InteractionKernel};
use crate::particle::{APath, Barrier, Initial, SdeConfig, SpikeConfig};
use crate::pde::{CdfEquation, DensityEquation, PdeSpec, Penalty};

/// The only schema version this build reads.
pub const SCHEMA_VERSION: u32 = 1;

/// A malformed or inconsistent configuration, as opposed to a failed run.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct SchemaError(pub String);

impl From<LabError> for SchemaError {
    fn from(e: LabError) -> Self {
        Self(e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn empty() -> Self {
        Self { schema: SCHEMA_VERSION, ..Default::default() }
    }

    /// Parses and checks the schema version; `origin` prefixes error locations.
    pub fn parse(text: &str, origin: &str) -> std::result::Result<Self, SchemaError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| located(origin, &e))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(SchemaError(format!(
                "{origin}: unsupported schema version {} (this build reads {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError(format!("{}: cannot read config: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::pde::hash_json(&serde_json::to_value(self).expect("config serializes"))
    }
}

fn located(origin: &str, e: &serde_json::Error) -> SchemaError {
    // serde_json appends " at line L column C"; move the location to the front.
    let msg = e.to_string();
    let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
    SchemaError(format!("{origin}:{}:{}: {msg}", e.line(), e.column()))
}

/// Deserializes a section from a loose JSON value with the same error format.
pub fn section_from_value<T: serde::de::DeserializeOwned>(
    v: serde_json::Value,
    origin: &str,
) -> std::result::Result<T, SchemaError> {
    serde_json::from_value(v).map_err(|e| SchemaError(format!("{origin}: {e}")))
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Positions { positions: Vec<f64> },
    Semicircle { center: f64, radius: f64 },
    Cluster { center: f64, width: f64 },
}

impl From<&InitialConfig> for Initial {
    fn from(c: &InitialConfig) -> Self {
        match c {
            InitialConfig::Positions { positions } => Initial::Positions { positions: positions.clone() },
            InitialConfig::Semicircle { center, radius } => Initial::Semicircle { center: *center, radius: *radius },
            InitialConfig::Cluster { center, width } => Initial::Cluster { center: *center, width: *width },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierConfig {
    Penalized { r0: f64, eps: f64 },
    Hard { r0: f64 },
}

impl BarrierConfig {
    /// `R0,eps` (penalized) or `R0` (hard wall).
    pub fn parse_flag(s: &str) -> std::result::Result<Self, SchemaError> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let num = |p: &str| p.parse::<f64>().map_err(|_| SchemaError(format!("--barrier: bad number '{p}'")));
        match parts.as_slice() {
            [r0] => Ok(Self::Hard { r0: num(r0)? }),
            [r0, eps] => Ok(Self::Penalized { r0: num(r0)?, eps: num(eps)? }),
            _ => Err(SchemaError(format!("--barrier expects R0[,eps], got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeSpec {
    pub lambda0: f64,
    /// `const`, `linear:RATE` or `table:PATH`.
    #[serde(default = "default_a_spec")]
    pub a: String,
}

fn default_a_spec() -> String {
    "const".into()
}

impl SpikeSpec {
    /// `lambda0,a-spec`; the a-spec defaults to `const`.
    pub fn parse_flag(s: &str) -> std::result::Result<Self, SchemaError> {
        let (l, a) = match s.split_once(',') {
            Some((l, a)) => (l.trim(), a.trim().to_string()),
            None => (s.trim(), default_a_spec()),
        };
        let lambda0 = l.parse().map_err(|_| SchemaError(format!("--spike: bad lambda0 '{l}'")))?;
        Ok(Self { lambda0, a })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_sde_dt")]
    pub dt: f64,
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    /// Wishart dynamics with this `η`.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub barrier: Option<BarrierConfig>,
    #[serde(default)]
    pub spike: Option<SpikeSpec>,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    #[serde(default)]
    pub sample_times: Vec<f64>,
    #[serde(default)]
    pub moments_only: bool,
    #[serde(default)]
    pub noise_scale: Option<f64>,
    #[serde(default = "default_initial")]
    pub initial: InitialConfig,
}

fn default_n() -> usize {
    100
}
fn default_sde_dt() -> f64 {
    1e-3
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_kernel() -> String {
    "dyson".into()
}
fn default_initial() -> InitialConfig {
    InitialConfig::Semicircle { center: 0.0, radius: 0.2 }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            dt: default_sde_dt(),
            t_start: 0.0,
            t_end: 1.0,
            kernel: default_kernel(),
            eta: None,
            barrier: None,
            spike: None,
            replicas: 1,
            sample_times: Vec::new(),
            moments_only: false,
            noise_scale: None,
            initial: default_initial(),
        }
    }
}

impl SimulateConfig {
    pub fn to_sde(&self, seed: u64) -> std::result::Result<SdeConfig, SchemaError> {
        let mut cfg = SdeConfig::new(self.n, self.dt, self.t_end, seed);
        cfg.t_start = self.t_start;
        cfg.kernel = self.kernel.parse::<InteractionKernel>()?;
        cfg.wishart_eta = self.eta;
        cfg.barrier = self.barrier.map(|b| match b {
            BarrierConfig::Penalized { r0, eps } => Barrier::Penalized { r0, eps },
            BarrierConfig::Hard { r0 } => Barrier::Hard { r0 },
        });
        cfg.spike = match &self.spike {
            Some(s) => Some(SpikeConfig { lambda0: s.lambda0, a: s.a.parse::<APath>()? }),
            None => None,
        };
        cfg.replicas = self.replicas;
        cfg.sample_times = self.sample_times.clone();
        cfg.moments_only = self.moments_only;
        cfg.noise_scale = self.noise_scale;
        cfg.initial = Initial::from(&self.initial);
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub a: f64,
    pub b: f64,
    pub h: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::covering(self.a, self.b, self.h)
    }
}

/// Initial data, always normalized to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityInit {
    Dirac {
        x: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Semicircle {
        center: f64,
        radius: f64,
    },
    MarcenkoPastur {
        eta: f64,
    },
    /// Weighted sum of other initial data.
    Mixture {
        components: Vec<(f64, DensityInit)>,
    },
    /// A density CSV written by this tool, resampled onto the grid.
    Csv {
        path: String,
    },
}

impl DensityInit {
    pub fn density(&self, grid: Grid) -> Result<GridDensity> {
        match self {
            Self::Dirac { x } => GridDensity::point_mass(grid, *x),
            Self::Uniform { a, b } => GridDensity::from_fn(grid, |x| if x >= *a && x <= *b { 1.0 } else { 0.0 }, true),
            Self::Gaussian { mean, sd } => {
                GridDensity::from_fn(grid, |x| (-(x - mean) * (x - mean) / (2.0 * sd * sd)).exp(), true)
            }
            Self::Semicircle { center, radius } => {
                let fam = SemicircleFamily::with_radius(Convention::Raw, *radius)?;
                GridDensity::from_fn(grid, |x| fam.density(x - center), true)
            }
            Self::MarcenkoPastur { eta } => {
                let mp = MarcenkoPastur::new(*eta, Convention::Raw)?;
                GridDensity::from_fn(grid, |x| mp.density(x), true)
            }
            Self::Mixture { components } => {
                if components.is_empty() {
                    return Err(LabError::Config("mixture without components".into()));
                }
                let mut acc = vec![0.0; grid.n];
                for (w, c) in components {
                    if !(*w >= 0.0) {
                        return Err(LabError::Config(format!("negative mixture weight {w}")));
                    }
                    for (a, v) in acc.iter_mut().zip(c.density(grid)?.values()) {
                        *a += w * v;
                    }
                }
                let mut m = GridDensity::on_grid(grid, acc, false)?;
                m.renormalize()?;
                Ok(m)
            }
            Self::Csv { path } => {
                let m = crate::measure::io::read_density(Path::new(path))?;
                GridDensity::from_fn(grid, |x| m.value_at(x), true)
            }
        }
    }

    pub fn cdf(&self, grid: Grid) -> Result<CdfGrid> {
        match self {
            Self::MarcenkoPastur { eta } => MarcenkoPastur::new(*eta, Convention::Raw)?.sample_cdf(grid),
            Self::Dirac { x } => CdfGrid::heaviside(grid, *x),
            _ => Ok(density_to_cdf(&self.density(grid)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    #[default]
    Zero,
    Constant {
        c: f64,
    },
    Linear {
        a: f64,
    },
    Sign,
    SmoothedSign {
        eta: f64,
    },
}

impl DriftConfig {
    pub fn build(&self) -> DriftSpec {
        match self {
            Self::Zero => DriftSpec::zero(),
            Self::Constant { c } => DriftSpec::constant(*c),
            Self::Linear { a } => DriftSpec::linear(*a),
            Self::Sign => DriftSpec::sign(),
            Self::SmoothedSign { eta } => DriftSpec::smoothed_sign(*eta),
        }
    }
}

/// Mobility `σ(m)` for the density form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaConfig {
    Constant {
        value: f64,
    },
    /// `σ(m) = (1 + m)^p`.
    Power {
        p: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaConfig {
    BoxConstant { value: f64, a: f64, b: f64 },
    SignBox { eps: f64, a: f64, b: f64 },
}

impl BetaConfig {
    pub fn build(&self) -> BetaKernel {
        match *self {
            Self::BoxConstant { value, a, b } => BetaKernel::box_constant(value, a, b),
            Self::SignBox { eps, a, b } => BetaKernel::sign_changing_box(eps, a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// Conservation law for the density.
    #[default]
    Density,
    /// Integrated form for the distribution function.
    Cdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub form: Form,
    /// `dyson`, `quadratic(eps)`, `gaussian`, `wishart` or `table:PATH`.
    #[serde(default = "default_kernel")]
    pub kernel: String,
    /// Required with the `wishart` kernel.
    #[serde(default)]
    pub eta: Option<f64>,
    pub grid: GridConfig,
    pub initial: DensityInit,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub sigma: Option<SigmaConfig>,
    #[serde(default)]
    pub penalty: Option<Penalty>,
    #[serde(default)]
    pub beta: Option<BetaConfig>,
    pub stepping: PdeSpec,
}

impl Default for SolveConfig {
    /// Pure Dyson flow from a point mass at 0, sampled 20 times up to `t = 1`.
    fn default() -> Self {
        Self {
            form: Form::Density,
            kernel: default_kernel(),
            eta: None,
            grid: GridConfig { a: -3.0, b: 3.0, h: 0.01 },
            initial: DensityInit::Dirac { x: 0.0 },
            drift: DriftConfig::Zero,
            sigma: None,
            penalty: None,
            beta: None,
            stepping: PdeSpec::new(0.0, 1.0).with_uniform_samples(20),
        }
    }
}

/// A solve fully resolved into library objects.
pub enum SolvePlan {
    Density { m0: GridDensity, eq: DensityEquation, spec: PdeSpec },
    Cdf { u0: CdfGrid, eq: CdfEquation, spec: PdeSpec },
    Wishart { u0: CdfGrid, eta: f64, drift: DriftSpec, spec: PdeSpec },
}

impl SolveConfig {
    /// Checks the section and builds the solver inputs; every failure here is a
    /// configuration error.
    pub fn plan(&self) -> std::result::Result<SolvePlan, SchemaError> {
        self.stepping.validate()?;
        let grid = self.grid.build()?;
        let kernel: InteractionKernel = self.kernel.parse()?;
        let drift = self.drift.build();
        let wishart = kernel.name() == "wishart";
        match self.form {
            Form::Density => {
                if self.beta.is_some() {
                    return Err(SchemaError("solve: 'beta' applies to the cdf form only".into()));
                }
                if wishart {
                    return Err(SchemaError("solve: the wishart kernel runs in the cdf form".into()));
                }
                let mut eq =
                    if kernel.is_pure() { DensityEquation::dyson() } else { DensityEquation::from_kernel(&kernel) };
                eq = eq.with_drift(drift);
                if let Some(s) = self.sigma {
                    eq = match s {
                        SigmaConfig::Constant { value } => eq.with_sigma(&format!("const({value})"), move |_| value),
                        SigmaConfig::Power { p } => eq.with_sigma(&format!("power({p})"), move |m| (1.0 + m).powf(p)),
                    };
                }
                if let Some(p) = self.penalty {
                    eq = eq.with_penalty(p);
                }
                Ok(SolvePlan::Density { m0: self.initial.density(grid)?, eq, spec: self.stepping.clone() })
            }
            Form::Cdf => {
                if self.sigma.is_some() || self.penalty.is_some() {
                    return Err(SchemaError("solve: 'sigma' and 'penalty' apply to the density form only".into()));
                }
                let u0 = self.initial.cdf(grid)?;
                if wishart {
                    let eta = self.eta.ok_or_else(|| SchemaError("solve: the wishart kernel needs 'eta'".into()))?;
                    if self.beta.is_some() {
                        return Err(SchemaError("solve: 'beta' is not supported with the wishart kernel".into()));
                    }
                    return Ok(SolvePlan::Wishart { u0, eta, drift, spec: self.stepping.clone() });
                }
                let mut eq = if kernel.is_pure() { CdfEquation::dyson() } else { CdfEquation::from_kernel(&kernel) };
                eq = eq.with_drift(drift);
                if let Some(b) = self.beta {
                    eq = eq.with_beta(b.build());
                }
                Ok(SolvePlan::Cdf { u0, eq, spec: self.stepping.clone() })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// reference

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// The self-similar solution from `δ_center` at time `t`.
    Semicircle {
        t: f64,
        #[serde(default)]
        center: f64,
        grid: GridConfig,
    },
    MarcenkoPastur {
        eta: f64,
        grid: GridConfig,
    },
    /// Density at time `t` from the Cauchy-transform characteristics.
    Characteristics {
        seed: BurgersSeed,
        t: f64,
        grid: GridConfig,
    },
    /// Spike path and absorption time for constant forcing.
    Spike {
        lambda0: f64,
    },
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Entropy,
    Lp,
    Linf,
    Variance,
    Comparison,
    Contraction,
}

impl std::str::FromStr for CheckName {
    type Err = SchemaError;
    fn from_str(s: &str) -> std::result::Result<Self, SchemaError> {
        serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
            .map_err(|_| SchemaError(format!("unknown check '{s}' (entropy|lp|linf|variance|comparison|contraction)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceLawConfig {
    #[default]
    Free,
    Linear {
        a: f64,
    },
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Flow directory, relative to the output root.
    #[serde(default = "default_input")]
    pub input: String,
    /// Second flow for the two-flow checks (comparison, contraction).
    #[serde(default)]
    pub against: Option<String>,
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckName>,
    /// Time window of the entropy identity; defaults to `[t0 + 0.1 (t1 - t0), t1]`.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    #[serde(default = "default_entropy_rel")]
    pub entropy_rel: f64,
    #[serde(default = "default_lp_slack")]
    pub lp_slack: f64,
    /// `sup m √t` bound; defaults to the grid-dependent bound of the pure flow.
    #[serde(default)]
    pub linf_bound: Option<f64>,
    #[serde(default = "default_linf_t_min")]
    pub linf_t_min: f64,
    #[serde(default)]
    pub variance_law: VarianceLawConfig,
    #[serde(default = "default_variance_tol")]
    pub variance_tol: f64,
    #[serde(default = "default_pair_slack")]
    pub pair_slack: f64,
}

fn default_input() -> String {
    "flow".into()
}
fn default_checks() -> Vec<CheckName> {
    vec![CheckName::Entropy, CheckName::Lp, CheckName::Linf]
}
fn default_entropy_rel() -> f64 {
    0.01
}
fn default_lp_slack() -> f64 {
    1e-6
}
fn default_linf_t_min() -> f64 {
    0.05
}
fn default_variance_tol() -> f64 {
    0.02
}
fn default_pair_slack() -> f64 {
    1e-8
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            input: default_input(),
            against: None,
            checks: default_checks(),
            window: None,
            entropy_rel: default_entropy_rel(),
            lp_slack: default_lp_slack(),
            linf_bound: None,
            linf_t_min: default_linf_t_min(),
            variance_law: VarianceLawConfig::Free,
            variance_tol: default_variance_tol(),
            pair_slack: default_pair_slack(),
        }
    }
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    Solve,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into the base section, e.g. `stepping.viscosity`.
    pub path: String,
    pub values: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub target: SweepTarget,
    /// A `solve` or `simulate` section.
    pub base: serde_json::Value,
    pub axes: Vec<SweepAxis>,
}

/// One point of the cartesian product, with the axis values that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub index: usize,
    pub coords: Vec<(String, serde_json::Value)>,
    pub section: serde_json::Value,
}

fn set_path(v: &mut serde_json::Value, path: &str, value: serde_json::Value) -> std::result::Result<(), SchemaError> {
    let mut cur = v;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, k) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| SchemaError(format!("sweep axis '{path}': '{k}' is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert((*k).to_string(), value);
            return Ok(());
        }
        cur = obj.entry(*k).or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(SchemaError(format!("sweep axis has an empty path '{path}'")))
}

impl SweepConfig {
    /// Expands the axes in row-major order (last axis fastest).
    pub fn jobs(&self) -> std::result::Result<Vec<SweepJob>, SchemaError> {
        if self.axes.is_empty() {
            return Err(SchemaError("sweep needs at least one axis".into()));
        }
        if let Some(a) = self.axes.iter().find(|a| a.values.is_empty()) {
            return Err(SchemaError(format!("sweep axis '{}' has no values", a.path)));
        }
        let total: usize = self.axes.iter().map(|a| a.values.len()).product();
        let mut jobs = Vec::with_capacity(total);
        for index in 0..total {
            let mut rem = index;
            let mut coords = vec![(String::new(), serde_json::Value::Null); self.axes.len()];
            for (k, axis) in self.axes.iter().enumerate().rev() {
                let i = rem % axis.values.len();
                rem /= axis.values.len();
                coords[k] = (axis.path.clone(), axis.values[i].clone());
            }
            let mut section = self.base.clone();
            for (p, v) in &coords {
                set_path(&mut section, p, v.clone())?;
            }
            jobs.push(SweepJob { index, coords, section });
        }
        Ok(jobs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = "{\n  \"schema\": 1,\n  \"solve\": {\"grid\": {\"a\": 0, \"b\": 1, \"h\": 0.1}, \"bogus\": 3}\n}";
        let err = RunConfig::parse(text, "cfg.json").unwrap_err();
        assert!(err.0.starts_with("cfg.json:3:"), "{}", err.0);
        assert!(err.0.contains("bogus"), "{}", err.0);
    }

    #[test]
    fn schema_version_is_checked() {
        assert!(RunConfig::parse("{\"schema\": 2}", "x").unwrap_err().0.contains("schema version 2"));
        assert!(RunConfig::parse("{}", "x").is_err());
        assert_eq!(RunConfig::parse("{\"schema\": 1}", "x").unwrap(), RunConfig::empty());
    }

    #[test]
    fn default_solve_round_trips() {
        let cfg = RunConfig { solve: Some(SolveConfig::default()), ..RunConfig::empty() };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::parse(&text, "x").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert!(matches!(back.solve.unwrap().plan().unwrap(), SolvePlan::Density { .. }));
    }

    #[test]
    fn inconsistent_solve_sections_are_schema_errors() {
        let mut s = SolveConfig { form: Form::Cdf, ..SolveConfig::default() };
        s.sigma = Some(SigmaConfig::Constant { value: 2.0 });
        assert!(s.plan().is_err());
        let s = SolveConfig { kernel: "wishart".into(), form: Form::Cdf, ..SolveConfig::default() };
        assert!(s.plan().err().unwrap().0.contains("eta"));
        let s = SolveConfig { kernel: "nope".into(), ..SolveConfig::default() };
        assert!(s.plan().is_err());
    }

    #[test]
    fn flags_parse() {
        assert_eq!(BarrierConfig::parse_flag("1.5,0.01").unwrap(), BarrierConfig::Penalized { r0: 1.5, eps: 0.01 });
        assert_eq!(BarrierConfig::parse_flag("2").unwrap(), BarrierConfig::Hard { r0: 2.0 });
        assert!(BarrierConfig::parse_flag("a,b").is_err());
        let s = SpikeSpec::parse_flag("3,linear:0.5").unwrap();
        assert_eq!((s.lambda0, s.a.as_str()), (3.0, "linear:0.5"));
        assert_eq!(SpikeSpec::parse_flag("2").unwrap().a, "const");
        assert_eq!("lp".parse::<CheckName>().unwrap(), CheckName::Lp);
        assert!("nope".parse::<CheckName>().is_err());
    }

    #[test]
    fn sweep_expands_cartesian_product() {
        let sweep = SweepConfig {
            target: SweepTarget::Solve,
            base: serde_json::to_value(SolveConfig::default()).unwrap(),
            axes: vec![
                SweepAxis { path: "stepping.viscosity".into(), values: vec![0.0.into(), 0.01.into()] },
                SweepAxis { path: "grid.h".into(), values: vec![0.02.into(), 0.01.into(), 0.005.into()] },
            ],
        };
        let jobs = sweep.jobs().unwrap();
        assert_eq!(jobs.len(), 6);
        assert_eq!(jobs[4].coords[0].1, serde_json::json!(0.01));
        assert_eq!(jobs[4].coords[1].1, serde_json::json!(0.01));
        let s: SolveConfig = section_from_value(jobs[4].section.clone(), "job").unwrap();
        assert_eq!(s.stepping.viscosity, 0.01);
        assert_eq!(s.grid.h, 0.01);
    }

    #[test]
    fn mixture_initial_is_normalized() {
        let grid = Grid::covering(-2.0, 2.0, 0.01).unwrap();
        let m = DensityInit::Mixture {
            components: vec![
                (1.0, DensityInit::Gaussian { mean: -0.5, sd: 0.1 }),
                (3.0, DensityInit::Uniform { a: 0.0, b: 1.0 }),
            ],
        }
        .density(grid)
        .unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        let u = DensityInit::MarcenkoPastur { eta: 2.0 }.cdf(Grid::covering(0.0, 4.0, 0.01).unwrap()).unwrap();
        assert!((u.values()[u.len() - 1] - 1.0).abs() < 1e-6);
    }
}
