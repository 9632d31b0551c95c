//! Monotone upwind scheme for the integrated (CDF) form.
//!
//! With `V_i` the velocity at node `i`, the update is
//!
//! ```text
//! u_i ← u_i - Δt V_i D_i + Δt ε (D⁺_i - D⁻_i)/h,   D_i = D⁻_i if V_i > 0, D⁺_i if V_i < 0,
//! ```
//!
//! where `D∓` are the backward/forward differences with ghosts `0` and `1`.
//! The nonlocal part of `V` is `Σ_j w_ij (u_i - u_j)` with `w_ij >= 0` (plus
//! tails toward the ghost values), so `u_i^{n+1}` is nondecreasing in every
//! `u_j^n` as long as
//!
//! ```text
//! Δt (|V_i|/h + c_i W_i D_i + 2ε/h²) <= 1,
//! ```
//!
//! with `W_i` the total weight of row `i`. This is the step bound used.
//! A sign-changing `β` breaks monotonicity by construction; the scheme then
//! relies on the clamp sweep and reports its magnitude.

use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::grid::{cdf_slopes, cdf_to_density, CdfGrid, Grid, GridField};
use crate::kernel::{BetaKernel, DriftSpec, InteractionKernel, LOperator, ScalarFn};
use crate::measure::half_laplacian::{HalfLaplacianPlan, Tails};

use super::{march, stable_dt, FlowRecord, PdeSpec, SchemeHealth};

const TAILS: Tails = Tails::Full { left: 0.0, right: 1.0 };

/// The nonlocal operator in the velocity.
#[derive(Debug, Clone)]
pub enum CdfOperator {
    /// `c(x) A0[u]`.
    HalfLaplacian,
    /// `L[u](x) = ∫ g(x, y) (u(x) - u(y))/(x - y)² dy` for a general kernel.
    Kernel(InteractionKernel),
}

/// Right-hand side of `∂t u + V ∂x u = ε ∂xx u`.
#[derive(Clone)]
pub struct CdfEquation {
    pub operator: CdfOperator,
    /// Coefficient of `A0`; `1` when absent. Unused by `CdfOperator::Kernel`.
    pub c: Option<ScalarFn>,
    pub drift: DriftSpec,
    pub beta: Option<BetaKernel>,
    pub label: String,
}

impl std::fmt::Debug for CdfEquation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label)
    }
}

impl CdfEquation {
    pub fn dyson() -> Self {
        Self {
            operator: CdfOperator::HalfLaplacian,
            c: None,
            drift: DriftSpec::zero(),
            beta: None,
            label: "dyson".into(),
        }
    }

    /// Pure kernels use the half-Laplacian plan; others the dense `L` operator.
    pub fn from_kernel(k: &InteractionKernel) -> Self {
        let operator = if k.is_pure() { CdfOperator::HalfLaplacian } else { CdfOperator::Kernel(k.clone()) };
        Self { operator, c: None, drift: k.drift().clone(), beta: None, label: k.name().into() }
    }

    /// `∂t u + ∂x u (x A0[u] + η - 1 + b) = 0` on the half-line.
    pub fn wishart(eta: f64, drift: DriftSpec) -> Self {
        let d = drift.clone();
        let total = match &drift {
            DriftSpec::SingularMonotone { bound, .. } => {
                DriftSpec::singular(&format!("wishart({eta})+{}", drift.label()), *bound, move |x| {
                    eta - 1.0 + d.value(0.0, x)
                })
            }
            DriftSpec::TimeDependent { lipschitz, .. } => {
                DriftSpec::time_dependent(&format!("wishart({eta})+{}", drift.label()), *lipschitz, move |t, x| {
                    eta - 1.0 + d.value(t, x)
                })
            }
            DriftSpec::Lipschitz { lipschitz, .. } => {
                DriftSpec::lipschitz(&format!("wishart({eta})+{}", drift.label()), *lipschitz, move |x| {
                    eta - 1.0 + d.value(0.0, x)
                })
            }
        };
        Self {
            operator: CdfOperator::HalfLaplacian,
            c: Some(Arc::new(|x| x)),
            drift: total,
            beta: None,
            label: format!("wishart({eta})"),
        }
    }

    pub fn with_drift(mut self, drift: DriftSpec) -> Self {
        self.label = format!("{}+{}", self.label, drift.label());
        self.drift = drift;
        self
    }

    pub fn with_c(mut self, c: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.c = Some(Arc::new(c));
        self
    }

    pub fn with_beta(mut self, beta: BetaKernel) -> Self {
        self.label = format!("{}+{}", self.label, beta.label());
        self.beta = Some(beta);
        self
    }
}

/// Discretized operator on a fixed grid.
struct CdfStepper {
    grid: Grid,
    eps: f64,
    c: Vec<f64>,
    plan: Option<HalfLaplacianPlan>,
    lop: Option<LOperator>,
    weight: Vec<f64>,
    beta: Option<BetaKernel>,
    drift: DriftSpec,
}

impl CdfStepper {
    fn new(eq: &CdfEquation, grid: Grid, spec: &PdeSpec) -> Result<Self> {
        let xs = grid.nodes();
        let c: Vec<f64> = match (&eq.operator, &eq.c) {
            (CdfOperator::HalfLaplacian, Some(c)) => xs.iter().map(|x| c(*x)).collect(),
            _ => vec![1.0; grid.n],
        };
        if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(LabError::Precondition(format!("c = {v} < 0 at x = {}", grid.node(i))));
        }
        let delta = spec.delta_split.unwrap_or(2.0 * grid.h);
        let (plan, lop, base) = match &eq.operator {
            CdfOperator::HalfLaplacian => {
                let p = HalfLaplacianPlan::new(grid, delta)?;
                let w = p.max_weight();
                (Some(p), None, w)
            }
            CdfOperator::Kernel(k) => {
                let l = LOperator::new(k, grid);
                let w = l.max_weight();
                (None, Some(l), w)
            }
        };
        let mut weight: Vec<f64> = c.iter().map(|ci| ci * base).collect();
        if let Some(b) = &eq.beta {
            let l1 = b.check_l1(&xs, grid.h)?;
            weight.iter_mut().for_each(|w| *w += l1);
        }
        Ok(Self { grid, eps: spec.viscosity, c, plan, lop, weight, beta: eq.beta.clone(), drift: eq.drift.clone() })
    }

    /// One-sided velocities `(V⁻, V⁺)` built from `b(x⁻)` and `b(x⁺)`.
    fn velocity(&self, u: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
        let a = match (&self.plan, &self.lop) {
            (Some(p), _) => p.apply(u, TAILS).iter().zip(&self.c).map(|(a, c)| a * c).collect(),
            (None, Some(l)) => l.apply(u, TAILS),
            _ => unreachable!("stepper has an operator"),
        };
        let b = self.beta.as_ref().map(|beta| beta.apply(self.grid, u));
        let n = self.grid.n;
        let mut vm = Vec::with_capacity(n);
        let mut vp = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = self.drift.one_sided(t, self.grid.node(i));
            let base = a[i] + b.as_ref().map_or(0.0, |b| b[i]);
            vm.push(base + lo);
            vp.push(base + hi);
        }
        (vm, vp)
    }

    fn step(&self, u: &mut [f64], t: f64, remaining: f64, spec: &PdeSpec, health: &mut SchemeHealth) -> Result<f64> {
        let h = self.grid.h;
        let (vm, vp) = self.velocity(u, t);
        let (back, fwd) = cdf_slopes(u, h, 0.0, 1.0);
        let diff = 2.0 * self.eps / (h * h);
        let rate = (0..u.len())
            .map(|i| vm[i].abs().max(vp[i].abs()) / h + self.weight[i] * back[i].max(fwd[i]) + diff)
            .fold(0.0, f64::max);
        let dt = stable_dt(spec, t, rate, remaining)?;
        for i in 0..u.len() {
            let transport = if vm[i] > 0.0 && vp[i] > 0.0 {
                vm[i] * back[i]
            } else if vm[i] < 0.0 && vp[i] < 0.0 {
                vp[i] * fwd[i]
            } else {
                0.0
            };
            u[i] += dt * (self.eps * (fwd[i] - back[i]) / h - transport);
        }
        let clamp = repair(u);
        health.max_clamp = health.max_clamp.max(clamp);
        if !clamp.is_finite() || clamp > spec.clamp_threshold {
            return Err(LabError::SchemeBreakdown { t: t + dt, clamp });
        }
        Ok(dt)
    }
}

/// Clamps to `[0, 1]` and takes the running maximum; returns the largest change.
fn repair(u: &mut [f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut run = 0.0_f64;
    for v in u.iter_mut() {
        if !v.is_finite() {
            return f64::INFINITY;
        }
        let fixed = v.clamp(0.0, 1.0).max(run);
        worst = worst.max((fixed - *v).abs());
        *v = fixed;
        run = fixed;
    }
    worst
}

/// Solves the CDF form from `u0`.
pub fn solve_cdf(u0: &CdfGrid, eq: &CdfEquation, spec: &PdeSpec) -> Result<FlowRecord> {
    spec.validate()?;
    let grid = u0.grid();
    let stepper = CdfStepper::new(eq, grid, spec)?;
    let mut health = SchemeHealth::new(spec.cfl_safety);
    if let Some(p) = &stepper.plan {
        health.delta_split = Some(p.delta());
        health.under_resolved = p.under_resolved();
    }
    let mut record = FlowRecord {
        label: eq.label.clone(),
        grid,
        times: Vec::new(),
        densities: Vec::new(),
        cdfs: Vec::new(),
        velocities: Vec::new(),
        hilbert: Vec::new(),
        health: SchemeHealth::default(),
        spec_hash: spec.hash(),
    };
    let mut u = u0.values().to_vec();
    march(
        spec,
        &mut u,
        &mut health,
        |u, t, rem, health| stepper.step(u, t, rem, spec, health),
        |u, t| {
            let cdf = CdfGrid::on_grid(grid, u.clone())?;
            let (vm, vp) = stepper.velocity(u, t);
            let v = vm.iter().zip(&vp).map(|(a, b)| 0.5 * (a + b)).collect();
            record.densities.push(cdf_to_density(&cdf, false)?);
            record.cdfs.push(cdf);
            record.velocities.push(GridField::on_grid(grid, v)?);
            record.times.push(t);
            Ok(())
        },
    )?;
    record.health = health;
    Ok(record)
}

/// CDF solve with the nonlocal term `B(x; u) = ∫ β(x, y) u(y) dy` added to the velocity.
///
/// `β` may change sign; see the module notes on monotonicity.
pub fn solve_with_b(u0: &CdfGrid, beta: &BetaKernel, eq: &CdfEquation, spec: &PdeSpec) -> Result<FlowRecord> {
    solve_cdf(u0, &eq.clone().with_beta(beta.clone()), spec)
}

/// CDF solve with a monotone drift that may jump.
///
/// At a jump the upwind side is taken from the total velocity: if both
/// one-sided velocities are positive the backward difference is used with
/// `b(x⁻)`, if both are negative the forward one with `b(x⁺)`, and an
/// expansive jump (signs differ) transports nothing.
pub fn solve_singular_drift(u0: &CdfGrid, drift: &DriftSpec, eq: &CdfEquation, spec: &PdeSpec) -> Result<FlowRecord> {
    if !drift.is_singular() {
        return Err(LabError::Precondition(format!("drift {} is not a singular monotone drift", drift.label())));
    }
    solve_cdf(u0, &eq.clone().with_drift(drift.clone()), spec)
}

/// Wishart flow on a grid inside `(0, ∞)` with the ghost `u(0) = 0`.
pub fn solve_wishart(u0: &CdfGrid, eta: f64, drift: &DriftSpec, spec: &PdeSpec) -> Result<FlowRecord> {
    if !(eta >= 1.0) {
        return Err(LabError::Precondition(format!("eta must be >= 1, got {eta}")));
    }
    if u0.grid().left_edge() < -1e-12 {
        return Err(LabError::Precondition(format!("Wishart grid starts at {} < 0", u0.grid().left_edge())));
    }
    solve_cdf(u0, &CdfEquation::wishart(eta, drift.clone()), spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{Convention, MarcenkoPastur, SemicircleFamily};

    fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn heaviside_spreads_to_semicircle() {
        let grid = Grid::covering(-3.0, 3.0, 1.0 / 100.0).unwrap();
        let u0 = CdfGrid::heaviside(grid, 0.0).unwrap();
        let rec = solve_cdf(&u0, &CdfEquation::dyson(), &PdeSpec::new(0.0, 1.0)).unwrap();
        let exact = SemicircleFamily::at_time(Convention::Raw, 1.0).unwrap();
        let e: Vec<f64> = grid.nodes().iter().map(|x| exact.cdf(*x)).collect();
        let err = sup_diff(rec.final_cdf().values(), &e);
        assert!(err < 0.03, "L∞ error {err}");
        assert!(rec.health.max_clamp < 1e-6, "clamp {}", rec.health.max_clamp);
    }

    #[test]
    fn ordering_preserved() {
        let grid = Grid::covering(-3.0, 3.0, 1.0 / 50.0).unwrap();
        let lo = CdfGrid::from_fn(grid, |x| ((x + 0.3) / 0.6).clamp(0.0, 1.0)).unwrap();
        let hi = CdfGrid::from_fn(grid, |x| ((x + 0.5) / 0.4).clamp(0.0, 1.0)).unwrap();
        let spec = PdeSpec::new(0.0, 0.5).with_uniform_samples(5);
        let a = solve_cdf(&lo, &CdfEquation::dyson(), &spec).unwrap();
        let b = solve_cdf(&hi, &CdfEquation::dyson(), &spec).unwrap();
        for (p, q) in a.cdfs.iter().zip(&b.cdfs) {
            assert!(p.values().iter().zip(q.values()).all(|(x, y)| *x <= *y + 1e-12));
        }
    }

    #[test]
    fn zero_beta_is_identity_reduction() {
        let grid = Grid::covering(-2.0, 2.0, 1.0 / 40.0).unwrap();
        let u0 = CdfGrid::from_fn(grid, |x| (x + 0.5).clamp(0.0, 1.0)).unwrap();
        let spec = PdeSpec::new(0.0, 0.2);
        let a = solve_cdf(&u0, &CdfEquation::dyson(), &spec).unwrap();
        let b = solve_with_b(&u0, &BetaKernel::zero(), &CdfEquation::dyson(), &spec).unwrap();
        assert!(sup_diff(a.final_cdf().values(), b.final_cdf().values()) < 1e-12);
    }

    #[test]
    fn wishart_keeps_mp_law() {
        let h = 1.0 / 100.0;
        let grid = Grid::covering(0.0, 5.0, h).unwrap();
        let mp = MarcenkoPastur::new(2.0, Convention::Raw).unwrap();
        let u0 = mp.sample_cdf(grid).unwrap();
        let rec = solve_wishart(&u0, 2.0, &DriftSpec::linear(-1.0), &PdeSpec::new(0.0, 0.5)).unwrap();
        let drift = sup_diff(rec.final_cdf().values(), u0.values());
        assert!(drift < 0.02, "MP drift {drift}");
    }

    #[test]
    fn wishart_rejects_negative_grid() {
        let grid = Grid::covering(-1.0, 3.0, 0.05).unwrap();
        let u0 = CdfGrid::heaviside(grid, 1.0).unwrap();
        assert!(solve_wishart(&u0, 2.0, &DriftSpec::zero(), &PdeSpec::new(0.0, 0.1)).is_err());
    }

    #[test]
    fn sign_drift_keeps_symmetry() {
        let grid = Grid::covering(-3.0, 3.0, 1.0 / 40.0).unwrap();
        let u0 = CdfGrid::from_fn(grid, |x| (x + 0.5).clamp(0.0, 1.0)).unwrap();
        let rec =
            solve_singular_drift(&u0, &DriftSpec::sign(), &CdfEquation::dyson(), &PdeSpec::new(0.0, 0.3)).unwrap();
        let u = rec.final_cdf().values();
        let n = u.len();
        for i in 0..n {
            assert!((u[i] + u[n - 1 - i] - 1.0).abs() < 1e-9, "asymmetry at {i}");
        }
        // Mass leaves the origin in both directions.
        let near_zero = u0.value_at(0.2) - u0.value_at(-0.2);
        assert!(rec.final_cdf().value_at(0.2) - rec.final_cdf().value_at(-0.2) < near_zero);
    }

    #[test]
    fn negative_c_rejected() {
        let grid = Grid::covering(-1.0, 1.0, 0.05).unwrap();
        let u0 = CdfGrid::heaviside(grid, 0.0).unwrap();
        let eq = CdfEquation::dyson().with_c(|x| x);
        assert!(solve_cdf(&u0, &eq, &PdeSpec::new(0.0, 0.1)).is_err());
    }
}
