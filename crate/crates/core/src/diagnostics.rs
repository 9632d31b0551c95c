//! Checks of the bounds, monotone quantities and identities satisfied along a flow.
//!
//! Every check consumes recorded snapshots and returns a [`CheckReport`]
//! holding the measured series, the tolerance it was judged against and the
//! worst violation, so a failure can be traced to a scheme-health counter or
//! to the identity itself.

use std::fmt;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::{GridDensity, ParticleEnsemble};
use crate::measure::functionals::{entropy_dissipation, free_entropy, lp_norm, variance};
use crate::measure::wasserstein::wasserstein;
use crate::particle::TrajectoryRecord;
use crate::pde::FlowRecord;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub times: Vec<f64>,
    pub measured: Vec<f64>,
    pub tolerance: f64,
    /// Largest amount by which the tolerance was exceeded (0 when passing).
    pub worst_violation: f64,
    /// Named scalars specific to the check.
    pub details: Vec<(String, f64)>,
    /// Spec hashes of the inputs.
    pub provenance: Vec<String>,
}

impl CheckReport {
    fn new(name: &str, tolerance: f64, flows: &[&FlowRecord]) -> Self {
        Self {
            name: name.into(),
            passed: true,
            times: Vec::new(),
            measured: Vec::new(),
            tolerance,
            worst_violation: 0.0,
            details: Vec::new(),
            provenance: flows.iter().map(|f| f.spec_hash.clone()).collect(),
        }
    }

    /// Records `excess > 0` as a violation.
    fn violate(&mut self, excess: f64) {
        if excess > 0.0 || excess.is_nan() {
            self.passed = false;
            self.worst_violation = self.worst_violation.max(if excess.is_nan() { f64::INFINITY } else { excess });
        }
    }

    fn detail(&mut self, key: &str, v: f64) {
        self.details.push((key.into(), v));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:<4} tol={:<10.3e} worst={:<10.3e}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.tolerance,
            self.worst_violation
        )?;
        for (k, v) in &self.details {
            write!(f, " {k}={v:.4e}")?;
        }
        Ok(())
    }
}

/// One line per report.
pub fn render_table(reports: &[CheckReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

fn positive_times(flow: &FlowRecord, t_min: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    flow.times.iter().cloned().enumerate().filter(move |(_, t)| *t >= t_min && *t > 0.0)
}

/// `sup_x m(t, x) √t <= bound` at every snapshot with `t >= t_min`; reports the fitted constant.
pub fn check_linf_bound(flow: &FlowRecord, bound: f64, t_min: f64) -> CheckReport {
    let mut r = CheckReport::new("linf_bound", bound, &[flow]);
    for (k, t) in positive_times(flow, t_min) {
        let c = flow.densities[k].max_value() * t.sqrt();
        r.times.push(t);
        r.measured.push(c);
        r.violate(c - bound);
    }
    let fit = r.measured.iter().cloned().fold(0.0, f64::max);
    r.detail("c_fit", fit);
    r
}

/// Default bound for the pure flow on a grid of spacing `h`.
pub fn pure_linf_bound(h: f64) -> f64 {
    1.0 + 5.0 * h
}

/// `‖m_t‖_p` nonincreasing for each `p`, within `slack` plus the clipped mass.
pub fn check_lp_decay(flow: &FlowRecord, ps: &[f64], slack: f64) -> Result<CheckReport> {
    let tol = slack + flow.health.clipped_mass;
    let mut r = CheckReport::new("lp_decay", tol, &[flow]);
    for &p in ps {
        let norms = flow.densities.iter().map(|d| lp_norm(d, p)).collect::<Result<Vec<_>>>()?;
        let mut worst: f64 = 0.0;
        for w in norms.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
        r.violate(worst - tol);
        r.detail(&format!("max_increase_p{p}"), worst);
        if r.times.is_empty() {
            r.times = flow.times.clone();
            r.measured = norms;
        }
    }
    Ok(r)
}

/// Trapezoid rule on possibly uneven nodes.
fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2).zip(ys.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}

/// `E(m_t) - E(m_{t'}) = ∫ ∫ H[m_s]² m_s ds` over `[t', t]`, and `E` nondecreasing.
///
/// Snapshots inside the window serve as quadrature nodes; the residual is
/// judged against `rel·|ΔE| + abs`.
pub fn check_entropy_identity(flow: &FlowRecord, window: (f64, f64), rel: f64, abs: f64) -> Result<CheckReport> {
    let idx: Vec<usize> =
        (0..flow.len()).filter(|&k| flow.times[k] >= window.0 - 1e-12 && flow.times[k] <= window.1 + 1e-12).collect();
    if idx.len() < 3 {
        return Err(LabError::Precondition("entropy identity needs at least three snapshots in the window".into()));
    }
    let ts: Vec<f64> = idx.iter().map(|&k| flow.times[k]).collect();
    let es: Vec<f64> = idx.iter().map(|&k| free_entropy(&flow.densities[k])).collect();
    let ds = idx.iter().map(|&k| entropy_dissipation(&flow.densities[k])).collect::<Result<Vec<_>>>()?;
    let mut r = CheckReport::new("entropy_identity", rel, &[flow]);
    let gain = es[es.len() - 1] - es[0];
    let integral = trapezoid(&ts, &ds);
    let residual = (gain - integral).abs();
    let tol = rel * gain.abs() + abs;
    r.tolerance = tol;
    r.violate(residual - tol);
    let mut drop: f64 = 0.0;
    for w in es.windows(2) {
        drop = drop.max(w[0] - w[1]);
    }
    r.violate(drop - abs);
    r.detail("entropy_gain", gain);
    r.detail("dissipation_integral", integral);
    r.detail("relative_residual", residual / gain.abs().max(1e-300));
    r.detail("max_entropy_drop", drop);
    r.times = ts;
    r.measured = es;
    Ok(r)
}

/// `W_p` between two flows nonincreasing in time, within `slack`.
pub fn check_w_contraction(a: &FlowRecord, b: &FlowRecord, p: f64, slack: f64) -> Result<CheckReport> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12) {
        return Err(LabError::Precondition("flows must share their snapshot times".into()));
    }
    let tol = slack + 2.0 * (a.health.clipped_mass + b.health.clipped_mass);
    let mut r = CheckReport::new("w_contraction", tol, &[a, b]);
    let ds = a.densities.iter().zip(&b.densities).map(|(x, y)| wasserstein(x, y, p)).collect::<Result<Vec<_>>>()?;
    for w in ds.windows(2) {
        r.violate(w[1] - w[0] - tol);
    }
    r.detail("initial", ds[0]);
    r.detail("final", ds[ds.len() - 1]);
    r.times = a.times.clone();
    r.measured = ds;
    Ok(r)
}

/// `u_1(t) <= u_2(t) + slack` at every snapshot; rejects crossing initial data.
pub fn check_comparison(lower: &FlowRecord, upper: &FlowRecord, slack: f64) -> Result<CheckReport> {
    let excess = |k: usize| -> f64 {
        lower.cdfs[k].values().iter().zip(upper.cdfs[k].values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
    };
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(LabError::Precondition("flows must have matching snapshots".into()));
    }
    if !lower.grid.same_geometry(&upper.grid) {
        return Err(LabError::Precondition("flows must share a grid".into()));
    }
    if excess(0) > slack {
        return Err(LabError::Precondition(format!("initial data cross by {}", excess(0))));
    }
    let mut r = CheckReport::new("comparison", slack, &[lower, upper]);
    for k in 0..lower.len() {
        let e = excess(k);
        r.times.push(lower.times[k]);
        r.measured.push(e);
        r.violate(e - slack);
    }
    Ok(r)
}

/// Moment law for the variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceLaw {
    /// Pure flow: `Var' = 1`.
    Free,
    /// Drift `b = -a x`: `Var' = 1 - 2a Var`.
    Linear { a: f64 },
    /// No interaction: `Var' = 0`.
    Frozen,
}

/// Fits the recorded variance to its moment law.
///
/// `Free` and `Frozen` compare the least-squares slope with `1` and `0`.
/// `Linear` compares each increment with the exact solution of the ODE
/// started from the recorded value, relative to the largest predicted increment.
pub fn check_variance_identity(flow: &FlowRecord, law: VarianceLaw, rel_tol: f64) -> CheckReport {
    let vars: Vec<f64> = flow.densities.iter().map(variance).collect();
    let ts = &flow.times;
    let mut r = CheckReport::new("variance_identity", rel_tol, &[flow]);
    match law {
        VarianceLaw::Free | VarianceLaw::Frozen => {
            let target = if law == VarianceLaw::Free { 1.0 } else { 0.0 };
            let n = ts.len() as f64;
            let mt = ts.iter().sum::<f64>() / n;
            let mv = vars.iter().sum::<f64>() / n;
            let sxy: f64 = ts.iter().zip(&vars).map(|(t, v)| (t - mt) * (v - mv)).sum();
            let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
            let slope = sxy / sxx;
            r.detail("slope", slope);
            r.violate((slope - target).abs() - rel_tol * target.max(1.0));
        }
        VarianceLaw::Linear { a } => {
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for k in 1..ts.len() {
                let dt = ts[k] - ts[k - 1];
                let predicted = if a == 0.0 {
                    vars[k - 1] + dt
                } else {
                    let eq = 1.0 / (2.0 * a);
                    eq + (vars[k - 1] - eq) * (-2.0 * a * dt).exp()
                };
                worst = worst.max((vars[k] - predicted).abs());
                scale = scale.max((predicted - vars[k - 1]).abs());
            }
            let rel = worst / scale.max(1e-300);
            r.detail("relative_residual", rel);
            r.violate(rel - rel_tol);
        }
    }
    r.times = ts.clone();
    r.measured = vars;
    r
}

/// Particle runs at one population size.
#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub n: usize,
    pub records: Vec<TrajectoryRecord>,
}

impl ParticleRun {
    /// All replicas pooled into one empirical measure at time `t`.
    pub fn pooled_at(&self, t: f64) -> Result<ParticleEnsemble> {
        let parts = self
            .records
            .iter()
            .map(|r| r.ensemble_at(t).ok_or_else(|| LabError::Precondition(format!("no particle snapshot at t = {t}"))))
            .collect::<Result<Vec<_>>>()?;
        ParticleEnsemble::pooled(parts)
    }
}

/// Tolerances for [`convergence_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureTolerances {
    pub particle_pde: f64,
    pub pde_reference: f64,
    /// Expected slope of the particle error against `N`.
    pub slope: f64,
    /// Accepted factor around the expected slope.
    pub slope_factor: f64,
}

impl Default for ClosureTolerances {
    fn default() -> Self {
        Self { particle_pde: 0.05, pde_reference: 0.02, slope: -0.5, slope_factor: 3.0 }
    }
}

/// Pairwise `W_2` between particles, the solved flow and a reference at time `t`,
/// plus the log-log slope of the particle error against `N`.
pub fn convergence_report(
    runs: &[ParticleRun],
    pde: &FlowRecord,
    reference: &GridDensity,
    t: f64,
    tol: ClosureTolerances,
) -> Result<CheckReport> {
    let k = pde.index_near(t);
    if (pde.times[k] - t).abs() > 1e-9 {
        return Err(LabError::Precondition(format!("flow has no snapshot at t = {t}")));
    }
    let m = &pde.densities[k];
    let mut r = CheckReport::new("three_way_closure", tol.particle_pde, &[pde]);
    let pde_ref = wasserstein(m, reference, 2.0)?;
    r.detail("w2_pde_reference", pde_ref);
    r.violate(pde_ref - tol.pde_reference);
    let mut pts = Vec::new();
    let mut largest = (0usize, f64::NAN);
    for run in runs {
        let e = run.pooled_at(t)?;
        let to_ref = wasserstein(&e, reference, 2.0)?;
        let to_pde = wasserstein(&e, m, 2.0)?;
        r.detail(&format!("w2_particles_reference_n{}", run.n), to_ref);
        r.detail(&format!("w2_particles_pde_n{}", run.n), to_pde);
        r.times.push(run.n as f64);
        r.measured.push(to_ref);
        pts.push(((run.n as f64).ln(), to_ref.ln()));
        if run.n > largest.0 {
            largest = (run.n, to_pde);
        }
    }
    r.violate(largest.1 - tol.particle_pde);
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        r.detail("slope", slope);
        let ratio = slope / tol.slope;
        if !(ratio >= 1.0 / tol.slope_factor && ratio <= tol.slope_factor) {
            r.violate(f64::INFINITY);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{Convention, SemicircleFamily};
    use crate::grid::Grid;

    fn semicircle_flow(times: &[f64], h: f64) -> FlowRecord {
        let grid = Grid::covering(-4.5, 4.5, h).unwrap();
        let ds = times
            .iter()
            .map(|t| SemicircleFamily::at_time(Convention::Raw, *t).unwrap().sample(grid).unwrap())
            .collect();
        FlowRecord::from_densities("semicircle", times.to_vec(), ds).unwrap()
    }

    fn times(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
    }

    #[test]
    fn semicircle_linf_constant_is_one_over_pi() {
        let f = semicircle_flow(&times(0.1, 1.0, 9), 1.0 / 400.0);
        let r = check_linf_bound(&f, pure_linf_bound(1.0 / 400.0), 0.05);
        assert!(r.passed);
        assert!((r.get("c_fit").unwrap() - 1.0 / std::f64::consts::PI).abs() < 5e-3);
    }

    #[test]
    fn frozen_uniform_fails_linf_bound() {
        let grid = Grid::covering(-3.0, 3.0, 0.01).unwrap();
        let ts = times(0.1, 4.0, 10);
        let ds = ts
            .iter()
            .map(|_| GridDensity::from_fn(grid, |x| if x.abs() < 0.25 { 1.0 } else { 0.0 }, true).unwrap())
            .collect();
        let f = FlowRecord::from_densities("frozen", ts, ds).unwrap();
        assert!(!check_linf_bound(&f, 1.0, 0.05).passed);
        let v = check_variance_identity(&f, VarianceLaw::Frozen, 0.02);
        assert!(v.passed);
        assert!(!check_variance_identity(&f, VarianceLaw::Free, 0.02).passed);
    }

    #[test]
    fn entropy_identity_closed_form_and_reversal() {
        let f = semicircle_flow(&times(0.1, 1.0, 36), 1.0 / 200.0);
        let r = check_entropy_identity(&f, (0.1, 1.0), 0.01, 1e-4).unwrap();
        assert!(r.passed, "{r}");
        let gain = r.get("entropy_gain").unwrap();
        assert!((gain - 0.25 * 10.0_f64.ln()).abs() < 1e-3, "gain {gain}");
        assert!(!check_entropy_identity(&f.reversed(), (0.1, 1.0), 0.01, 1e-4).unwrap().passed);
    }

    #[test]
    fn lp_decay_on_semicircles() {
        let f = semicircle_flow(&times(0.1, 1.0, 9), 1.0 / 200.0);
        let r = check_lp_decay(&f, &[1.0, 2.0, 3.0, f64::INFINITY], 1e-6).unwrap();
        assert!(r.passed, "{r}");
        assert!(!check_lp_decay(&f.reversed(), &[2.0], 1e-6).unwrap().passed);
    }

    #[test]
    fn nested_semicircles_distance() {
        let ts = times(0.0, 2.0, 4);
        let a = semicircle_flow(&ts.iter().map(|t| t + 0.5).collect::<Vec<_>>(), 1.0 / 400.0);
        let b = semicircle_flow(&ts.iter().map(|t| t + 1.5).collect::<Vec<_>>(), 1.0 / 400.0);
        let mut b2 = b.clone();
        b2.times = a.times.clone();
        let r = check_w_contraction(&a, &b2, 2.0, 1e-6).unwrap();
        assert!(r.passed);
        for (s, w) in a.times.iter().zip(&r.measured) {
            let exact = (s + 1.0).sqrt() - s.sqrt();
            assert!((w - exact).abs() < 0.01 * exact, "t={s}: {w} vs {exact}");
        }
    }

    #[test]
    fn comparison_rejects_crossing_seeds() {
        let f = semicircle_flow(&[0.5, 1.0], 0.01);
        let g = semicircle_flow(&[0.25, 0.5], 0.01);
        // Both centred: narrower and wider CDFs cross at the origin.
        assert!(check_comparison(&f, &g, 1e-8).is_err());
        assert!(check_comparison(&f, &f, 1e-8).unwrap().passed);
    }

    #[test]
    fn report_line_mentions_status() {
        let f = semicircle_flow(&[0.5, 1.0], 0.01);
        let r = check_linf_bound(&f, 1.0, 0.0);
        let line = format!("{r}");
        assert!(line.starts_with("linf_bound") && line.contains("PASS"));
        assert_eq!(render_table(&[r.clone(), r]).lines().count(), 2);
    }
}
