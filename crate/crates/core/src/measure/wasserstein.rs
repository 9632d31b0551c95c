//! Exact one-dimensional optimal transport through the quantile coupling
//! `W_p^p = ∫_0^1 |Q_µ(s) - Q_ν(s)|^p ds`.

use crate::error::{LabError, Result};
use crate::grid::{GridDensity, ParticleEnsemble};

/// Mass tolerance accepted as "normalized".
pub const MASS_TOL: f64 = 1e-6;

/// A measure accepted by [`wasserstein`].
#[derive(Debug, Clone, Copy)]
pub enum MeasureRef<'a> {
    Grid(&'a GridDensity),
    Particles(&'a ParticleEnsemble),
}

impl<'a> From<&'a GridDensity> for MeasureRef<'a> {
    fn from(m: &'a GridDensity) -> Self {
        MeasureRef::Grid(m)
    }
}

impl<'a> From<&'a ParticleEnsemble> for MeasureRef<'a> {
    fn from(e: &'a ParticleEnsemble) -> Self {
        MeasureRef::Particles(e)
    }
}

/// A piece of the quantile function, linear in `s` on `[s0, s1]`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    s0: f64,
    s1: f64,
    q0: f64,
    q1: f64,
}

impl Piece {
    fn at(&self, s: f64) -> f64 {
        if self.s1 <= self.s0 {
            return self.q0;
        }
        self.q0 + (self.q1 - self.q0) * (s - self.s0) / (self.s1 - self.s0)
    }
}

/// Quantile function of a grid density (linear CDF inside each cell) plus exterior atoms.
fn grid_quantile(m: &GridDensity) -> Result<Vec<Piece>> {
    let mass = m.total_mass();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(LabError::NotNormalized { mass });
    }
    let h = m.h();
    let mut items: Vec<(f64, f64, f64)> = m
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (m.x(i) - 0.5 * h, m.x(i) + 0.5 * h, v * h))
        .collect();
    items.extend(m.exterior().iter().filter(|e| e.mass > 0.0).map(|e| (e.position, e.position, e.mass)));
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(build(items, mass))
}

fn particle_quantile(e: &ParticleEnsemble) -> Vec<Piece> {
    let w = 1.0 / e.len() as f64;
    build(e.positions().iter().map(|&p| (p, p, w)).collect(), 1.0)
}

fn build(items: Vec<(f64, f64, f64)>, mass: f64) -> Vec<Piece> {
    let mut s = 0.0;
    let mut out = Vec::with_capacity(items.len());
    for (a, b, w) in items {
        let s1 = s + w / mass;
        out.push(Piece { s0: s, s1, q0: a, q1: b });
        s = s1;
    }
    if let Some(last) = out.last_mut() {
        last.s1 = 1.0;
    }
    out
}

fn quantile(m: MeasureRef<'_>) -> Result<Vec<Piece>> {
    match m {
        MeasureRef::Grid(g) => grid_quantile(g),
        MeasureRef::Particles(e) => Ok(particle_quantile(e)),
    }
}

/// `∫_0^1 |a + (b - a) t|^p dt`.
fn linear_power_integral(a: f64, b: f64, p: f64) -> f64 {
    if (b - a).abs() < 1e-14 * (a.abs() + b.abs() + 1e-300) {
        return a.abs().powf(p);
    }
    // Antiderivative of |x|^p is x|x|^p/(p+1).
    let f = |x: f64| x * x.abs().powf(p) / (p + 1.0);
    if a * b >= 0.0 {
        (f(b) - f(a)).abs() / (b - a).abs()
    } else {
        (f(b).abs() + f(a).abs()) / (b - a).abs()
    }
}

/// Exact `W_p` between two normalized measures, `p ∈ [1, ∞]`.
pub fn wasserstein<'a, 'b>(mu: impl Into<MeasureRef<'a>>, nu: impl Into<MeasureRef<'b>>, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(LabError::Precondition(format!("exponent {p} outside [1, ∞]")));
    }
    let qa = quantile(mu.into())?;
    let qb = quantile(nu.into())?;
    if qa.is_empty() || qb.is_empty() {
        return Err(LabError::InvalidDensity("measure without mass".into()));
    }
    let (mut i, mut j) = (0, 0);
    let mut s = 0.0;
    let mut acc = 0.0f64;
    while i < qa.len() && j < qb.len() {
        let end = qa[i].s1.min(qb[j].s1);
        if end > s {
            let d0 = qa[i].at(s) - qb[j].at(s);
            let d1 = qa[i].at(end) - qb[j].at(end);
            if p.is_infinite() {
                acc = acc.max(d0.abs()).max(d1.abs());
            } else {
                acc += (end - s) * linear_power_integral(d0, d1, p);
            }
            s = end;
        }
        if qa[i].s1 <= end {
            i += 1;
        }
        if qb[j].s1 <= end {
            j += 1;
        }
    }
    Ok(if p.is_infinite() { acc } else { acc.powf(1.0 / p) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn semicircle(r: f64, grid: Grid) -> GridDensity {
        let c = 2.0 / (PI * r * r);
        GridDensity::from_fn(grid, |x| c * (r * r - x * x).max(0.0).sqrt(), true).unwrap()
    }

    #[test]
    fn diracs() {
        let grid = Grid::covering(-2.0, 2.0, 0.01).unwrap();
        let a = GridDensity::point_mass(grid, -0.5).unwrap();
        let b = GridDensity::point_mass(grid, 0.7).unwrap();
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert_abs_diff_eq!(wasserstein(&a, &b, p).unwrap(), 1.2, epsilon = 1e-9);
        }
        let e = ParticleEnsemble::new(vec![0.3], 0.0).unwrap();
        let f = ParticleEnsemble::new(vec![-0.2], 0.0).unwrap();
        assert_abs_diff_eq!(wasserstein(&e, &f, 2.0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn translation() {
        let grid = Grid::covering(-3.0, 3.0, 0.01).unwrap();
        let m = semicircle(1.0, grid);
        let s = m.shifted(0.37);
        for p in [1.0, 2.0, f64::INFINITY] {
            assert_abs_diff_eq!(wasserstein(&m, &s, p).unwrap(), 0.37, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(wasserstein(&m, &m, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn semicircle_radii() {
        let grid = Grid::covering(-5.0, 5.0, 0.002).unwrap();
        let a = semicircle(2.0, grid);
        let b = semicircle(4.0, grid);
        assert_abs_diff_eq!(wasserstein(&a, &b, 2.0).unwrap(), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn rejects_unnormalized() {
        let grid = Grid::covering(-1.0, 1.0, 0.1).unwrap();
        let m = GridDensity::from_fn(grid, |_| 2.0, false).unwrap();
        assert!(wasserstein(&m, &m, 2.0).is_err());
    }

    #[test]
    fn grid_versus_particles_at_quantiles() {
        let grid = Grid::covering(-3.0, 3.0, 0.001).unwrap();
        let m = semicircle(2.0, grid);
        let n = 4000;
        let cdf = crate::grid::density_to_cdf(&m);
        let pos: Vec<f64> = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) / n as f64;
                let i = cdf.values().partition_point(|u| *u < s);
                cdf.x(i.min(cdf.len() - 1))
            })
            .collect();
        let e = ParticleEnsemble::new(pos, 0.0).unwrap();
        assert!(wasserstein(&m, &e, 2.0).unwrap() < 5e-3);
    }
}
