//! Principal-value Hilbert transform `H[m](x) = p.v. ∫ m(y)/(x - y) dy` (no 1/π).
//!
//! The density is reconstructed as piecewise linear on each cell with
//! minmod-limited slopes, and every cell is integrated exactly. For a cell of
//! width `h` centred at `x_j` with value `m_j` and slope `s_j`,
//!
//! ```text
//! ∫ (m_j + s_j (y - x_j)) / (x - y) dy = (m_j + s_j d) log|(d + h/2)/(d - h/2)| - s_j h,   d = x - x_j.
//! ```
//!
//! The own cell cancels by symmetry apart from the `-s_j h` term, so the rule
//! is second order for smooth data and exact for piecewise-constant data. At
//! nodes (and at any fixed sub-cell offset) the sum is a Toeplitz product,
//! evaluated by FFT.

use crate::error::{LabError, Result};
use crate::grid::{GridDensity, GridField};
use crate::toeplitz::Toeplitz;

/// Edge cells may carry at most this fraction of the peak density.
pub const EDGE_DENSITY_TOL: f64 = 1e-6;

/// Minmod slopes with zero ghost cells beyond both ends.
pub fn minmod_slopes(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let l = (values[i] - if i == 0 { 0.0 } else { values[i - 1] }) / h;
            let r = ((if i + 1 == n { 0.0 } else { values[i + 1] }) - values[i]) / h;
            minmod(l, r)
        })
        .collect()
}

#[inline]
pub(crate) fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

#[inline]
fn cell_log(z: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        ((z + 0.5) / (z - 0.5)).abs().ln()
    }
}

/// Precomputed Hilbert quadrature for `n` nodes, evaluated at `x_i + offset*h`.
#[derive(Debug, Clone)]
pub struct HilbertPlan {
    n: usize,
    offset: f64,
    log_kernel: Toeplitz,
    slope_kernel: Toeplitz,
}

impl HilbertPlan {
    /// `offset` is measured in cells and must lie in `(-1/2, 1/2)`.
    pub fn new(n: usize, offset: f64) -> Self {
        assert!(offset.abs() < 0.5, "offset must stay inside the cell");
        let log_kernel = Toeplitz::new(n, |k| cell_log(k as f64 + offset));
        let slope_kernel = Toeplitz::new(n, |k| {
            let z = k as f64 + offset;
            z * cell_log(z) - 1.0
        });
        Self { n, offset, log_kernel, slope_kernel }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn apply(&self, values: &[f64], h: f64) -> Vec<f64> {
        let slopes = minmod_slopes(values, h);
        self.apply_with_slopes(values, &slopes, h)
    }

    pub fn apply_with_slopes(&self, values: &[f64], slopes: &[f64], h: f64) -> Vec<f64> {
        let a = self.log_kernel.apply(values);
        let b = self.slope_kernel.apply(slopes);
        a.iter().zip(&b).map(|(p, q)| p + h * q).collect()
    }
}

fn edge_check(m: &GridDensity, cells: &[usize]) -> Result<()> {
    let peak = m.max_value();
    for &i in cells {
        let v = m.values()[i];
        if v > EDGE_DENSITY_TOL * peak {
            return Err(LabError::EdgeSingularity { x: m.x(i), density: v });
        }
    }
    Ok(())
}

fn exterior_term(m: &GridDensity, x: f64) -> f64 {
    m.exterior().iter().map(|e| e.mass / (x - e.position)).sum()
}

fn direct_sum(m: &GridDensity, slopes: &[f64], x: f64) -> f64 {
    let h = m.h();
    m.values()
        .iter()
        .zip(slopes)
        .enumerate()
        .map(|(j, (&v, &s))| {
            let z = (x - m.x(j)) / h;
            (v + s * z * h) * cell_log(z) - s * h
        })
        .sum()
}

/// Hilbert transform of `m` at a single point.
pub fn hilbert(m: &GridDensity, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(LabError::Precondition(format!("evaluation point {x}")));
    }
    let grid = m.grid();
    if let Some(i) = grid.cell_of(x) {
        if i == 0 || i + 1 == grid.n {
            edge_check(m, &[i])?;
        }
    }
    let slopes = minmod_slopes(m.values(), m.h());
    // On a cell face the log terms of the two neighbours are individually
    // singular; the principal value is the symmetric average.
    let frac = grid.coordinate(x) + 0.5;
    let on_face = (frac - frac.round()).abs() < 1e-9;
    let value = if on_face {
        let e = 1e-7 * m.h();
        0.5 * (direct_sum(m, &slopes, x - e) + direct_sum(m, &slopes, x + e))
    } else {
        direct_sum(m, &slopes, x)
    };
    Ok(value + exterior_term(m, x))
}

/// Hilbert transform at every node.
pub fn hilbert_field(m: &GridDensity) -> Result<GridField> {
    edge_check(m, &[0, m.len() - 1])?;
    let plan = HilbertPlan::new(m.len(), 0.0);
    Ok(field_from_plan(m, &plan))
}

pub(crate) fn field_from_plan(m: &GridDensity, plan: &HilbertPlan) -> GridField {
    let mut values = plan.apply(m.values(), m.h());
    if !m.exterior().is_empty() {
        let shift = plan.offset() * m.h();
        for (i, v) in values.iter_mut().enumerate() {
            *v += exterior_term(m, m.x(i) + shift);
        }
    }
    let grid = m.grid();
    GridField::on_grid(grid, values).expect("finite Hilbert field")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ExteriorMass, Grid};
    use approx::assert_abs_diff_eq;

    fn uniform01(h: f64) -> GridDensity {
        let grid = Grid::covering(-0.5, 1.5, h).unwrap();
        GridDensity::from_fn(grid, |x| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 }, true).unwrap()
    }

    fn semicircle(r: f64, h: f64) -> GridDensity {
        let grid = Grid::covering(-1.25 * r, 1.25 * r, h).unwrap();
        let c = 2.0 / (std::f64::consts::PI * r * r);
        GridDensity::from_fn(grid, |x| c * (r * r - x * x).max(0.0).sqrt(), true).unwrap()
    }

    #[test]
    fn odd_symmetry_at_center() {
        let m = semicircle(2.0, 0.01);
        assert_abs_diff_eq!(hilbert(&m, 0.0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_is_exact() {
        // Piecewise-constant data is integrated exactly.
        let m = uniform01(0.01);
        assert_abs_diff_eq!(hilbert(&m, 0.75).unwrap(), 3f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(hilbert(&m, 2.0).unwrap(), 2f64.ln(), epsilon = 1e-12);
        let f = hilbert_field(&m).unwrap();
        let i = m.grid().cell_of(0.255).unwrap();
        let x = m.x(i);
        assert_abs_diff_eq!(f.values()[i], (x / (1.0 - x)).ln(), epsilon = 1e-12);
    }

    #[test]
    fn semicircle_outside_and_inside() {
        let m = semicircle(2.0, 0.005);
        assert_abs_diff_eq!(hilbert(&m, 3.0).unwrap(), 0.5 * (3.0 - 5f64.sqrt()), epsilon = 1e-5);
        let m1 = semicircle(1.0, 0.0025);
        assert_abs_diff_eq!(hilbert(&m1, 0.5).unwrap(), 1.0, epsilon = 2e-4);
    }

    #[test]
    fn field_matches_pointwise() {
        let m = semicircle(2.0, 0.02);
        let f = hilbert_field(&m).unwrap();
        for i in (0..m.len()).step_by(17) {
            let p = hilbert(&m, m.x(i)).unwrap();
            assert_abs_diff_eq!(f.values()[i], p, epsilon = 1e-10);
        }
    }

    #[test]
    fn offset_plan_matches_pointwise() {
        let m = semicircle(2.0, 0.02);
        let plan = HilbertPlan::new(m.len(), 0.3);
        let v = plan.apply(m.values(), m.h());
        for i in (1..m.len() - 1).step_by(13) {
            let p = hilbert(&m, m.x(i) + 0.3 * m.h()).unwrap();
            assert_abs_diff_eq!(v[i], p, epsilon = 1e-10);
        }
    }

    #[test]
    fn far_field_tail() {
        let m = semicircle(2.0, 0.01);
        let x = 200.0;
        let rel = (hilbert(&m, x).unwrap() * x - 1.0).abs();
        assert!(rel < 0.02);
    }

    #[test]
    fn exterior_mass_adds_pole() {
        let grid = Grid::covering(-1.0, 1.0, 0.01).unwrap();
        let m = GridDensity::from_fn(grid, |x| if x.abs() < 0.5 { 0.5 } else { 0.0 }, false)
            .unwrap()
            .with_exterior(vec![ExteriorMass { mass: 0.5, position: 10.0 }])
            .unwrap();
        let base = 0.5 * ((0.2f64 + 0.5) / (0.5 - 0.2)).ln();
        assert_abs_diff_eq!(hilbert(&m, 0.2).unwrap(), base + 0.5 / (0.2 - 10.0), epsilon = 1e-12);
    }

    #[test]
    fn edge_singularity_is_reported() {
        let grid = Grid::covering(0.0, 1.0, 0.01).unwrap();
        let m = GridDensity::from_fn(grid, |_| 1.0, true).unwrap();
        assert!(matches!(hilbert(&m, 0.999), Err(LabError::EdgeSingularity { .. })));
        assert!(hilbert_field(&m).is_err());
    }
}
