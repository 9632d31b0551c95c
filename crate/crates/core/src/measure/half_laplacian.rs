//! Half-Laplacian `A0 = d/dx H`, in the difference form
//! `A0[u](x) = ∫_0^∞ (2u(x) - u(x + z) - u(x - z)) / z^2 dz`, split at a radius
//! `δ` into the near part `A_{-δ}` (`z < δ`) and the far part `A_δ`.
//!
//! Quadrature: the trapezoid rule in `z` on the grid nodes `z = kh`. The
//! integrand is smooth at `z = 0`, where it equals `-u''(x)`; that endpoint
//! value is a second difference. Node `x_i ± kh` therefore carries the weight
//! `1/(k^2 h)`, the nearest neighbours an extra `1/(2h)`. Beyond the window
//! `u` is replaced by its limits at `±∞`, and the remaining sums of `1/k^2`
//! are evaluated in closed form. All weights are nonnegative, so the discrete
//! operator is monotone, and the split only moves weight between the parts.

use crate::error::{LabError, Result};
use crate::grid::{interpolate, Grid, GridField};
use crate::toeplitz::Toeplitz;

/// Behaviour of the field outside the sampled window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tails {
    /// Constant limits on both sides.
    Full { left: f64, right: f64 },
    /// Domain is the half line starting at the left edge of the first cell; only the right limit is used.
    HalfLine { right: f64 },
}

impl Tails {
    /// Constant extension of the end values.
    pub fn constant(values: &[f64]) -> Self {
        Tails::Full { left: values[0], right: values[values.len() - 1] }
    }
}

/// Near/far split of `A0[u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitValue {
    pub near: f64,
    pub far: f64,
    /// `δ < h`: the near part is dropped.
    pub under_resolved: bool,
}

impl SplitValue {
    pub fn total(&self) -> f64 {
        self.near + self.far
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(LabError::InvalidSplit(delta));
    }
    Ok(())
}

/// `Σ_{k > K} 1/k^2`.
pub(crate) fn inverse_square_tail(k: usize) -> f64 {
    let mut direct = 0.0;
    let mut j = k + 1;
    while j < 40 {
        direct += 1.0 / (j * j) as f64;
        j += 1;
    }
    // Euler–Maclaurin for Σ_{k ≥ j} 1/k^2.
    let x = j as f64;
    direct + 1.0 / x + 0.5 / (x * x) + 1.0 / (6.0 * x * x * x) - 1.0 / (30.0 * x.powi(5)) + 1.0 / (42.0 * x.powi(7))
}

/// Fraction of the trapezoid weight at offset `k` that belongs to the near part.
fn near_fraction(k: u64, h: f64, delta: f64) -> f64 {
    if delta < h {
        return 0.0;
    }
    let z = k as f64 * h;
    if (z - delta).abs() <= 1e-9 * h {
        0.5
    } else if z < delta {
        1.0
    } else {
        0.0
    }
}

/// Near and far weights of offset `k >= 1` (per side).
pub(crate) fn offset_weights(k: u64, h: f64, delta: f64) -> (f64, f64) {
    let mut w = 1.0 / ((k * k) as f64 * h);
    let mut core = 0.0;
    if k == 1 {
        core = 1.0 / (2.0 * h);
    }
    let f = near_fraction(k, h, delta);
    let near = f * w + if delta >= h { core } else { 0.0 };
    w *= 1.0 - f;
    (near, w)
}

/// Near and far weights of every offset beyond `k_max` (constant extension).
pub(crate) fn tail_weights(k_max: usize, h: f64, delta: f64) -> (f64, f64) {
    let total = inverse_square_tail(k_max) / h;
    if delta < h {
        return (0.0, total);
    }
    if delta.is_infinite() {
        return (total, 0.0);
    }
    let kd = (delta / h + 1e-9).floor() as usize;
    if kd <= k_max {
        return (0.0, total);
    }
    let mut near = (inverse_square_tail(k_max) - inverse_square_tail(kd)) / h;
    if near_fraction(kd as u64, h, delta) == 0.5 {
        near -= 0.5 / ((kd * kd) as f64 * h);
    }
    (near, total - near)
}

/// Precomputed half-Laplacian on `n` nodes with spacing `h` and split `δ`.
#[derive(Debug, Clone)]
pub struct HalfLaplacianPlan {
    grid: Grid,
    delta: f64,
    near: Toeplitz,
    far: Toeplitz,
    near_rows: Vec<f64>,
    far_rows: Vec<f64>,
    tail_left: Vec<(f64, f64)>,
    tail_right: Vec<(f64, f64)>,
}

impl HalfLaplacianPlan {
    pub fn new(grid: Grid, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let h = grid.h;
        let weight = |k: i64, part: usize| {
            if k == 0 {
                0.0
            } else {
                let (a, b) = offset_weights(k.unsigned_abs(), h, delta);
                if part == 0 {
                    a
                } else {
                    b
                }
            }
        };
        let near = Toeplitz::new(grid.n, |k| weight(k, 0));
        let far = Toeplitz::new(grid.n, |k| weight(k, 1));
        let near_rows = near.row_sums();
        let far_rows = far.row_sums();
        let tail_left = (0..grid.n).map(|i| tail_weights(i, h, delta)).collect();
        let tail_right = (0..grid.n).map(|i| tail_weights(grid.n - 1 - i, h, delta)).collect();
        Ok(Self { grid, delta, near, far, near_rows, far_rows, tail_left, tail_right })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn under_resolved(&self) -> bool {
        self.delta < self.grid.h
    }

    /// Largest total weight attached to a node (interior cells plus tails).
    pub fn max_weight(&self) -> f64 {
        (0..self.grid.n)
            .map(|i| {
                self.near_rows[i]
                    + self.far_rows[i]
                    + self.tail_left[i].0
                    + self.tail_left[i].1
                    + self.tail_right[i].0
                    + self.tail_right[i].1
            })
            .fold(0.0, f64::max)
    }

    /// Near and far parts at every node.
    pub fn apply_split(&self, u: &[f64], tails: Tails) -> (Vec<f64>, Vec<f64>) {
        let cn = self.near.apply(u);
        let cf = self.far.apply(u);
        let n = self.grid.n;
        let mut near = Vec::with_capacity(n);
        let mut far = Vec::with_capacity(n);
        for i in 0..n {
            let (left, right) = match tails {
                Tails::Full { left, right } => (Some(left), right),
                Tails::HalfLine { right } => (None, right),
            };
            let mut a = u[i] * self.near_rows[i] - cn[i];
            let mut b = u[i] * self.far_rows[i] - cf[i];
            if let Some(l) = left {
                a += (u[i] - l) * self.tail_left[i].0;
                b += (u[i] - l) * self.tail_left[i].1;
            }
            a += (u[i] - right) * self.tail_right[i].0;
            b += (u[i] - right) * self.tail_right[i].1;
            near.push(a);
            far.push(b);
        }
        (near, far)
    }

    pub fn apply(&self, u: &[f64], tails: Tails) -> Vec<f64> {
        let (a, b) = self.apply_split(u, tails);
        a.iter().zip(&b).map(|(p, q)| p + q).collect()
    }
}

/// `A_{-δ}[u](x) + A_δ[u](x)` at a single point, with constant tails.
///
/// Node values are computed exactly; other points interpolate the two
/// neighbouring nodes linearly.
pub fn half_laplacian(u: &GridField, x: f64, delta: f64) -> Result<SplitValue> {
    half_laplacian_with_tails(u, x, delta, Tails::constant(u.values()))
}

pub fn half_laplacian_with_tails(u: &GridField, x: f64, delta: f64, tails: Tails) -> Result<SplitValue> {
    check_delta(delta)?;
    if !x.is_finite() {
        return Err(LabError::Precondition(format!("evaluation point {x}")));
    }
    let grid = u.grid();
    let s = grid.coordinate(x).clamp(0.0, (grid.n - 1) as f64);
    let i0 = s.floor() as usize;
    let nodes: Vec<usize> = if (s - i0 as f64) < 1e-12 || i0 + 1 == grid.n { vec![i0] } else { vec![i0, i0 + 1] };
    let vals: Vec<(f64, f64)> = nodes.iter().map(|&i| node_value(u, i, delta, tails)).collect();
    let (near, far) = if vals.len() == 1 {
        vals[0]
    } else {
        let w = s - i0 as f64;
        let near = interpolate_pair(vals[0].0, vals[1].0, w);
        let far = interpolate_pair(vals[0].1, vals[1].1, w);
        (near, far)
    };
    Ok(SplitValue { near, far, under_resolved: delta < grid.h })
}

fn interpolate_pair(a: f64, b: f64, w: f64) -> f64 {
    a * (1.0 - w) + b * w
}

fn node_value(u: &GridField, i: usize, delta: f64, tails: Tails) -> (f64, f64) {
    let v = u.values();
    let n = v.len();
    let h = u.h();
    let (mut near, mut far) = (0.0, 0.0);
    for (j, &vj) in v.iter().enumerate() {
        if j == i {
            continue;
        }
        let (a, b) = offset_weights(i.abs_diff(j) as u64, h, delta);
        near += a * (v[i] - vj);
        far += b * (v[i] - vj);
    }
    if let Tails::Full { left, .. } = tails {
        let (a, b) = tail_weights(i, h, delta);
        near += a * (v[i] - left);
        far += b * (v[i] - left);
    }
    let right = match tails {
        Tails::Full { right, .. } | Tails::HalfLine { right } => right,
    };
    let (a, b) = tail_weights(n - 1 - i, h, delta);
    near += a * (v[i] - right);
    far += b * (v[i] - right);
    (near, far)
}

/// `A0[u]` at every node with constant tails.
pub fn half_laplacian_field(u: &GridField, delta: f64) -> Result<GridField> {
    let plan = HalfLaplacianPlan::new(u.grid(), delta)?;
    GridField::on_grid(u.grid(), plan.apply(u.values(), Tails::constant(u.values())))
}

/// Linear interpolation helper re-exported for off-node evaluation of fields.
pub fn field_value(grid: &Grid, values: &[f64], x: f64) -> f64 {
    interpolate(grid, values, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn gaussian(h: f64) -> GridField {
        let grid = Grid::covering(-12.0, 12.0, h).unwrap();
        GridField::from_fn(grid, |x| (-x * x / 2.0).exp()).unwrap()
    }

    #[test]
    fn constant_is_annihilated() {
        let grid = Grid::covering(-1.0, 1.0, 0.01).unwrap();
        let u = GridField::from_fn(grid, |_| 3.0).unwrap();
        let v = half_laplacian(&u, 0.2, 0.05).unwrap();
        assert_abs_diff_eq!(v.total(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_at_origin() {
        // Symbol π|ξ| with û = e^{-ξ²/2}: (2π)^{-1/2} ∫ π|ξ| e^{-ξ²/2} dξ = √(2π).
        let u = gaussian(0.005);
        let v = half_laplacian(&u, 0.0, 0.02).unwrap();
        assert_abs_diff_eq!(v.total(), (2.0 * PI).sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn split_independence() {
        let u = gaussian(0.01);
        let a = half_laplacian(&u, 0.3, 0.02).unwrap().total();
        let b = half_laplacian(&u, 0.3, 0.5).unwrap().total();
        let c = half_laplacian(&u, 0.3, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        assert_abs_diff_eq!(a, c.total(), epsilon = 1e-12);
        assert_eq!(c.far, 0.0);
    }

    #[test]
    fn uniform_cdf_at_two() {
        // A0[u](2) = H[m](2) = log 2 for the uniform CDF on [0, 1].
        let grid = Grid::covering(-1.0, 3.0, 0.0025).unwrap();
        let u = GridField::from_fn(grid, |x| x.clamp(0.0, 1.0)).unwrap();
        let v = half_laplacian_with_tails(&u, 2.0, 0.01, Tails::Full { left: 0.0, right: 1.0 }).unwrap();
        assert_abs_diff_eq!(v.total(), 2f64.ln(), epsilon = 1e-4);
    }

    #[test]
    fn under_resolved_split_is_flagged() {
        let u = gaussian(0.05);
        let v = half_laplacian(&u, 0.0, 0.01).unwrap();
        assert!(v.under_resolved);
        assert_eq!(v.near, 0.0);
        assert!(half_laplacian(&u, 0.0, 0.0).is_err());
        assert!(half_laplacian(&u, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn field_matches_pointwise() {
        let u = gaussian(0.05);
        let f = half_laplacian_field(&u, 0.1).unwrap();
        for i in (0..u.len()).step_by(37) {
            let p = half_laplacian(&u, u.x(i), 0.1).unwrap().total();
            assert_abs_diff_eq!(f.values()[i], p, epsilon = 1e-10);
        }
    }

    #[test]
    fn inverse_square_tail_sums() {
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert_abs_diff_eq!(inverse_square_tail(0), zeta2, epsilon = 1e-12);
        let partial: f64 = (1..=20).map(|k| 1.0 / (k * k) as f64).sum();
        assert_abs_diff_eq!(inverse_square_tail(20), zeta2 - partial, epsilon = 1e-12);
    }

    #[test]
    fn second_order_convergence() {
        let err = |h: f64| (half_laplacian(&gaussian(h), 0.0, 0.05).unwrap().total() - (2.0 * PI).sqrt()).abs();
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 3.5, "ratio {ratio}");
    }

    #[test]
    fn weights_are_nonnegative() {
        for &delta in &[0.001, 0.02, 0.3, f64::INFINITY] {
            for k in 1..50 {
                let (a, b) = offset_weights(k, 0.01, delta);
                assert!(a >= 0.0 && b >= 0.0);
            }
        }
    }
}
