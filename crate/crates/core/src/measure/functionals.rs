//! Scalar functionals of grid measures.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::half_laplacian::{HalfLaplacianPlan, Tails};
use super::hilbert::{field_from_plan, minmod_slopes, HilbertPlan};
use crate::error::{LabError, Result};
use crate::grid::{GridDensity, GridField};
use crate::toeplitz::Toeplitz;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Five-point Gauss–Legendre rule on `[-1/2, 1/2]`.
pub(crate) const GAUSS5: [(f64, f64); 5] = [
    (-0.453_089_922_969_332, 0.118_463_442_528_094_5),
    (-0.269_234_655_052_841_6, 0.239_314_335_249_683_2),
    (0.0, 0.284_444_444_444_444_4),
    (0.269_234_655_052_841_6, 0.239_314_335_249_683_2),
    (0.453_089_922_969_332, 0.118_463_442_528_094_5),
];

/// `(h Σ |m|^p)^{1/p}`, or the maximum for `p = ∞`.
pub fn lp_norm(m: &GridDensity, p: f64) -> Result<f64> {
    lp_norm_values(m.values(), m.h(), p)
}

pub(crate) fn lp_norm_values(values: &[f64], h: f64, p: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        return Ok(values.iter().fold(0.0, |a, v| a.max(v.abs())));
    }
    if !(p >= 1.0) {
        return Err(LabError::Precondition(format!("exponent {p} outside [1, ∞]")));
    }
    Ok((h * values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p))
}

/// Raw moment `h Σ x^k m(x)` for `k <= 4`.
pub fn moment(m: &GridDensity, k: u32) -> Result<f64> {
    if k > 4 {
        return Err(LabError::Precondition(format!("moment order {k} > 4")));
    }
    let h = m.h();
    Ok(h * m.values().iter().enumerate().map(|(i, v)| m.x(i).powi(k as i32) * v).sum::<f64>())
}

pub fn mean(m: &GridDensity) -> f64 {
    moment(m, 1).unwrap() / m.grid_mass()
}

/// Central second moment of the normalised grid part.
pub fn variance(m: &GridDensity) -> f64 {
    let mass = m.grid_mass();
    let mu = mean(m);
    m.h() * m.values().iter().enumerate().map(|(i, v)| (m.x(i) - mu).powi(2) * v).sum::<f64>() / mass
}

fn entropy_phi(z: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        0.5 * z * z * z.abs().ln() - 0.75 * z * z
    }
}

/// `J(k) = ∫∫ log|x - y|` over two unit cells at distance `k`.
fn entropy_cell_pair(k: i64) -> f64 {
    let z = k as f64;
    entropy_phi(z + 1.0) - 2.0 * entropy_phi(z) + entropy_phi(z - 1.0)
}

/// Free entropy `½ ∫∫ log|x - y| m(dx) m(dy)`, integrating every cell pair exactly.
///
/// Returns `-∞` when a single cell carries (numerically) all the mass.
pub fn free_entropy(m: &GridDensity) -> f64 {
    let h = m.h();
    let mass = m.grid_mass();
    if m.max_value() * h >= (1.0 - 1e-9) * mass {
        return f64::NEG_INFINITY;
    }
    let v = m.values();
    let conv = Toeplitz::new(v.len(), entropy_cell_pair).apply(v);
    let quad: f64 = v.iter().zip(&conv).map(|(a, b)| a * b).sum();
    0.5 * (mass * mass * h.ln() + h * h * quad)
}

/// Free entropy against its Fourier representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierEntropyCheck {
    pub direct: f64,
    pub fourier: f64,
    /// `direct - fourier`, the convention constant for this run.
    pub offset: f64,
}

/// Evaluates `½(-γ - ∫_0^∞ (|φ(ξ)|² - 1_{ξ≤1}) dξ/ξ)` with `φ` the characteristic
/// function of the piecewise-constant density.
pub fn fourier_entropy_check(m: &GridDensity) -> FourierEntropyCheck {
    let direct = free_entropy(m);
    let h = m.h();
    let mass = m.grid_mass();
    let vals: Vec<f64> = m.values().iter().map(|v| v * h / mass).collect();
    let nodes: Vec<f64> = (0..m.len()).map(|i| m.x(i)).collect();
    let width = m.grid().right_edge() - m.grid().left_edge();
    let dxi = (0.05f64).min(0.5 / width);
    let xi_max = 40.0 * PI / h;
    let phi2 = |xi: f64| -> f64 {
        let s = if xi == 0.0 { 1.0 } else { (0.5 * xi * h).sin() / (0.5 * xi * h) };
        let (mut re, mut im) = (0.0, 0.0);
        for (x, w) in nodes.iter().zip(&vals) {
            let (sn, cs) = (xi * x).sin_cos();
            re += w * cs;
            im -= w * sn;
        }
        s * s * (re * re + im * im)
    };
    let integrand = |xi: f64| -> f64 {
        if xi == 0.0 {
            0.0
        } else {
            let ind = if xi <= 1.0 { 1.0 } else { 0.0 };
            (phi2(xi) - ind) / xi
        }
    };
    // [0, 1] and [1, xi_max] separately so the indicator jump sits on a node.
    let low_n = (1.0 / dxi).ceil() as usize;
    let low: f64 = trapezoid(low_n, 0.0, 1.0, &integrand);
    let high_n = ((xi_max - 1.0) / dxi).ceil() as usize;
    let high: f64 = trapezoid(high_n, 1.0, xi_max, &|xi| if xi == 1.0 { phi2(1.0) } else { integrand(xi) });
    let fourier = 0.5 * (-EULER_GAMMA - (low + high));
    FourierEntropyCheck { direct, fourier, offset: direct - fourier }
}

fn trapezoid(n: usize, a: f64, b: f64, f: &(dyn Fn(f64) -> f64 + Sync)) -> f64 {
    let d = (b - a) / n as f64;
    let interior: f64 = (1..n).into_par_iter().map(|i| f(a + i as f64 * d)).sum();
    let ends = 0.5 * (f(a) + f(b));
    d * (interior + ends)
}

/// Entropy production `∫ H[m]² m`.
pub fn entropy_dissipation(m: &GridDensity) -> Result<f64> {
    let plan = HilbertPlan::new(m.len(), 0.0);
    Ok(dissipation_with_plan(m, &plan))
}

pub(crate) fn dissipation_with_plan(m: &GridDensity, plan: &HilbertPlan) -> f64 {
    let hf = field_from_plan(m, plan);
    m.h() * hf.values().iter().zip(m.values()).map(|(a, b)| a * a * b).sum::<f64>()
}

/// Both sides of `∫ H[u]² u = (π²/3) ∫ u³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CotlarResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl CotlarResidual {
    pub fn relative(&self) -> f64 {
        if self.rhs == 0.0 {
            self.residual.abs()
        } else {
            (self.residual / self.rhs).abs()
        }
    }
}

/// Cotlar identity residual, integrating both sides with a five-point Gauss rule per cell
/// over the piecewise-linear reconstruction.
pub fn cotlar_residual(u: &GridDensity) -> CotlarResidual {
    let h = u.h();
    let v = u.values();
    let slopes = minmod_slopes(v, h);
    let (lhs, cubes) = GAUSS5
        .par_iter()
        .map(|&(r, w)| {
            let hv = HilbertPlan::new(v.len(), r).apply_with_slopes(v, &slopes, h);
            let mut l = 0.0;
            let mut c = 0.0;
            for i in 0..v.len() {
                let ur = v[i] + slopes[i] * r * h;
                l += hv[i] * hv[i] * ur;
                c += ur * ur * ur;
            }
            (w * h * l, w * h * c)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let rhs = PI * PI / 3.0 * cubes;
    CotlarResidual { lhs, rhs, residual: lhs - rhs }
}

/// `‖u‖_{Ḣ^{1/2}} = (∫ u A0[u])^{1/2}`.
///
/// When the two end values differ the integral over the line diverges, and the
/// window-restricted form `½ ∫∫_{window²} (u(x) - u(y))² / (x - y)²` is returned
/// instead (tails dropped, which also makes the value independent of centring).
pub fn hhalf_seminorm(u: &GridField) -> f64 {
    hhalf_seminorm_sq(u).max(0.0).sqrt()
}

pub fn hhalf_seminorm_sq(u: &GridField) -> f64 {
    let v = u.values();
    let n = v.len();
    let (l, r) = (v[0], v[n - 1]);
    let plan = HalfLaplacianPlan::new(u.grid(), f64::INFINITY).expect("valid split");
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
    let equal_ends = (l - r).abs() <= 1e-9 * scale;
    let c = if equal_ends { l } else { 0.0 };
    let centred: Vec<f64> = v.iter().map(|x| x - c).collect();
    let a = if equal_ends {
        plan.apply(&centred, Tails::Full { left: 0.0, right: 0.0 })
    } else {
        window_operator(&plan, &centred)
    };
    u.h() * centred.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>()
}

/// Interior part of the operator, tails removed.
fn window_operator(plan: &HalfLaplacianPlan, v: &[f64]) -> Vec<f64> {
    // With zero limits the tail terms are `v_i` times the tail weights, which
    // the constant field isolates.
    let with_tails = plan.apply(v, Tails::Full { left: 0.0, right: 0.0 });
    let tail_part = plan.apply(&vec![1.0; v.len()], Tails::Full { left: 0.0, right: 0.0 });
    with_tails.iter().zip(&tail_part).zip(v).map(|((a, t), x)| a - t * x).collect()
}

/// Spectral form `π ∫ |ξ| |û(ξ)|² dξ` with the unitary transform; the field is
/// shifted so that its first value is zero and zero-padded.
pub fn hhalf_seminorm_sq_fourier(u: &GridField) -> f64 {
    let v = u.values();
    let base = v[0];
    let n = v.len();
    let size = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex64> =
        (0..size).map(|i| Complex64::new(if i < n { v[i] - base } else { 0.0 }, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let h = u.h();
    let dxi = 2.0 * PI / (size as f64 * h);
    // |û(ξ_k)|² = h²/(2π) |DFT_k|²; ∫ over ℝ = 2 ∫_0^∞ for real fields.
    let sum: f64 = (1..size / 2).map(|k| k as f64 * dxi * buf[k].norm_sqr()).sum();
    PI * 2.0 * sum * dxi * h * h / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_abs_diff_eq;

    fn uniform01(h: f64) -> GridDensity {
        let grid = Grid::covering(-0.5, 1.5, h).unwrap();
        GridDensity::from_fn(grid, |x| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 }, true).unwrap()
    }

    fn semicircle(r: f64, h: f64) -> GridDensity {
        let grid = Grid::covering(-1.25 * r, 1.25 * r, h).unwrap();
        let c = 2.0 / (PI * r * r);
        GridDensity::from_fn(grid, |x| c * (r * r - x * x).max(0.0).sqrt(), true).unwrap()
    }

    #[test]
    fn norms() {
        let m = uniform01(0.01);
        assert_abs_diff_eq!(lp_norm(&m, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lp_norm(&m, f64::INFINITY).unwrap(), 1.0, epsilon = 1e-12);
        let s = semicircle(2.0, 0.01);
        assert_abs_diff_eq!(lp_norm(&s, f64::INFINITY).unwrap(), 1.0 / PI, epsilon = 1e-4);
        assert!(lp_norm(&s, 0.5).is_err());
    }

    #[test]
    fn moments_of_reference_densities() {
        let m = uniform01(0.01);
        assert_abs_diff_eq!(mean(&m), 0.5, epsilon = 1e-12);
        let s = semicircle(2.0, 0.005);
        assert_abs_diff_eq!(variance(&s), 1.0, epsilon = 1e-4);
        assert!(moment(&s, 5).is_err());
        let grid = Grid::new(-1.0, 0.01, 201).unwrap();
        let d = GridDensity::point_mass(grid, 0.0).unwrap();
        assert_abs_diff_eq!(moment(&d, 1).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(moment(&d, 2).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_closed_forms() {
        assert_abs_diff_eq!(entropy_cell_pair(0), -1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(free_entropy(&uniform01(0.01)), -0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(free_entropy(&semicircle(2.0, 0.005)), -0.125, epsilon = 2e-4);
        let m = semicircle(1.0, 0.01);
        assert_abs_diff_eq!(free_entropy(&m), free_entropy(&m.shifted(3.7)), epsilon = 1e-12);
        let grid = Grid::covering(-1.0, 1.0, 0.01).unwrap();
        assert_eq!(free_entropy(&GridDensity::point_mass(grid, 0.0).unwrap()), f64::NEG_INFINITY);
    }

    #[test]
    fn entropy_dilation_is_exact() {
        let m = semicircle(1.0, 0.01);
        let d = m.dilated(3.0).unwrap();
        assert_abs_diff_eq!(free_entropy(&d), free_entropy(&m) + 0.5 * 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn fourier_entropy_agrees() {
        let c = fourier_entropy_check(&uniform01(0.02));
        assert!(c.offset.abs() < 2e-3, "{c:?}");
    }

    #[test]
    fn dissipation_of_semicircle() {
        let s = semicircle(2.0, 0.005);
        assert_abs_diff_eq!(entropy_dissipation(&s).unwrap(), 0.25, epsilon = 1e-3);
        let grid = Grid::covering(-3.0, 3.0, 0.01).unwrap();
        let pair =
            GridDensity::from_fn(grid, |x| (-(x - 2.0).powi(2) * 20.0).exp() + (-(x + 2.0).powi(2) * 20.0).exp(), true)
                .unwrap();
        assert!(entropy_dissipation(&pair).unwrap() > 0.0);
    }

    #[test]
    fn cotlar_reference_cases() {
        let c = cotlar_residual(&uniform01(1.0 / 400.0));
        assert_abs_diff_eq!(c.rhs, PI * PI / 3.0, epsilon = 1e-10);
        assert!(c.relative() < 1e-2, "{c:?}");
        let s = cotlar_residual(&semicircle(2.0, 1.0 / 400.0));
        assert!(s.relative() < 1e-4, "{s:?}");
        let grid = Grid::covering(0.0, 1.0, 0.01).unwrap();
        let z = GridDensity::from_fn(grid, |_| 0.0, false).unwrap();
        assert_eq!(cotlar_residual(&z), CotlarResidual { lhs: 0.0, rhs: 0.0, residual: 0.0 });
    }

    #[test]
    fn seminorm_of_gaussian() {
        let grid = Grid::covering(-12.0, 12.0, 0.01).unwrap();
        let u = GridField::from_fn(grid, |x| (-x * x / 2.0).exp()).unwrap();
        assert_abs_diff_eq!(hhalf_seminorm_sq(&u), PI, epsilon = 2e-3);
        assert_abs_diff_eq!(hhalf_seminorm_sq_fourier(&u), PI, epsilon = 1e-3);
        let c = GridField::from_fn(grid, |_| 2.0).unwrap();
        assert_eq!(hhalf_seminorm(&c), 0.0);
    }

    #[test]
    fn seminorm_dilation_invariance() {
        let grid = Grid::covering(-20.0, 20.0, 0.01).unwrap();
        let u = GridField::from_fn(grid, |x| (-x * x / 2.0).exp()).unwrap();
        let v = GridField::from_fn(grid, |x| (-(2.5 * x).powi(2) / 2.0).exp()).unwrap();
        assert_abs_diff_eq!(hhalf_seminorm_sq(&u), hhalf_seminorm_sq(&v), epsilon = 5e-3);
    }
}
