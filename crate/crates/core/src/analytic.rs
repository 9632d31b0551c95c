//! Closed-form reference solutions and the complex-Burgers characteristics oracle.
//!
//! Two conventions ship side by side. `Raw` is consistent with the crate's
//! Hilbert transform (no `1/pi`): a Dirac seed spreads to a semicircle of radius
//! `2 sqrt(t)`. `Paper` keeps the constants as they are usually quoted
//! (radius `sqrt(t)`), for cross-reference only.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{CdfGrid, Grid, GridDensity, GridField};
use crate::measure::half_laplacian::{HalfLaplacianPlan, Tails};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    #[serde(alias = "library-raw")]
    Raw,
    #[serde(alias = "paper-as-printed")]
    Paper,
}

impl FromStr for Convention {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" | "library-raw" => Ok(Self::Raw),
            "paper" | "paper-as-printed" => Ok(Self::Paper),
            other => Err(LabError::Config(format!("unknown convention '{other}' (expected raw|paper)"))),
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Raw => "raw",
            Self::Paper => "paper",
        })
    }
}

impl Convention {
    /// Semicircle radius reached at time `t` from a Dirac seed.
    pub fn radius_at(self, t: f64) -> f64 {
        match self {
            Self::Raw => 2.0 * t.sqrt(),
            Self::Paper => t.sqrt(),
        }
    }

    /// Inverse of [`Convention::radius_at`].
    pub fn time_for_radius(self, r: f64) -> f64 {
        match self {
            Self::Raw => r * r / 4.0,
            Self::Paper => r * r,
        }
    }
}

/// Centered semicircle law `2/(pi R^2) sqrt(R^2 - x^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemicircleFamily {
    pub convention: Convention,
    pub radius: f64,
}

impl SemicircleFamily {
    pub fn with_radius(convention: Convention, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LabError::Precondition(format!("semicircle radius must be positive, got {radius}")));
        }
        Ok(Self { convention, radius })
    }

    /// Self-similar state at time `t` launched from a Dirac mass at 0.
    pub fn at_time(convention: Convention, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(LabError::Precondition(format!("time must be positive, got {t}")));
        }
        Self::with_radius(convention, convention.radius_at(t))
    }

    pub fn time(&self) -> f64 {
        self.convention.time_for_radius(self.radius)
    }

    pub fn density(&self, x: f64) -> f64 {
        let r2 = self.radius * self.radius;
        if x.abs() >= self.radius {
            0.0
        } else {
            2.0 / (std::f64::consts::PI * r2) * (r2 - x * x).sqrt()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let s = (x / self.radius).clamp(-1.0, 1.0);
        0.5 + (s * (1.0 - s * s).sqrt() + s.asin()) / std::f64::consts::PI
    }

    /// Quantile function, by bisection on the closed-form CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (-self.radius, self.radius);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * self.radius {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Hilbert transform of the law. `Raw` is exact for the crate's operator;
    /// `Paper` evaluates `(x - sqrt(x^2 - t))/(2t)` with `t = R^2` (real part inside).
    pub fn hilbert(&self, x: f64) -> f64 {
        let r2 = self.radius * self.radius;
        let root = if x.abs() > self.radius { x.signum() * (x * x - r2).sqrt() } else { 0.0 };
        match self.convention {
            Convention::Raw => 2.0 * (x - root) / r2,
            Convention::Paper => (x - root) / (2.0 * r2),
        }
    }

    pub fn peak(&self) -> f64 {
        2.0 / (std::f64::consts::PI * self.radius)
    }

    pub fn variance(&self) -> f64 {
        self.radius * self.radius / 4.0
    }

    /// Logarithmic energy `1/2 int int log|x-y|`.
    pub fn free_entropy(&self) -> f64 {
        0.5 * ((self.radius / 2.0).ln() - 0.25)
    }

    pub fn sample(&self, grid: Grid) -> Result<GridDensity> {
        GridDensity::from_fn(grid, |x| self.density(x), true)
    }

    pub fn sample_cdf(&self, grid: Grid) -> Result<CdfGrid> {
        CdfGrid::from_fn(grid, |x| self.cdf(x))
    }
}

pub fn semicircle_density(fam: &SemicircleFamily, x: f64) -> f64 {
    fam.density(x)
}

pub fn semicircle_cdf(fam: &SemicircleFamily, x: f64) -> f64 {
    fam.cdf(x)
}

pub fn semicircle_hilbert(fam: &SemicircleFamily, x: f64) -> f64 {
    fam.hilbert(x)
}

/// Marcenko-Pastur law. Under `Paper` this is the textbook density
/// `eta sqrt((l+ - x)(x - l-)) / (2 pi x)` with edges `(1 +- eta^{-1/2})^2`.
/// Under `Raw` it is the law that is actually stationary for the Wishart flow
/// `V = x A0[F] + eta - 1 - x` with the crate's operator: the textbook law with
/// parameter `2 eta - 1`, dilated by `eta - 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarcenkoPastur {
    pub eta: f64,
    pub convention: Convention,
}

/// Textbook edges `(1 +- eta^{-1/2})^2`.
pub fn mp_edges(eta: f64) -> (f64, f64) {
    let r = eta.recip().sqrt();
    ((1.0 - r).powi(2), (1.0 + r).powi(2))
}

/// Textbook density.
pub fn marcenko_pastur_density(eta: f64, x: f64) -> f64 {
    let (lo, hi) = mp_edges(eta);
    if x <= lo || x >= hi || x <= 0.0 {
        return 0.0;
    }
    eta * ((hi - x) * (x - lo)).sqrt() / (2.0 * std::f64::consts::PI * x)
}

impl MarcenkoPastur {
    pub fn new(eta: f64, convention: Convention) -> Result<Self> {
        if !(eta >= 1.0 && eta.is_finite()) {
            return Err(LabError::Precondition(format!("Marcenko-Pastur needs eta >= 1, got {eta}")));
        }
        Ok(Self { eta, convention })
    }

    /// (textbook parameter, dilation)
    fn shape(&self) -> (f64, f64) {
        match self.convention {
            Convention::Paper => (self.eta, 1.0),
            Convention::Raw => (2.0 * self.eta - 1.0, self.eta - 0.5),
        }
    }

    pub fn edges(&self) -> (f64, f64) {
        let (p, s) = self.shape();
        let (a, b) = mp_edges(p);
        (s * a, s * b)
    }

    pub fn density(&self, x: f64) -> f64 {
        let (p, s) = self.shape();
        marcenko_pastur_density(p, x / s) / s
    }

    /// CDF by Gauss-Legendre in the angle `x = a + (b-a)(1 - cos th)/2`, which
    /// absorbs the square-root edges (and the `x^{-1/2}` pole at `eta = 1`).
    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b) = self.edges();
        if x <= a {
            return 0.0;
        }
        if x >= b {
            return 1.0;
        }
        let th = (1.0 - 2.0 * (x - a) / (b - a)).clamp(-1.0, 1.0).acos();
        let integrand = |phi: f64| {
            let y = a + 0.5 * (b - a) * (1.0 - phi.cos());
            let jac = 0.5 * (b - a) * phi.sin();
            self.density(y) * jac
        };
        gauss_legendre(integrand, 0.0, th, 16).min(1.0)
    }

    pub fn mean(&self) -> f64 {
        let (_, s) = self.shape();
        s
    }

    pub fn sample(&self, grid: Grid) -> Result<GridDensity> {
        GridDensity::from_fn(grid, |x| self.density(x), true)
    }

    /// CDF sampled at the nodes (exact cell-to-node CDF, not a quadrature of samples).
    pub fn sample_cdf(&self, grid: Grid) -> Result<CdfGrid> {
        CdfGrid::from_fn(grid, |x| self.cdf(x))
    }
}

/// Composite Gauss-Legendre (5 points) with `panels` equal panels.
fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] =
        [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * w;
        for (x, wt) in X.iter().zip(&W) {
            total += wt * f(c + 0.5 * w * x);
        }
    }
    0.5 * w * total
}

/// Pointwise residual `dF/dx (eta - 1 - x + x int (F(x) - F(y))/(x-y)^2 dy)` on a
/// grid inside `(0, inf)`. The integral runs over the whole line with `F = 0` left
/// of the grid's first node (in particular on `(-inf, 0)`) and `F = 1` right of its last.
pub fn mp_stationarity_residual(eta: f64, f: &CdfGrid) -> Result<GridField> {
    let grid = f.grid();
    if grid.left_edge() < -1e-12 {
        return Err(LabError::Precondition("stationarity residual needs a grid on (0, inf)".into()));
    }
    let plan = HalfLaplacianPlan::new(grid, f64::INFINITY)?;
    let a0 = plan.apply(f.values(), Tails::Full { left: 0.0, right: 1.0 });
    let u = f.values();
    let n = grid.n;
    let h = grid.h;
    let values = (0..n)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { u[i - 1] };
            let right = if i + 1 == n { 1.0 } else { u[i + 1] };
            let ux = (right - left) / (2.0 * h);
            let x = grid.node(i);
            ux * (eta - 1.0 - x + x * a0[i])
        })
        .collect();
    GridField::on_grid(grid, values)
}

/// Spike path from `m0 = delta_0` with constant `a`, written through `Y = sqrt(Z)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpikeReference {
    pub convention: Convention,
    pub lambda0: f64,
    pub times: Vec<f64>,
    /// `Z = lambda^2 - 4t` (raw) or `lambda^2 - t` (paper).
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub t0: f64,
}

impl SpikeReference {
    /// `Z` at `t` by linear interpolation of `sqrt(Z)` (0 after absorption).
    pub fn z_at(&self, t: f64) -> f64 {
        if t >= self.t0 {
            return 0.0;
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        (self.z[k - 1].sqrt() * (1.0 - w) + self.z[k].sqrt() * w).powi(2)
    }
}

/// Integrates the absorption ODE with adaptive RK4 (step doubling) and locates
/// `Z = 0` by bisection on the last step.
pub fn spike_absorption_reference(lambda0: f64, convention: Convention) -> Result<SpikeReference> {
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(LabError::Precondition(format!("spike needs lambda0 > 0, got {lambda0}")));
    }
    // Y' = -k / (Y + sqrt(Y^2 + c t)), lambda^2 = Y^2 + c t
    let (k, c) = match convention {
        Convention::Raw => (2.0, 4.0),
        Convention::Paper => (0.5, 1.0),
    };
    let rhs = |t: f64, y: f64| -k / (y + (y * y + c * t).max(0.0).sqrt());
    let rk4 = |t: f64, y: f64, dt: f64| {
        let k1 = rhs(t, y);
        let k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
        let k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
        let k4 = rhs(t + dt, y + dt * k3);
        y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let tol = 1e-12 * lambda0.max(1.0);
    let mut t = 0.0;
    let mut y = lambda0;
    let mut dt = 1e-3 * lambda0 * lambda0;
    let mut times = vec![0.0];
    let mut ys = vec![y];
    for _ in 0..1_000_000 {
        let full = rk4(t, y, dt);
        let half = rk4(t + 0.5 * dt, rk4(t, y, 0.5 * dt), 0.5 * dt);
        let err = (full - half).abs();
        if err > tol && dt > 1e-14 {
            dt *= 0.5;
            continue;
        }
        if half <= 0.0 {
            // bisection for the crossing inside [t, t + dt]
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if rk4(t, y, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 * (t + dt) {
                    break;
                }
            }
            let t0 = t + 0.5 * (lo + hi);
            times.push(t0);
            ys.push(0.0);
            let z = ys.iter().map(|y| y * y).collect();
            let lambda = times.iter().zip(&ys).map(|(t, y)| (y * y + c * t).sqrt()).collect();
            return Ok(SpikeReference { convention, lambda0, times, z, lambda, t0 });
        }
        t += dt;
        y = half;
        times.push(t);
        ys.push(y);
        if err < tol / 32.0 {
            dt *= 2.0;
        }
    }
    Err(LabError::Oracle("spike absorption not reached".into()))
}

/// Initial data for the characteristics oracle, given by its Cauchy transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BurgersSeed {
    /// Weighted atoms `(weight, position)`.
    Atomic {
        atoms: Vec<(f64, f64)>,
    },
    Semicircle {
        center: f64,
        radius: f64,
    },
}

impl BurgersSeed {
    pub fn dirac(x: f64) -> Self {
        Self::Atomic { atoms: vec![(1.0, x)] }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Self::Atomic { atoms } => atoms.iter().map(|a| a.0).sum(),
            Self::Semicircle { .. } => 1.0,
        }
    }

    fn extent(&self) -> (f64, f64) {
        match self {
            Self::Atomic { atoms } => {
                atoms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)))
            }
            Self::Semicircle { center, radius } => (center - radius, center + radius),
        }
    }

    /// `G0(w)` and `G0'(w)`.
    fn cauchy(&self, w: Complex64) -> (Complex64, Complex64) {
        match self {
            Self::Atomic { atoms } => {
                atoms.iter().fold((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)), |(g, dg), &(m, a)| {
                    let r = (w - a).inv();
                    (g + m * r, dg - m * r * r)
                })
            }
            Self::Semicircle { center, radius } => {
                let u = w - center;
                let s = (u - radius).sqrt() * (u + radius).sqrt();
                let r2 = radius * radius;
                (2.0 * (u - s) / r2, 2.0 * (1.0 - u / s) / r2)
            }
        }
    }
}

/// Solves `G = G0(z - tG)` by Newton iteration from `guess`.
fn newton(seed: &BurgersSeed, t: f64, z: Complex64, guess: Complex64) -> Option<Complex64> {
    let mut g = guess;
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let (g0, dg0) = seed.cauchy(z - t * g);
        let step = (g - g0) / (1.0 + t * dg0);
        g -= step;
        if !g.is_finite() {
            return None;
        }
        last = step.norm() / (1.0 + g.norm());
        if last <= 1e-14 {
            return Some(g);
        }
    }
    // stagnation at rounding level
    (last <= 1e-11).then_some(g)
}

/// Follows the root from far above the axis down to each imaginary offset.
fn continue_down(seed: &BurgersSeed, t: f64, x: f64, targets: &[f64], scale: f64) -> Option<Vec<Complex64>> {
    let mut y = 4.0 * scale;
    let mut g = Complex64::new(x, y).inv();
    g = newton(seed, t, Complex64::new(x, y), g)?;
    let mut out = Vec::with_capacity(targets.len());
    for &target in targets {
        let mut ratio: f64 = 0.7;
        while y > target {
            let next = (y * ratio).max(target);
            match newton(seed, t, Complex64::new(x, next), g) {
                Some(v) if v.im <= 1e-12 * (1.0 + v.norm()) => {
                    g = v;
                    y = next;
                    ratio = (ratio * ratio).max(0.7);
                }
                _ => {
                    // shorter continuation step on the imaginary axis
                    ratio = ratio.sqrt();
                    if ratio > 1.0 - 1e-9 {
                        return None;
                    }
                }
            }
        }
        out.push(g);
    }
    Some(out)
}

/// Density of the free Dyson evolution at time `t` started from `seed`, sampled
/// at the grid nodes: `-Im G(x + i0)/pi` from offsets `10^{-k} h`, `k = 1..3`,
/// Richardson-extrapolated.
pub fn burgers_characteristics(seed: &BurgersSeed, t: f64, grid: Grid) -> Result<GridDensity> {
    if !(t >= 0.0) {
        return Err(LabError::Precondition(format!("time must be nonnegative, got {t}")));
    }
    let h = grid.h;
    let targets = [0.1 * h, 0.01 * h, 0.001 * h];
    let (a, b) = seed.extent();
    let scale = 1.0 + (b - a) + 2.0 * t.sqrt();
    let nodes = grid.nodes();
    let results: Vec<std::result::Result<f64, f64>> = nodes
        .par_iter()
        .map(|&x| match continue_down(seed, t, x, &targets, scale + x.abs()) {
            Some(g) => {
                let rho: Vec<f64> = g.iter().map(|v| -v.im / std::f64::consts::PI).collect();
                let r1 = (10.0 * rho[1] - rho[0]) / 9.0;
                let r2 = (10.0 * rho[2] - rho[1]) / 9.0;
                Ok(((100.0 * r2 - r1) / 99.0).max(0.0))
            }
            None => Err(x),
        })
        .collect();
    let failed: Vec<f64> = results.iter().filter_map(|r| r.err()).collect();
    if !failed.is_empty() {
        return Err(LabError::Oracle(format!(
            "Newton did not converge at {} point(s), first at x = {}",
            failed.len(),
            failed[0]
        )));
    }
    let values: Vec<f64> = results.into_iter().map(|r| r.unwrap_or(0.0)).collect();
    GridDensity::on_grid(grid, values, false)
}

/// Total mass of the evolved measure, `(1/2 pi i) \oint G dz` on a circle enclosing
/// the support, by the periodic trapezoid rule.
pub fn oracle_mass(seed: &BurgersSeed, t: f64) -> Result<f64> {
    let (a, b) = seed.extent();
    let center = 0.5 * (a + b);
    let radius = 0.5 * (b - a) + 2.0 * t.sqrt() + 1.0;
    let points = 512;
    let scale = 4.0 * (radius + center.abs()) + 4.0;
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..points {
        let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / points as f64;
        let dir = Complex64::new(th.cos(), th.sin());
        let z = center + radius * dir;
        // continue radially inward from a far point on the same ray
        let mut r = scale;
        let mut g = (center + r * dir).inv();
        while r > radius {
            r = (r * 0.8).max(radius);
            g = newton(seed, t, center + r * dir, g)
                .ok_or_else(|| LabError::Oracle(format!("contour Newton failed at {z}")))?;
        }
        total += g * radius * dir;
    }
    Ok((total / points as f64).re)
}
