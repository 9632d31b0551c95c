//! Grid-sampled measures and fields.
//!
//! Every grid is uniform: node `i` sits at `x0 + i*h` and owns the cell
//! `[x_i - h/2, x_i + h/2]`. Densities are interpreted cell-wise, so the mass
//! of a [`GridDensity`] is `h * sum(values)`. CDF values are stored at nodes
//! and equal the mass to the left of the node.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Tolerance on `|h*sum - 1|` for a density flagged as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Uniform grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x0: f64, h: f64, n: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(LabError::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        if !x0.is_finite() {
            return Err(LabError::InvalidGrid("x0 must be finite".into()));
        }
        if n < 2 {
            return Err(LabError::InvalidGrid(format!("need at least 2 nodes, got {n}")));
        }
        Ok(Self { x0, h, n })
    }

    /// Grid with nodes at cell centers covering `[a, b]` with spacing close to `h`.
    pub fn covering(a: f64, b: f64, h: f64) -> Result<Self> {
        if !(b > a) {
            return Err(LabError::InvalidGrid(format!("empty interval [{a}, {b}]")));
        }
        let n = ((b - a) / h).round().max(2.0) as usize;
        let h = (b - a) / n as f64;
        Self::new(a + 0.5 * h, h, n)
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Left end of the first cell.
    pub fn left_edge(&self) -> f64 {
        self.x0 - 0.5 * self.h
    }

    /// Right end of the last cell.
    pub fn right_edge(&self) -> f64 {
        self.node(self.n - 1) + 0.5 * self.h
    }

    /// Fractional node coordinate of `x`.
    pub fn coordinate(&self, x: f64) -> f64 {
        (x - self.x0) / self.h
    }

    /// Index of the cell containing `x`, if any.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let c = (self.coordinate(x) + 0.5).floor();
        (c >= 0.0 && (c as usize) < self.n).then_some(c as usize)
    }

    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.n == other.n && (self.h - other.h).abs() <= 1e-12 * self.h && (self.x0 - other.x0).abs() <= 1e-9 * self.h
    }
}

/// Mass declared outside the sampled window, concentrated at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExteriorMass {
    pub mass: f64,
    pub position: f64,
}

/// A density sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
    normalized: bool,
    exterior: Vec<ExteriorMass>,
}

impl GridDensity {
    pub fn new(x0: f64, h: f64, values: Vec<f64>, normalized: bool) -> Result<Self> {
        let grid = Grid::new(x0, h, values.len())?;
        Self::on_grid(grid, values, normalized)
    }

    pub fn on_grid(grid: Grid, values: Vec<f64>, normalized: bool) -> Result<Self> {
        if values.len() != grid.n {
            return Err(LabError::InvalidDensity(format!("expected {} values, got {}", grid.n, values.len())));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(LabError::InvalidDensity(format!("value {v} at node {i}")));
        }
        let d = Self { grid, values, normalized, exterior: Vec::new() };
        if normalized {
            d.check_normalized()?;
        }
        Ok(d)
    }

    /// Samples `f` at the nodes; with `normalize` the samples are rescaled to unit mass.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64, normalize: bool) -> Result<Self> {
        let values: Vec<f64> = (0..grid.n).map(|i| f(grid.node(i)).max(0.0)).collect();
        let mut d = Self::on_grid(grid, values, false)?;
        if normalize {
            d.renormalize()?;
        }
        Ok(d)
    }

    /// Unit mass placed in the cell containing `x`.
    pub fn point_mass(grid: Grid, x: f64) -> Result<Self> {
        let i = grid.cell_of(x).ok_or_else(|| LabError::InvalidDensity(format!("{x} outside grid")))?;
        let mut values = vec![0.0; grid.n];
        values[i] = 1.0 / grid.h;
        Self::on_grid(grid, values, true)
    }

    pub fn with_exterior(mut self, exterior: Vec<ExteriorMass>) -> Result<Self> {
        self.exterior = exterior;
        if self.normalized {
            self.check_normalized()?;
        }
        Ok(self)
    }

    fn check_normalized(&self) -> Result<()> {
        let mass = self.total_mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LabError::NotNormalized { mass });
        }
        Ok(())
    }

    /// Rescales to unit total mass and sets the normalized flag.
    pub fn renormalize(&mut self) -> Result<()> {
        let ext: f64 = self.exterior.iter().map(|e| e.mass).sum();
        let grid_mass = self.grid_mass();
        if !(grid_mass > 0.0) || ext >= 1.0 {
            return Err(LabError::InvalidDensity("cannot normalize a zero-mass density".into()));
        }
        let s = (1.0 - ext) / grid_mass;
        self.values.iter_mut().for_each(|v| *v *= s);
        self.normalized = true;
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn x0(&self) -> f64 {
        self.grid.x0
    }
    pub fn h(&self) -> f64 {
        self.grid.h
    }
    pub fn len(&self) -> usize {
        self.grid.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
    pub fn exterior(&self) -> &[ExteriorMass] {
        &self.exterior
    }
    pub fn x(&self, i: usize) -> f64 {
        self.grid.node(i)
    }

    /// Mass carried by the grid cells.
    pub fn grid_mass(&self) -> f64 {
        self.grid.h * self.values.iter().sum::<f64>()
    }

    /// Grid mass plus declared exterior mass.
    pub fn total_mass(&self) -> f64 {
        self.grid_mass() + self.exterior.iter().map(|e| e.mass).sum::<f64>()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Piecewise-constant value of the density at `x`.
    pub fn value_at(&self, x: f64) -> f64 {
        self.grid.cell_of(x).map_or(0.0, |i| self.values[i])
    }

    /// Position of the right end of the support (end of the last charged cell).
    pub fn support_right(&self, threshold: f64) -> Option<f64> {
        self.values.iter().rposition(|v| *v > threshold).map(|i| self.grid.node(i) + 0.5 * self.grid.h)
    }

    pub fn support_left(&self, threshold: f64) -> Option<f64> {
        self.values.iter().position(|v| *v > threshold).map(|i| self.grid.node(i) - 0.5 * self.grid.h)
    }

    /// Translates the grid by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.grid.x0 += c;
        out.exterior.iter_mut().for_each(|e| e.position += c);
        out
    }

    /// The dilation `x -> lambda x` of the measure (density `m(x/lambda)/lambda`).
    pub fn dilated(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(LabError::InvalidDensity(format!("dilation factor {lambda}")));
        }
        let grid = Grid::new(self.grid.x0 * lambda, self.grid.h * lambda, self.grid.n)?;
        let values = self.values.iter().map(|v| v / lambda).collect();
        let mut out = Self::on_grid(grid, values, false)?;
        out.normalized = self.normalized;
        out.exterior =
            self.exterior.iter().map(|e| ExteriorMass { mass: e.mass, position: e.position * lambda }).collect();
        Ok(out)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A nondecreasing grid function with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGrid {
    grid: Grid,
    values: Vec<f64>,
}

impl CdfGrid {
    pub fn new(x0: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(x0, h, values.len())?;
        Self::on_grid(grid, values)
    }

    pub fn on_grid(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(LabError::InvalidCdf(format!("expected {} values, got {}", grid.n, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidCdf("non-finite value".into()));
        }
        if values[0] < 0.0 || values[grid.n - 1] > 1.0 {
            return Err(LabError::InvalidCdf(format!("range [{}, {}] leaves [0, 1]", values[0], values[grid.n - 1])));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(LabError::InvalidCdf(format!("decreasing between nodes {i} and {}", i + 1)));
        }
        Ok(Self { grid, values })
    }

    /// Heaviside CDF jumping to 1 at the first node `>= x`.
    pub fn heaviside(grid: Grid, x: f64) -> Result<Self> {
        let values = (0..grid.n).map(|i| if grid.node(i) >= x { 1.0 } else { 0.0 }).collect();
        Self::on_grid(grid, values)
    }

    /// Samples a CDF function, then clamps and enforces monotonicity.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = (0..grid.n).map(|i| f(grid.node(i)).clamp(0.0, 1.0)).collect();
        monotone_sweep(&mut values);
        Self::on_grid(grid, values)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn x0(&self) -> f64 {
        self.grid.x0
    }
    pub fn h(&self) -> f64 {
        self.grid.h
    }
    pub fn len(&self) -> usize {
        self.grid.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn x(&self, i: usize) -> f64 {
        self.grid.node(i)
    }

    /// True when both boundary values are within `tol` of 0 and 1.
    pub fn covers_support(&self, tol: f64) -> bool {
        self.values[0] <= tol && 1.0 - self.values[self.grid.n - 1] <= tol
    }

    /// Linear interpolation, constant beyond the ends.
    pub fn value_at(&self, x: f64) -> f64 {
        interpolate(&self.grid, &self.values, x)
    }

    pub fn as_field(&self) -> GridField {
        GridField { grid: self.grid, values: self.values.clone() }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }
}

/// Unconstrained grid function (velocities, transforms, test fields).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(x0: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(x0, h, values.len())?;
        Self::on_grid(grid, values)
    }

    pub fn on_grid(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(LabError::InvalidGrid(format!("expected {} values, got {}", grid.n, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidGrid("non-finite field value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::on_grid(grid, (0..grid.n).map(|i| f(grid.node(i))).collect())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn h(&self) -> f64 {
        self.grid.h
    }
    pub fn len(&self) -> usize {
        self.grid.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn x(&self, i: usize) -> f64 {
        self.grid.node(i)
    }
    pub fn value_at(&self, x: f64) -> f64 {
        interpolate(&self.grid, &self.values, x)
    }
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Sorted particle positions, each carrying weight `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
}

impl ParticleEnsemble {
    /// Sorts the positions and separates exact ties by `min_gap`.
    pub fn new(mut positions: Vec<f64>, min_gap: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(LabError::InvalidDensity("empty ensemble".into()));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(LabError::InvalidDensity("non-finite particle position".into()));
        }
        positions.sort_by(f64::total_cmp);
        repair_gaps(&mut positions, min_gap);
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn min(&self) -> f64 {
        self.positions[0]
    }
    pub fn max(&self) -> f64 {
        self.positions[self.positions.len() - 1]
    }
    pub fn mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.len() as f64
    }
    pub fn moment(&self, k: i32) -> f64 {
        self.positions.iter().map(|p| p.powi(k)).sum::<f64>() / self.len() as f64
    }
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.positions.iter().map(|p| (p - m).powi(2)).sum::<f64>() / self.len() as f64
    }
    pub fn min_gap(&self) -> f64 {
        self.positions.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Pools several ensembles into one empirical measure.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a ParticleEnsemble>) -> Result<Self> {
        let all: Vec<f64> = parts.into_iter().flat_map(|e| e.positions.iter().copied()).collect();
        Self::new(all, 0.0)
    }

    pub(crate) fn from_sorted_unchecked(positions: Vec<f64>) -> Self {
        Self { positions }
    }
}

/// Forces a sorted sequence to be strictly increasing with gaps `>= min_gap`.
pub(crate) fn repair_gaps(sorted: &mut [f64], min_gap: f64) {
    for i in 1..sorted.len() {
        let floor = sorted[i - 1] + min_gap;
        if sorted[i] < floor || (min_gap == 0.0 && sorted[i] <= sorted[i - 1] && min_gap > 0.0) {
            sorted[i] = floor;
        }
    }
}

/// Cumulative-max sweep; returns the largest adjustment.
pub(crate) fn monotone_sweep(values: &mut [f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            worst = worst.max(values[i - 1] - values[i]);
            values[i] = values[i - 1];
        }
    }
    worst
}

pub(crate) fn interpolate(grid: &Grid, values: &[f64], x: f64) -> f64 {
    let s = grid.coordinate(x);
    if s <= 0.0 {
        return values[0];
    }
    let last = grid.n - 1;
    if s >= last as f64 {
        return values[last];
    }
    let i = s.floor() as usize;
    let w = s - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Cumulative trapezoidal integral of a density, clamped to `[0, 1]`.
pub fn density_to_cdf(m: &GridDensity) -> CdfGrid {
    let h = m.h();
    let left_ext: f64 = m.exterior().iter().filter(|e| e.position < m.grid().left_edge()).map(|e| e.mass).sum();
    let v = m.values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = left_ext + 0.5 * h * v[0];
    out.push(acc);
    for i in 1..v.len() {
        acc += 0.5 * h * (v[i - 1] + v[i]);
        out.push(acc);
    }
    out.iter_mut().for_each(|u| *u = u.clamp(0.0, 1.0));
    monotone_sweep(&mut out);
    CdfGrid::from_parts_unchecked(m.grid(), out)
}

/// Centered differences of a CDF (constant extension at the ends), clipped at zero.
pub fn cdf_to_density(u: &CdfGrid, normalize: bool) -> Result<GridDensity> {
    let v = u.values();
    let n = v.len();
    let h = u.h();
    let values = (0..n)
        .map(|i| {
            let l = v[i.saturating_sub(1)];
            let r = v[(i + 1).min(n - 1)];
            ((r - l) / (2.0 * h)).max(0.0)
        })
        .collect();
    let mut d = GridDensity::on_grid(u.grid(), values, false)?;
    if normalize {
        d.renormalize()?;
    }
    Ok(d)
}

/// Upwind-free face density `(u_{i+1} - u_i)/h` with ghost values `left`/`right`.
pub(crate) fn cdf_slopes(values: &[f64], h: f64, left: f64, right: f64) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let back = (0..n).map(|i| (values[i] - if i == 0 { left } else { values[i - 1] }) / h).collect();
    let fwd = (0..n).map(|i| ((if i + 1 == n { right } else { values[i + 1] }) - values[i]) / h).collect();
    (back, fwd)
}
