//! Interaction kernels `f(x, y)` for the generalized flow
//! `∂_t m + ∂_x(m K[m]) + ∂_x(b m) = 0`, `K[m](x) = ∫ f(x,y)/(x-y) m(dy)`,
//! and the quantities derived from them:
//!
//! ```text
//! c(x) = f(x, x)
//! g(x, y) = f(x, y) + (x - y) ∂_y f(x, y)
//! β(x, y) = (g(x, y) - c(x)) / (x - y)^2,    β(x, x) = -½ ∂_yy f(x, x)
//! ```
//!
//! Near the diagonal `β` is filled from its Taylor expansion
//! `β(x, x + d) = -½ f_yy - ⅓ f_yyy d + O(d²) = -½ f_yy(x, x + ⅔ d) + O(d²)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::{Grid, GridDensity, GridField};
use crate::measure::half_laplacian::{offset_weights, tail_weights, Tails};
use crate::measure::hilbert::hilbert;

pub type PairFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Step of the centred finite-difference fallback for first derivatives.
pub const FD_STEP: f64 = 1e-5;
/// Step for second derivatives (larger to keep round-off below truncation).
const FD_STEP2: f64 = 1e-4;
/// Below this distance β is taken from its Taylor expansion.
const BETA_TAYLOR_RADIUS: f64 = 1e-3;

/// Drift `b` in the flow.
#[derive(Clone)]
pub enum DriftSpec {
    /// Lipschitz `b(x)` with its constant.
    Lipschitz { b: ScalarFn, lipschitz: f64, label: String },
    /// Bounded `b` with `b + C_b·Id` nondecreasing; may jump.
    SingularMonotone { b: ScalarFn, bound: f64, label: String },
    /// `b(t, x)`, Lipschitz in `x`.
    TimeDependent { b: TimeFn, lipschitz: f64, label: String },
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `sign(x)` with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl DriftSpec {
    pub fn zero() -> Self {
        Self::Lipschitz { b: Arc::new(|_| 0.0), lipschitz: 0.0, label: "zero".into() }
    }

    pub fn constant(c: f64) -> Self {
        Self::Lipschitz { b: Arc::new(move |_| c), lipschitz: 0.0, label: format!("constant({c})") }
    }

    /// `b(x) = a·x`.
    pub fn linear(a: f64) -> Self {
        Self::Lipschitz { b: Arc::new(move |x| a * x), lipschitz: a.abs(), label: format!("linear({a})") }
    }

    pub fn lipschitz(label: &str, lipschitz: f64, b: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Lipschitz { b: Arc::new(b), lipschitz, label: label.into() }
    }

    /// `b(x) = sign(x)`, the expansive step.
    pub fn sign() -> Self {
        Self::SingularMonotone { b: Arc::new(sign), bound: 1.0, label: "sign".into() }
    }

    /// Piecewise-linear smoothing `clamp(x/η, -1, 1)` of the sign drift.
    pub fn smoothed_sign(eta: f64) -> Self {
        Self::Lipschitz {
            b: Arc::new(move |x| (x / eta).clamp(-1.0, 1.0)),
            lipschitz: 1.0 / eta,
            label: format!("smoothed_sign({eta})"),
        }
    }

    pub fn singular(label: &str, bound: f64, b: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::SingularMonotone { b: Arc::new(b), bound, label: label.into() }
    }

    pub fn time_dependent(label: &str, lipschitz: f64, b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::TimeDependent { b: Arc::new(b), lipschitz, label: label.into() }
    }

    pub fn label(&self) -> &str {
        match self {
            Self::Lipschitz { label, .. }
            | Self::SingularMonotone { label, .. }
            | Self::TimeDependent { label, .. } => label,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Lipschitz { label, .. } if label == "zero")
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, Self::SingularMonotone { .. })
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            Self::Lipschitz { b, .. } | Self::SingularMonotone { b, .. } => b(x),
            Self::TimeDependent { b, .. } => b(t, x),
        }
    }

    /// One-sided limits `(b(x-), b(x+))`; equal for continuous drifts.
    pub fn one_sided(&self, t: f64, x: f64) -> (f64, f64) {
        match self {
            Self::SingularMonotone { b, .. } => {
                let e = 1e-12 * x.abs().max(1.0);
                (b(x - e), b(x + e))
            }
            _ => {
                let v = self.value(t, x);
                (v, v)
            }
        }
    }

    /// Constant `C` in `(b(x) - b(y))(x - y) >= -C (x - y)^2`.
    pub fn monotonicity_constant(&self) -> f64 {
        match self {
            Self::Lipschitz { lipschitz, .. } | Self::TimeDependent { lipschitz, .. } => *lipschitz,
            Self::SingularMonotone { bound, .. } => *bound,
        }
    }
}

#[derive(Clone)]
struct TableKernel {
    xs: Vec<f64>,
    ys: Vec<f64>,
    f: Vec<f64>,
}

impl TableKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let locate = |v: &[f64], p: f64| {
            let p = p.clamp(v[0], v[v.len() - 1]);
            let i = v.partition_point(|q| *q <= p).clamp(1, v.len() - 1) - 1;
            let w = (p - v[i]) / (v[i + 1] - v[i]);
            (i, w)
        };
        let (i, a) = locate(&self.xs, x);
        let (j, b) = locate(&self.ys, y);
        let ny = self.ys.len();
        let at = |p: usize, q: usize| self.f[p * ny + q];
        (1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j + 1)) + a * ((1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1))
    }
}

/// The pair `(f, b)` plus optional analytic derivatives of `f`.
#[derive(Clone)]
pub struct InteractionKernel {
    name: String,
    f: PairFn,
    df_dx: Option<PairFn>,
    df_dy: Option<PairFn>,
    df_dxdy: Option<PairFn>,
    d2f_dyy: Option<PairFn>,
    drift: DriftSpec,
    c0: Option<f64>,
    pure: bool,
    y_independent: bool,
}

impl fmt::Debug for InteractionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InteractionKernel").field("name", &self.name).field("drift", &self.drift).finish()
    }
}

impl InteractionKernel {
    /// A kernel from `f` alone; derivatives fall back to finite differences.
    pub fn new(name: &str, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            df_dx: None,
            df_dy: None,
            df_dxdy: None,
            d2f_dyy: None,
            drift: DriftSpec::zero(),
            c0: None,
            pure: false,
            y_independent: false,
        }
    }

    /// `f ≡ 1`.
    pub fn dyson() -> Self {
        let z: PairFn = Arc::new(|_, _| 0.0);
        Self {
            name: "dyson".into(),
            f: Arc::new(|_, _| 1.0),
            df_dx: Some(z.clone()),
            df_dy: Some(z.clone()),
            df_dxdy: Some(z.clone()),
            d2f_dyy: Some(z),
            drift: DriftSpec::zero(),
            c0: Some(1.0),
            pure: true,
            y_independent: true,
        }
    }

    /// `f = 1 + ε (x - y)^2`.
    pub fn quadratic(eps: f64) -> Self {
        Self {
            name: format!("quadratic({eps})"),
            f: Arc::new(move |x, y| 1.0 + eps * (x - y) * (x - y)),
            df_dx: Some(Arc::new(move |x, y| 2.0 * eps * (x - y))),
            df_dy: Some(Arc::new(move |x, y| -2.0 * eps * (x - y))),
            df_dxdy: Some(Arc::new(move |_, _| -2.0 * eps)),
            d2f_dyy: Some(Arc::new(move |_, _| 2.0 * eps)),
            drift: DriftSpec::zero(),
            c0: None,
            pure: false,
            y_independent: false,
        }
    }

    /// `f = exp(-(x - y)^2)`.
    pub fn gaussian() -> Self {
        let e = |x: f64, y: f64| (-(x - y) * (x - y)).exp();
        Self {
            name: "gaussian".into(),
            f: Arc::new(e),
            df_dx: Some(Arc::new(move |x, y| -2.0 * (x - y) * e(x, y))),
            df_dy: Some(Arc::new(move |x, y| 2.0 * (x - y) * e(x, y))),
            df_dxdy: Some(Arc::new(move |x, y| (2.0 - 4.0 * (x - y) * (x - y)) * e(x, y))),
            d2f_dyy: Some(Arc::new(move |x, y| (4.0 * (x - y) * (x - y) - 2.0) * e(x, y))),
            drift: DriftSpec::zero(),
            c0: None,
            pure: false,
            y_independent: false,
        }
    }

    /// `f = x`, the positive-half-line interaction.
    pub fn wishart() -> Self {
        let z: PairFn = Arc::new(|_, _| 0.0);
        Self {
            name: "wishart".into(),
            f: Arc::new(|x, _| x),
            df_dx: Some(Arc::new(|_, _| 1.0)),
            df_dy: Some(z.clone()),
            df_dxdy: Some(z.clone()),
            d2f_dyy: Some(z),
            drift: DriftSpec::zero(),
            c0: None,
            pure: false,
            y_independent: true,
        }
    }

    /// Bilinear interpolation of a CSV table with header `x,y,f` on a rectangular lattice.
    pub fn from_table(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let get = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| LabError::Kernel(format!("{}: bad value on line {}", path.display(), line + 2)))
            };
            rows.push((get(0)?, get(1)?, get(2)?));
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut xs, &mut ys] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        if xs.len() < 2 || ys.len() < 2 || xs.len() * ys.len() != rows.len() {
            return Err(LabError::Kernel("table must be a full rectangular lattice of at least 2x2".into()));
        }
        let mut f = vec![f64::NAN; rows.len()];
        for (x, y, v) in rows {
            let i = xs.partition_point(|q| *q < x);
            let j = ys.partition_point(|q| *q < y);
            f[i * ys.len() + j] = v;
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Kernel("table has missing or non-finite entries".into()));
        }
        let t = TableKernel { xs, ys, f };
        let mut k = Self::new(&format!("table:{}", path.display()), move |x, y| t.eval(x, y));
        k.name = format!("table:{}", path.display());
        Ok(k)
    }

    pub fn with_drift(mut self, drift: DriftSpec) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = Some(c0);
        self
    }

    pub fn with_derivatives(
        mut self,
        df_dx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        df_dy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        df_dxdy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.df_dx = Some(Arc::new(df_dx));
        self.df_dy = Some(Arc::new(df_dy));
        self.df_dxdy = Some(Arc::new(df_dxdy));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }
    pub fn c0(&self) -> Option<f64> {
        self.c0
    }
    /// `f ≡ 1`.
    pub fn is_pure(&self) -> bool {
        self.pure
    }
    /// `f(x, y)` does not depend on `y`.
    pub fn is_y_independent(&self) -> bool {
        self.y_independent
    }

    pub fn f(&self, x: f64, y: f64) -> f64 {
        (self.f)(x, y)
    }

    pub fn df_dx(&self, x: f64, y: f64) -> f64 {
        match &self.df_dx {
            Some(d) => d(x, y),
            None => (self.f(x + FD_STEP, y) - self.f(x - FD_STEP, y)) / (2.0 * FD_STEP),
        }
    }

    pub fn df_dy(&self, x: f64, y: f64) -> f64 {
        match &self.df_dy {
            Some(d) => d(x, y),
            None => (self.f(x, y + FD_STEP) - self.f(x, y - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    pub fn df_dxdy(&self, x: f64, y: f64) -> f64 {
        match &self.df_dxdy {
            Some(d) => d(x, y),
            None => {
                let e = FD_STEP2;
                (self.f(x + e, y + e) - self.f(x + e, y - e) - self.f(x - e, y + e) + self.f(x - e, y - e))
                    / (4.0 * e * e)
            }
        }
    }

    pub fn d2f_dyy(&self, x: f64, y: f64) -> f64 {
        match &self.d2f_dyy {
            Some(d) => d(x, y),
            None => {
                let e = FD_STEP2;
                (self.f(x, y + e) - 2.0 * self.f(x, y) + self.f(x, y - e)) / (e * e)
            }
        }
    }

    pub fn c(&self, x: f64) -> f64 {
        self.f(x, x)
    }

    pub fn g(&self, x: f64, y: f64) -> f64 {
        self.f(x, y) + (x - y) * self.df_dy(x, y)
    }

    /// `β(x, y)` with the Taylor fill near the diagonal.
    pub fn beta(&self, x: f64, y: f64) -> f64 {
        let d = y - x;
        if d.abs() < BETA_TAYLOR_RADIUS {
            -0.5 * self.d2f_dyy(x, x + 2.0 * d / 3.0)
        } else {
            (self.g(x, y) - self.c(x)) / (d * d)
        }
    }

    /// `β(x, x) = -½ ∂_yy f(x, x)`.
    pub fn beta_diagonal(&self, x: f64) -> f64 {
        -0.5 * self.d2f_dyy(x, x)
    }

    /// Regular part `(f(x,y) - f(x,x))/(x - y)`, equal to `-∂_y f(x,x)` on the diagonal.
    pub fn regular_part(&self, x: f64, y: f64) -> f64 {
        if self.y_independent {
            return 0.0;
        }
        let d = x - y;
        if d.abs() < BETA_TAYLOR_RADIUS {
            -self.df_dy(x, 0.5 * (x + y))
        } else {
            (self.f(x, y) - self.f(x, x)) / d
        }
    }
}

impl FromStr for InteractionKernel {
    type Err = LabError;

    /// `dyson`, `quadratic(eps)`, `gaussian`, `wishart` or `table:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("table:") {
            return Self::from_table(Path::new(path));
        }
        if let Some(arg) = s.strip_prefix("quadratic(").and_then(|r| r.strip_suffix(')')) {
            let eps: f64 = arg.trim().parse().map_err(|_| LabError::Kernel(format!("bad epsilon in {s}")))?;
            return Ok(Self::quadratic(eps));
        }
        match s {
            "dyson" => Ok(Self::dyson()),
            "gaussian" => Ok(Self::gaussian()),
            "wishart" => Ok(Self::wishart()),
            _ => Err(LabError::Kernel(format!("unknown kernel '{s}'"))),
        }
    }
}

/// `c`, `g`, `β` of a kernel whose diagonal fill was validated on a box.
#[derive(Debug, Clone)]
pub struct DerivedKernel {
    kernel: InteractionKernel,
}

impl DerivedKernel {
    pub fn c(&self, x: f64) -> f64 {
        self.kernel.c(x)
    }
    pub fn g(&self, x: f64, y: f64) -> f64 {
        self.kernel.g(x, y)
    }
    pub fn beta(&self, x: f64, y: f64) -> f64 {
        self.kernel.beta(x, y)
    }
    pub fn kernel(&self) -> &InteractionKernel {
        &self.kernel
    }
}

/// Derives `c`, `g`, `β`, checking the diagonal Taylor value of `β` against a
/// Richardson extrapolation of off-diagonal values at 11 points of `[a, b]`.
pub fn derive_c_g_beta(k: &InteractionKernel, box_: (f64, f64)) -> Result<DerivedKernel> {
    let (a, b) = box_;
    let d = 0.02;
    for i in 0..=10 {
        let x = a + (b - a) * i as f64 / 10.0;
        let taylor = k.beta_diagonal(x);
        let sym = |dd: f64| 0.5 * (k.beta(x, x + dd) + k.beta(x, x - dd));
        let extrapolated = (4.0 * sym(d) - sym(2.0 * d)) / 3.0;
        if (taylor - extrapolated).abs() > 1e-3 * (1.0 + taylor.abs()) || !taylor.is_finite() {
            return Err(LabError::BetaDiagonal { x, taylor, extrapolated });
        }
    }
    Ok(DerivedKernel { kernel: k.clone() })
}

/// `K[m](x) = ∫ (f(x,y) - f(x,x))/(x - y) m(dy) + f(x,x) H[m](x)`.
pub fn eval_k(k: &InteractionKernel, m: &GridDensity, x: f64) -> Result<f64> {
    let hm = hilbert(m, x)?;
    if k.is_pure() {
        return Ok(hm);
    }
    let h = m.h();
    let regular: f64 = m.values().iter().enumerate().map(|(j, v)| h * v * k.regular_part(x, m.x(j))).sum();
    let ext: f64 = m.exterior().iter().map(|e| e.mass * k.regular_part(x, e.position)).sum();
    Ok(regular + ext + k.c(x) * hm)
}

/// `L[u](x) = ∫ g(x,y)(u(x) - u(y))/(x - y)^2 dy`, split at `δ`, with constant tails.
///
/// Same trapezoid rule as the half-Laplacian with every weight multiplied by
/// `g(x, y)`; beyond the window `g` is frozen at its value on the last node.
/// Off-node points interpolate the neighbouring nodes.
pub fn eval_l(k: &InteractionKernel, u: &GridField, x: f64, delta: f64) -> Result<(f64, f64)> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(LabError::InvalidSplit(delta));
    }
    let grid = u.grid();
    let s = grid.coordinate(x).clamp(0.0, (grid.n - 1) as f64);
    let i0 = s.floor() as usize;
    let w = s - i0 as f64;
    let tails = Tails::constant(u.values());
    let a = l_node(k, u, i0, delta, tails);
    if w < 1e-12 || i0 + 1 == grid.n {
        return Ok(a);
    }
    let b = l_node(k, u, i0 + 1, delta, tails);
    Ok((a.0 * (1.0 - w) + b.0 * w, a.1 * (1.0 - w) + b.1 * w))
}

fn l_node(k: &InteractionKernel, u: &GridField, i: usize, delta: f64, tails: Tails) -> (f64, f64) {
    let v = u.values();
    let grid = u.grid();
    let row = l_row(k, grid, i, delta);
    let mut near = 0.0;
    let mut far = 0.0;
    for (j, (a, b)) in row.weights.iter().enumerate() {
        near += a * (v[i] - v[j]);
        far += b * (v[i] - v[j]);
    }
    let (left, right) = match tails {
        Tails::Full { left, right } => (Some(left), right),
        Tails::HalfLine { right } => (None, right),
    };
    if let Some(l) = left {
        near += row.tail_left.0 * (v[i] - l);
        far += row.tail_left.1 * (v[i] - l);
    }
    near += row.tail_right.0 * (v[i] - right);
    far += row.tail_right.1 * (v[i] - right);
    (near, far)
}

struct LRow {
    weights: Vec<(f64, f64)>,
    tail_left: (f64, f64),
    tail_right: (f64, f64),
}

fn l_row(k: &InteractionKernel, grid: Grid, i: usize, delta: f64) -> LRow {
    let h = grid.h;
    let xi = grid.node(i);
    let n = grid.n;
    let weights = (0..n)
        .map(|j| {
            if j == i {
                return (0.0, 0.0);
            }
            let (a, b) = offset_weights(i.abs_diff(j) as u64, h, delta);
            let g = k.g(xi, grid.node(j));
            (a * g, b * g)
        })
        .collect();
    let tail = |kmax: usize, edge: f64| {
        let (near, far) = tail_weights(kmax, h, delta);
        let g = k.g(xi, edge);
        (near * g, far * g)
    };
    LRow { weights, tail_left: tail(i, grid.node(0)), tail_right: tail(n - 1 - i, grid.node(n - 1)) }
}

/// Dense `L` operator on a grid, for repeated application inside solvers.
#[derive(Debug, Clone)]
pub struct LOperator {
    grid: Grid,
    n: usize,
    weights: Vec<f64>,
    row_sums: Vec<f64>,
    tail_left: Vec<f64>,
    tail_right: Vec<f64>,
}

impl LOperator {
    pub fn new(k: &InteractionKernel, grid: Grid) -> Self {
        let n = grid.n;
        let mut weights = vec![0.0; n * n];
        let mut row_sums = vec![0.0; n];
        let mut tail_left = vec![0.0; n];
        let mut tail_right = vec![0.0; n];
        for i in 0..n {
            let row = l_row(k, grid, i, f64::INFINITY);
            for (j, (a, b)) in row.weights.iter().enumerate() {
                weights[i * n + j] = a + b;
                row_sums[i] += a + b;
            }
            tail_left[i] = row.tail_left.0 + row.tail_left.1;
            tail_right[i] = row.tail_right.0 + row.tail_right.1;
        }
        Self { grid, n, weights, row_sums, tail_left, tail_right }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Most negative weight (nonzero only when `g` changes sign).
    pub fn min_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let row = &self.weights[i * self.n..(i + 1) * self.n];
                row.iter().map(|w| w.abs()).sum::<f64>() + self.tail_left[i].abs() + self.tail_right[i].abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, u: &[f64], tails: Tails) -> Vec<f64> {
        let (left, right) = match tails {
            Tails::Full { left, right } => (Some(left), right),
            Tails::HalfLine { right } => (None, right),
        };
        (0..self.n)
            .map(|i| {
                let row = &self.weights[i * self.n..(i + 1) * self.n];
                let conv: f64 = row.iter().zip(u).map(|(w, v)| w * v).sum();
                let mut a = u[i] * self.row_sums[i] - conv;
                if let Some(l) = left {
                    a += self.tail_left[i] * (u[i] - l);
                }
                a + self.tail_right[i] * (u[i] - right)
            })
            .collect()
    }
}

/// Dense `K` operator on a grid: regular-part matrix plus `c(x) H[m]`.
#[derive(Debug, Clone)]
pub struct KOperator {
    n: usize,
    h: f64,
    c: Vec<f64>,
    regular: Option<Vec<f64>>,
}

impl KOperator {
    pub fn new(k: &InteractionKernel, grid: Grid) -> Self {
        let n = grid.n;
        let c = (0..n).map(|i| k.c(grid.node(i))).collect();
        let regular = (!k.is_y_independent()).then(|| {
            let mut r = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    r[i * n + j] = k.regular_part(grid.node(i), grid.node(j));
                }
            }
            r
        });
        Self { n, h: grid.h, c, regular }
    }

    /// `K[m]` at nodes, given the density values and `H[m]` at the same nodes.
    pub fn apply(&self, m: &[f64], hilbert: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let reg = match &self.regular {
                    Some(r) => self.h * r[i * self.n..(i + 1) * self.n].iter().zip(m).map(|(a, b)| a * b).sum::<f64>(),
                    None => 0.0,
                };
                reg + self.c[i] * hilbert[i]
            })
            .collect()
    }
}

/// A kernel `β(x, y)` supported in `y` on a box, with its admissible `L¹` bound.
#[derive(Clone)]
pub struct BetaKernel {
    beta: PairFn,
    y_box: (f64, f64),
    l1_bound: f64,
    label: String,
}

impl fmt::Debug for BetaKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BetaKernel").field("label", &self.label).field("y_box", &self.y_box).finish()
    }
}

impl BetaKernel {
    pub fn new(
        label: &str,
        y_box: (f64, f64),
        l1_bound: f64,
        beta: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { beta: Arc::new(beta), y_box, l1_bound, label: label.into() }
    }

    pub fn zero() -> Self {
        Self::new("zero", (0.0, 1.0), 0.0, |_, _| 0.0)
    }

    /// `β ≡ value` for `y ∈ [a, b]`.
    pub fn box_constant(value: f64, a: f64, b: f64) -> Self {
        Self::new(&format!("box({value},{a},{b})"), (a, b), value.abs() * (b - a), move |_, _| value)
    }

    /// `β = -ε sign(x - y)` on `y ∈ [a, b]`: changes sign across the diagonal.
    pub fn sign_changing_box(eps: f64, a: f64, b: f64) -> Self {
        Self::new(&format!("sign_box({eps},{a},{b})"), (a, b), eps * (b - a), move |x, y| -eps * sign(x - y))
    }

    /// `β` derived from an interaction kernel, restricted to `y ∈ [a, b]`.
    pub fn from_kernel(k: &InteractionKernel, a: f64, b: f64, l1_bound: f64) -> Self {
        let k = k.clone();
        Self::new(&format!("beta[{}]", k.name()), (a, b), l1_bound, move |x, y| k.beta(x, y))
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn y_box(&self) -> (f64, f64) {
        self.y_box
    }
    pub fn l1_bound(&self) -> f64 {
        self.l1_bound
    }
    pub fn value(&self, x: f64, y: f64) -> f64 {
        (self.beta)(x, y)
    }

    fn nodes(&self, h: f64) -> (Vec<f64>, f64) {
        let (a, b) = self.y_box;
        let m = ((b - a) / h).ceil().max(1.0) as usize;
        let dy = (b - a) / m as f64;
        ((0..m).map(|i| a + (i as f64 + 0.5) * dy).collect(), dy)
    }

    /// `∫ |β(x, y)| dy` by the midpoint rule with step `h`.
    pub fn l1_at(&self, x: f64, h: f64) -> f64 {
        let (ys, dy) = self.nodes(h);
        dy * ys.iter().map(|y| self.value(x, *y).abs()).sum::<f64>()
    }

    /// Sampled `sup_x ∫ |β(x, ·)|` over the given points.
    pub fn sup_l1(&self, xs: &[f64], h: f64) -> f64 {
        xs.iter().map(|x| self.l1_at(*x, h)).fold(0.0, f64::max)
    }

    /// Rejects kernels whose sampled `L¹` norm exceeds the declared bound.
    pub fn check_l1(&self, xs: &[f64], h: f64) -> Result<f64> {
        let s = self.sup_l1(xs, h);
        if !s.is_finite() || s > self.l1_bound * (1.0 + 1e-9) + 1e-12 {
            return Err(LabError::BetaNotIntegrable { sup_l1: s, bound: self.l1_bound });
        }
        Ok(s)
    }

    /// `B(x; u)` at every node of `grid`, with `u` interpolated in `y`.
    pub fn apply(&self, grid: Grid, u: &[f64]) -> Vec<f64> {
        let (ys, dy) = self.nodes(grid.h);
        let uy: Vec<f64> = ys.iter().map(|y| crate::grid::interpolate(&grid, u, *y)).collect();
        (0..grid.n)
            .map(|i| {
                let x = grid.node(i);
                dy * ys.iter().zip(&uy).map(|(y, v)| self.value(x, *y) * v).sum::<f64>()
            })
            .collect()
    }
}

/// `B(x; u) = ∫ β(x, y) u(y) dy`.
pub fn eval_b(beta: &BetaKernel, u: &GridField, x: f64) -> Result<f64> {
    let grid = u.grid();
    beta.check_l1(&[x], grid.h)?;
    let (ys, dy) = beta.nodes(grid.h);
    Ok(dy * ys.iter().map(|y| beta.value(x, *y) * u.value_at(*y)).sum::<f64>())
}

/// Lipschitz certificate `|B(x; v) - B(x; w)| <= ‖β(x, ·)‖_{L¹} ‖v - w‖_∞`.
pub fn b_lipschitz_certificate(beta: &BetaKernel, x: f64, h: f64) -> f64 {
    beta.l1_at(x, h)
}

/// Outcome of a sampled hypothesis check.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub kernel: String,
    pub lattice: usize,
    /// `inf c > 0` and `‖f‖ + ‖∂₁f‖ + ‖∂₁₂f‖` finite (and within the declared `C0`, if any).
    pub hypf: bool,
    /// Smallest admissible `C0` on the box.
    pub c0_sampled: f64,
    pub min_c: f64,
    pub min_c_at: f64,
    /// `g >= 0` on the box.
    pub comparison: bool,
    pub min_g: f64,
    pub min_g_at: (f64, f64),
    /// Sampled `sup_x ∫|β|`, `sup_x ∫|∂_x β|`, `sup_x ∫|∂_xx β|`.
    pub bdef_l1_bounds: [f64; 3],
    /// `(b(x) - b(y))(x - y) >= -C_b (x - y)^2` on sampled pairs.
    pub drift_monotone: bool,
    pub drift_constant: f64,
    pub drift_witness: Option<(f64, f64)>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.hypf && self.comparison && self.drift_monotone
    }
}

/// Default sampling lattice per side.
pub const DEFAULT_LATTICE: usize = 201;

/// Samples the kernel hypotheses on `box × box`.
pub fn validate_hypotheses(k: &InteractionKernel, box_: (f64, f64)) -> HypothesisReport {
    validate_hypotheses_on(k, box_, DEFAULT_LATTICE)
}

pub fn validate_hypotheses_on(k: &InteractionKernel, box_: (f64, f64), lattice: usize) -> HypothesisReport {
    let (a, b) = box_;
    let pts: Vec<f64> = (0..lattice).map(|i| a + (b - a) * i as f64 / (lattice - 1) as f64).collect();
    let dy = (b - a) / (lattice - 1) as f64;

    let (mut min_c, mut min_c_at) = (f64::INFINITY, a);
    let (mut sup_f, mut sup_fx, mut sup_fxy) = (0.0f64, 0.0f64, 0.0f64);
    let (mut min_g, mut min_g_at) = (f64::INFINITY, (a, a));
    let mut l1 = [0.0f64; 3];
    let ex = 1e-3;
    for &x in &pts {
        let c = k.c(x);
        if c < min_c {
            min_c = c;
            min_c_at = x;
        }
        let mut rows = [0.0f64; 3];
        for &y in &pts {
            sup_f = sup_f.max(k.f(x, y).abs());
            sup_fx = sup_fx.max(k.df_dx(x, y).abs());
            sup_fxy = sup_fxy.max(k.df_dxdy(x, y).abs());
            let g = k.g(x, y);
            if g < min_g {
                min_g = g;
                min_g_at = (x, y);
            }
            let b0 = k.beta(x, y);
            let bp = k.beta(x + ex, y);
            let bm = k.beta(x - ex, y);
            rows[0] += b0.abs() * dy;
            rows[1] += ((bp - bm) / (2.0 * ex)).abs() * dy;
            rows[2] += ((bp - 2.0 * b0 + bm) / (ex * ex)).abs() * dy;
        }
        for q in 0..3 {
            l1[q] = l1[q].max(rows[q]);
        }
    }
    let c0_sampled = (1.0 / min_c).max(sup_f + sup_fx + sup_fxy);
    let finite = c0_sampled.is_finite();
    let hypf = min_c > 0.0 && finite && k.c0().is_none_or(|c0| c0_sampled <= c0 * (1.0 + 1e-12));

    let drift = k.drift();
    let cb = drift.monotonicity_constant();
    let mut witness = None;
    'outer: for &x in &pts {
        for &y in &pts {
            if x == y {
                continue;
            }
            let lhs = (drift.value(0.0, x) - drift.value(0.0, y)) * (x - y);
            if lhs < -cb * (x - y) * (x - y) * (1.0 + 1e-9) - 1e-12 {
                witness = Some((x, y));
                break 'outer;
            }
        }
    }
    let bounded = match drift {
        DriftSpec::SingularMonotone { bound, .. } => pts.iter().all(|x| drift.value(0.0, *x).abs() <= *bound + 1e-12),
        _ => true,
    };
    HypothesisReport {
        kernel: k.name().to_string(),
        lattice,
        hypf,
        c0_sampled,
        min_c,
        min_c_at,
        comparison: min_g >= -1e-12,
        min_g,
        min_g_at,
        bdef_l1_bounds: l1,
        drift_monotone: witness.is_none() && bounded,
        drift_constant: cb,
        drift_witness: witness,
    }
}
