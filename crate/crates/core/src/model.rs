//! Shared domain types: problem definitions, space-time grids, scheme
//! configuration and per-level solution fields.
//!
//! State vectors are stored in fixed `[f64; MAX_DIM]` arrays; components at
//! index `>= dim` are unused and kept at zero. `Z` is a row covector stored the
//! same way.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest supported state dimension.
pub const MAX_DIM: usize = 2;

pub type Point = [f64; MAX_DIM];
/// Row-major `d x d` matrix, `m[i][k]`.
pub type Mat = [[f64; MAX_DIM]; MAX_DIM];

pub mod linalg {
    use super::{Mat, Point, MAX_DIM};

    pub fn identity(dim: usize) -> Mat {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        m
    }

    pub fn mat_mul(a: &Mat, b: &Mat, dim: usize) -> Mat {
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            for k in 0..dim {
                let mut s = 0.0;
                for j in 0..dim {
                    s += a[i][j] * b[j][k];
                }
                out[i][k] = s;
            }
        }
        out
    }

    pub fn mat_vec(a: &Mat, v: &Point, dim: usize) -> Point {
        let mut out = [0.0; MAX_DIM];
        for i in 0..dim {
            out[i] = (0..dim).map(|j| a[i][j] * v[j]).sum();
        }
        out
    }

    /// Row vector times matrix, `(z m)_k = sum_i z_i m[i][k]`.
    pub fn row_mul(z: &Point, m: &Mat, dim: usize) -> Point {
        let mut out = [0.0; MAX_DIM];
        for k in 0..dim {
            out[k] = (0..dim).map(|i| z[i] * m[i][k]).sum();
        }
        out
    }

    pub fn det(m: &Mat, dim: usize) -> f64 {
        match dim {
            1 => m[0][0],
            _ => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        }
    }

    /// Inverse, or `None` when the matrix is numerically singular.
    pub fn inverse(m: &Mat, dim: usize) -> Option<Mat> {
        let scale = (0..dim)
            .flat_map(|i| (0..dim).map(move |k| (i, k)))
            .map(|(i, k)| m[i][k].abs())
            .fold(0.0, f64::max);
        let det = det(m, dim);
        if !det.is_finite() || scale == 0.0 || det.abs() <= 1e-14 * scale.powi(dim as i32) {
            return None;
        }
        let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
        match dim {
            1 => inv[0][0] = 1.0 / m[0][0],
            _ => {
                inv[0][0] = m[1][1] / det;
                inv[0][1] = -m[0][1] / det;
                inv[1][0] = -m[1][0] / det;
                inv[1][1] = m[0][0] / det;
            }
        }
        Some(inv)
    }
}

pub type VectorFn = Arc<dyn Fn(f64, &Point) -> Point + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(f64, &Point) -> Mat + Send + Sync>;
/// One `d x d` matrix per index `j`; see the field docs for the meaning of `j`.
pub type TensorFn = Arc<dyn Fn(f64, &Point) -> [Mat; MAX_DIM] + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64, &Point) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type TerminalGradFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
/// `f(t, x, y, z)` with `z` a row covector.
pub type GeneratorFn = Arc<dyn Fn(f64, &Point, f64, &Point) -> f64 + Send + Sync>;

/// One part of the split generator.
#[derive(Clone)]
pub struct GeneratorPart {
    pub eval: GeneratorFn,
    /// `f(t, x, y, z) = alpha(t, x, z) y + beta(t, x, z)`.
    pub affine_in_y: bool,
}

impl GeneratorPart {
    pub fn new(eval: impl Fn(f64, &Point, f64, &Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            affine_in_y: false,
        }
    }

    pub fn affine(eval: impl Fn(f64, &Point, f64, &Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            affine_in_y: true,
        }
    }

    pub fn zero() -> Self {
        Self::affine(|_, _, _, _| 0.0)
    }

    #[inline]
    pub fn call(&self, t: f64, x: &Point, y: f64, z: &Point) -> f64 {
        (self.eval)(t, x, y, z)
    }
}

/// Closed-form solution `Y(t, x)`, `Z(t, x)` used as the error oracle.
#[derive(Clone)]
pub struct AnalyticSolution {
    pub y: ScalarFn,
    pub z: VectorFn,
}

/// Per-axis closed interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "box bounds must have matching length in 1..={MAX_DIM}"
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::InvalidConfig(format!("empty or non-finite box {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// `center +/- half_width` on every axis.
    pub fn around(center: &[f64], half_width: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - half_width).collect(),
            center.iter().map(|c| c + half_width).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// A decoupled FBSDE with scalar `Y` and a generator split as `f = f1 + f2`.
///
/// Derivative fields are optional; forward schemes and `Z` updates that need
/// one report [`Error::MissingDerivative`] when it is absent.
#[derive(Clone)]
pub struct FbsdeProblem {
    pub name: String,
    pub dim: usize,
    pub horizon: f64,
    pub drift: VectorFn,
    pub diffusion: MatrixFn,
    /// Jacobian `db_i/dx_k` as `m[i][k]`.
    pub drift_dx: Option<MatrixFn>,
    /// Entry `j` is the Jacobian of column `j` of sigma: `[j][i][k] = d sigma_ij / dx_k`.
    pub diffusion_dx: Option<TensorFn>,
    pub drift_dt: Option<VectorFn>,
    pub diffusion_dt: Option<MatrixFn>,
    /// Entry `i` is the Hessian of `b_i`.
    pub drift_dxx: Option<TensorFn>,
    /// Second derivative of sigma, one-dimensional problems only.
    pub diffusion_dxx: Option<ScalarFn>,
    /// sigma does not depend on `t` or `x`.
    pub constant_diffusion: bool,
    pub f1: GeneratorPart,
    pub f2: GeneratorPart,
    pub terminal: TerminalFn,
    pub terminal_dx: TerminalGradFn,
    pub analytic: Option<AnalyticSolution>,
    pub default_box: BoxDomain,
    pub default_x0: Point,
}

impl FbsdeProblem {
    /// Full generator `f1 + f2`.
    #[inline]
    pub fn generator(&self, t: f64, x: &Point, y: f64, z: &Point) -> f64 {
        self.f1.call(t, x, y, z) + self.f2.call(t, x, y, z)
    }

    #[inline]
    pub fn sigma(&self, t: f64, x: &Point) -> Mat {
        (self.diffusion)(t, x)
    }

    #[inline]
    pub fn b(&self, t: f64, x: &Point) -> Point {
        (self.drift)(t, x)
    }
}

impl std::fmt::Debug for FbsdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbsdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("default_box", &self.default_box)
            .finish_non_exhaustive()
    }
}

/// Interpolation order of the cubic splines.
pub const SPLINE_ORDER: u32 = 3;

/// Spatial step tied to the time step, `dx = dt^((p+1)/(r+1))`.
pub fn spatial_step(dt: f64, p_time: u32, r_interp: u32) -> f64 {
    dt.powf(f64::from(p_time + 1) / f64::from(r_interp + 1))
}

/// Uniform time partition plus a truncated uniform tensor grid in space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
    pub p_time: u32,
    pub r_interp: u32,
    pub dx: f64,
    pub lo: Vec<f64>,
    /// Upper bounds snapped up onto the node lattice.
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl SpaceTimeGrid {
    pub fn new(horizon: f64, n_steps: usize, bounds: &BoxDomain, p_time: u32) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 || n_steps % 2 == 1 {
            return Err(Error::OddN(n_steps));
        }
        if !(1..=2).contains(&p_time) {
            return Err(Error::InvalidConfig(format!("time order must be 1 or 2, got {p_time}")));
        }
        let dt = horizon / n_steps as f64;
        let dx = spatial_step(dt, p_time, SPLINE_ORDER);
        let mut nodes = Vec::with_capacity(bounds.dim());
        let mut hi = Vec::with_capacity(bounds.dim());
        for (axis, (&l, &h)) in bounds.lo.iter().zip(&bounds.hi).enumerate() {
            let count = ((h - l) / dx).ceil() as usize + 1;
            if count < 4 {
                return Err(Error::TooFewNodes { axis, nodes: count });
            }
            nodes.push(count);
            hi.push(l + (count - 1) as f64 * dx);
        }
        Ok(Self {
            horizon,
            n_steps,
            p_time,
            r_interp: SPLINE_ORDER,
            dx,
            lo: bounds.lo.clone(),
            hi,
            nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.n_steps {
            self.horizon
        } else {
            level as f64 * self.dt()
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    /// Row-major multi-index of a flat node index (last axis fastest).
    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = flat;
        for axis in (0..self.dim()).rev() {
            idx[axis] = rest % self.nodes[axis];
            rest /= self.nodes[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.nodes)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.dx
    }

    pub fn node(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim() {
            x[axis] = self.coordinate(axis, idx[axis]);
        }
        x
    }
}

/// Values on every node of a grid, `components` interleaved per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub shape: Vec<usize>,
    pub components: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: &SpaceTimeGrid, components: usize) -> Self {
        Self {
            shape: grid.nodes.clone(),
            components,
            values: vec![0.0; grid.node_count() * components],
        }
    }

    pub fn from_fn(grid: &SpaceTimeGrid, components: usize, mut f: impl FnMut(&Point, &mut [f64])) -> Self {
        let mut field = Self::zeros(grid, components);
        for (n, chunk) in field.values.chunks_mut(components).enumerate() {
            f(&grid.node(n), chunk);
        }
        field
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize], component: usize) -> f64 {
        self.values[self.flat(idx) * self.components + component]
    }

    pub fn set(&mut self, idx: &[usize], component: usize, value: f64) {
        let k = self.flat(idx) * self.components + component;
        self.values[k] = value;
    }

    pub fn node_values(&self, flat: usize) -> &[f64] {
        &self.values[flat * self.components..(flat + 1) * self.components]
    }
}

/// `Y^n` and `Z^n` on the grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSolution {
    pub level: usize,
    pub y: GridField,
    pub z: GridField,
}

impl LevelSolution {
    pub fn is_finite(&self) -> bool {
        self.y.values.iter().chain(&self.z.values).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Alternating splitting with the `A^n` matrix `Z` update.
    S1,
    /// Alternating splitting with the Malliavin-derivative `Z` update.
    S2,
    /// Trapezoidal (Crank-Nicolson) reference scheme.
    Cn,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::S1 => "S1",
            Scheme::S2 => "S2",
            Scheme::Cn => "CN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForwardScheme {
    Euler,
    Milstein,
    WeakTaylor2,
}

impl ForwardScheme {
    pub fn label(self) -> &'static str {
        match self {
            ForwardScheme::Euler => "Euler",
            ForwardScheme::Milstein => "Milstein",
            ForwardScheme::WeakTaylor2 => "WT2",
        }
    }
}

/// Which `Z` update the trapezoidal reference scheme uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZUpdate {
    AMatrix,
    Malliavin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extrapolation {
    LinearBoundary,
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub forward: ForwardScheme,
    pub gh_order: usize,
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Use the `dt/2` weights in the S2 `Y` update.
    pub s2_verbatim_weights: bool,
    pub extrapolation: Extrapolation,
    pub cn_z_update: ZUpdate,
    /// Solve the implicit step exactly when the implicit generator part is
    /// affine in `y`; a confirming Picard sweep is still counted.
    pub affine_direct: bool,
    pub execution: Execution,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::S1,
            forward: ForwardScheme::Euler,
            gh_order: 8,
            picard_tol: 1e-12,
            picard_max: 50,
            s2_verbatim_weights: false,
            extrapolation: Extrapolation::LinearBoundary,
            cn_z_update: ZUpdate::AMatrix,
            affine_direct: true,
            execution: Execution::Parallel,
        }
    }
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, forward: ForwardScheme) -> Self {
        Self {
            scheme,
            forward,
            ..Self::default()
        }
    }
}

/// Checks the problem, grid and configuration against each other.
pub fn validate(problem: &FbsdeProblem, grid: &SpaceTimeGrid, cfg: &SchemeConfig) -> Result<()> {
    if grid.n_steps % 2 == 1 {
        return Err(Error::OddN(grid.n_steps));
    }
    for (axis, &n) in grid.nodes.iter().enumerate() {
        if n < 4 {
            return Err(Error::TooFewNodes { axis, nodes: n });
        }
    }
    if problem.dim != grid.dim() || problem.dim == 0 || problem.dim > MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "problem dimension {} does not match grid dimension {}",
            problem.dim,
            grid.dim()
        )));
    }
    if (problem.horizon - grid.horizon).abs() > 1e-14 * problem.horizon {
        return Err(Error::InvalidConfig(format!(
            "grid horizon {} differs from problem horizon {}",
            grid.horizon, problem.horizon
        )));
    }
    if !(cfg.picard_tol > 0.0) || cfg.picard_max == 0 {
        return Err(Error::InvalidConfig(
            "picard_tol must be positive and picard_max at least 1".into(),
        ));
    }
    if !(1..=64).contains(&cfg.gh_order) {
        return Err(Error::OrderOutOfRange(cfg.gh_order));
    }
    let d = problem.dim;
    let levels = if problem.constant_diffusion { 0..=0 } else { 0..=grid.n_steps };
    for level in levels {
        let t = grid.time(level);
        for n in 0..grid.node_count() {
            let x = grid.node(n);
            if linalg::inverse(&problem.sigma(t, &x), d).is_none() {
                return Err(Error::SingularDiffusion {
                    t,
                    x: x[..d].to_vec(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_n_rejected() {
        let b = BoxDomain::interval(0.0, 1.0).unwrap();
        assert!(matches!(SpaceTimeGrid::new(1.0, 7, &b, 2), Err(Error::OddN(7))));
    }

    #[test]
    fn too_few_nodes() {
        // dt = 1/4, p = 1: dx = 0.5, so [0, 1] has 3 nodes.
        let b = BoxDomain::interval(0.0, 1.0).unwrap();
        assert!(matches!(
            SpaceTimeGrid::new(1.0, 4, &b, 1),
            Err(Error::TooFewNodes { axis: 0, nodes: 3 })
        ));
    }

    #[test]
    fn hi_snaps_up_to_lattice() {
        let b = BoxDomain::interval(0.1, 2.5).unwrap();
        let g = SpaceTimeGrid::new(1.0, 16, &b, 2).unwrap();
        let last = g.nodes[0] - 1;
        assert_eq!(g.coordinate(0, last), g.hi[0]);
        assert!(g.hi[0] >= 2.5 && g.hi[0] - 2.5 < g.dx);
        assert_eq!(g.dx, spatial_step(1.0 / 16.0, 2, 3));
    }

    #[test]
    fn multi_index_round_trip() {
        let b = BoxDomain::around(&[0.0, 0.0], 1.0).unwrap();
        let g = SpaceTimeGrid::new(1.0, 8, &b, 2).unwrap();
        for n in 0..g.node_count() {
            assert_eq!(g.flat_index(&g.multi_index(n)[..2]), n);
        }
        let x = g.node(g.nodes[1] + 2);
        assert_eq!(x, [g.coordinate(0, 1), g.coordinate(1, 2)]);
    }

    #[test]
    fn inverse_detects_singular() {
        let m = [[1.0, 2.0], [2.0, 4.0]];
        assert!(linalg::inverse(&m, 2).is_none());
        let inv = linalg::inverse(&[[2.0, 1.0], [0.0, 4.0]], 2).unwrap();
        let id = linalg::mat_mul(&inv, &[[2.0, 1.0], [0.0, 4.0]], 2);
        assert_eq!(id, linalg::identity(2));
    }
}
