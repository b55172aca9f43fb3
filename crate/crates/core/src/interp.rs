//! Not-a-knot cubic splines on the uniform grid, 1-D and tensor-product 2-D.
//!
//! A spline is stored through nodal values and nodal second derivatives. In
//! 2-D each node carries `(v, v_xx, v_yy, v_xxyy)`, obtained by running the
//! 1-D fit along axis 0, along axis 1, and along axis 0 of the axis-1 result.
//! Evaluation inside a cell is then a 16-term separable sum.

use crate::error::{Error, Result};
use crate::model::{Extrapolation, GridField, Point, SpaceTimeGrid, MAX_DIM};

/// Second derivatives of the not-a-knot cubic spline through `y` on a uniform
/// grid of step `h`. `y.len()` must be at least 4.
pub fn not_a_knot_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    assert!(n >= 4, "need at least 4 points");
    let c = 6.0 / (h * h);
    let rhs = |i: usize| c * (y[i - 1] - 2.0 * y[i] + y[i + 1]);
    let mut m = vec![0.0; n];
    // Eliminating the end second derivatives through the not-a-knot relations
    // M0 = 2 M1 - M2 and M(n-1) = 2 M(n-2) - M(n-3) decouples the rows next
    // to each end on a uniform grid.
    m[1] = rhs(1) / 6.0;
    m[n - 2] = rhs(n - 2) / 6.0;
    let inner = n.saturating_sub(4);
    if inner > 0 {
        // Thomas algorithm on diag 4, off-diagonals 1, for M2..M(n-3).
        let mut cp = vec![0.0; inner];
        let mut dp = vec![0.0; inner];
        for k in 0..inner {
            let i = k + 2;
            let mut r = rhs(i);
            if k == 0 {
                r -= m[1];
            }
            if k == inner - 1 {
                r -= m[n - 2];
            }
            let (sub, prev_c, prev_d) = if k == 0 { (0.0, 0.0, 0.0) } else { (1.0, cp[k - 1], dp[k - 1]) };
            let denom = 4.0 - sub * prev_c;
            cp[k] = 1.0 / denom;
            dp[k] = (r - sub * prev_d) / denom;
        }
        for k in (0..inner).rev() {
            let next = if k + 1 < inner { m[k + 3] } else { 0.0 };
            m[k + 2] = dp[k] - cp[k] * next;
        }
    }
    m[0] = 2.0 * m[1] - m[2];
    m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
    m
}

/// Applies the 1-D fit along `axis` of a row-major scalar array.
fn fit_along(src: &[f64], shape: &[usize], axis: usize, h: f64) -> Vec<f64> {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; src.len()];
    let mut line = vec![0.0; n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (i, v) in line.iter_mut().enumerate() {
                *v = src[base + i * stride];
            }
            let m = not_a_knot_second_derivatives(&line, h);
            for (i, v) in m.into_iter().enumerate() {
                out[base + i * stride] = v;
            }
        }
    }
    out
}

/// Per-axis cell location and basis weights at a point.
#[derive(Debug, Clone, Copy)]
struct AxisWeights {
    cell: usize,
    /// Weights on `(v_i, v_{i+1})` and on `(M_i, M_{i+1})`.
    wv: [f64; 2],
    wm: [f64; 2],
    /// x-derivatives of the same.
    dv: [f64; 2],
    dm: [f64; 2],
    /// Distance beyond the box, zero inside.
    outside: f64,
}

/// Fitted cubic spline of every component of a [`GridField`].
#[derive(Debug, Clone)]
pub struct SplineInterpolant {
    dim: usize,
    shape: [usize; MAX_DIM],
    lo: Point,
    hi: Point,
    h: f64,
    components: usize,
    /// Coefficients per node, per component: 2 in 1-D, 4 in 2-D.
    per_comp: usize,
    coef: Vec<f64>,
    policy: Extrapolation,
}

impl SplineInterpolant {
    pub fn fit(grid: &SpaceTimeGrid, field: &GridField, policy: Extrapolation) -> Result<Self> {
        let dim = grid.dim();
        for (axis, &n) in field.shape.iter().enumerate() {
            if n < 4 {
                return Err(Error::TooFewNodes { axis, nodes: n });
            }
        }
        assert_eq!(field.shape, grid.nodes, "field does not live on this grid");
        let nodes = field.node_count();
        let comps = field.components;
        let per_comp = if dim == 1 { 2 } else { 4 };
        let mut coef = vec![0.0; nodes * comps * per_comp];
        let h = grid.dx;
        for c in 0..comps {
            let v: Vec<f64> = (0..nodes).map(|n| field.values[n * comps + c]).collect();
            let planes: Vec<Vec<f64>> = if dim == 1 {
                let mx = fit_along(&v, &field.shape, 0, h);
                vec![v, mx]
            } else {
                let mx = fit_along(&v, &field.shape, 0, h);
                let my = fit_along(&v, &field.shape, 1, h);
                let mxy = fit_along(&my, &field.shape, 0, h);
                vec![v, mx, my, mxy]
            };
            for (k, plane) in planes.iter().enumerate() {
                for n in 0..nodes {
                    coef[(n * comps + c) * per_comp + k] = plane[n];
                }
            }
        }
        let mut shape = [1; MAX_DIM];
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for a in 0..dim {
            shape[a] = grid.nodes[a];
            lo[a] = grid.lo[a];
            hi[a] = grid.hi[a];
        }
        Ok(Self {
            dim,
            shape,
            lo,
            hi,
            h,
            components: comps,
            per_comp,
            coef,
            policy,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    fn axis_weights(&self, axis: usize, x: f64) -> AxisWeights {
        let (lo, hi, h) = (self.lo[axis], self.hi[axis], self.h);
        let (p, outside) = if x < lo {
            (lo, x - lo)
        } else if x > hi {
            (hi, x - hi)
        } else {
            (x, 0.0)
        };
        let n = self.shape[axis];
        let cell = (((p - lo) / h).floor().max(0.0) as usize).min(n - 2);
        let x_right = lo + (cell + 1) as f64 * h;
        let a = ((x_right - p) / h).clamp(0.0, 1.0);
        let b = 1.0 - a;
        let h2 = h * h / 6.0;
        AxisWeights {
            cell,
            wv: [a, b],
            wm: [(a * a * a - a) * h2, (b * b * b - b) * h2],
            dv: [-1.0 / h, 1.0 / h],
            dm: [-(3.0 * a * a - 1.0) * h / 6.0, (3.0 * b * b - 1.0) * h / 6.0],
            outside,
        }
    }

    /// Evaluates every component at `x` into `out`.
    pub fn eval_into(&self, x: &Point, out: &mut [f64]) {
        debug_assert!(out.len() >= self.components);
        let linear = self.policy == Extrapolation::LinearBoundary;
        let comps = self.components;
        let pc = self.per_comp;
        if self.dim == 1 {
            let w = self.axis_weights(0, x[0]);
            let i = w.cell;
            let slope = linear && w.outside != 0.0;
            for (c, o) in out.iter_mut().enumerate().take(comps) {
                let k0 = (i * comps + c) * pc;
                let k1 = ((i + 1) * comps + c) * pc;
                let (v0, m0, v1, m1) = (self.coef[k0], self.coef[k0 + 1], self.coef[k1], self.coef[k1 + 1]);
                let mut s = w.wv[0] * v0 + w.wv[1] * v1 + w.wm[0] * m0 + w.wm[1] * m1;
                if slope {
                    let ds = w.dv[0] * v0 + w.dv[1] * v1 + w.dm[0] * m0 + w.dm[1] * m1;
                    s += ds * w.outside;
                }
                *o = s;
            }
            return;
        }

        let wx = self.axis_weights(0, x[0]);
        let wy = self.axis_weights(1, x[1]);
        let slope_x = linear && wx.outside != 0.0;
        let slope_y = linear && wy.outside != 0.0;
        let ny = self.shape[1];
        for (c, o) in out.iter_mut().enumerate().take(comps) {
            let mut s = 0.0;
            let mut gx = 0.0;
            let mut gy = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let node = (wx.cell + a) * ny + wy.cell + b;
                    let k = (node * comps + c) * pc;
                    let (v, mx, my, mxy) = (self.coef[k], self.coef[k + 1], self.coef[k + 2], self.coef[k + 3]);
                    s += wx.wv[a] * (wy.wv[b] * v + wy.wm[b] * my) + wx.wm[a] * (wy.wv[b] * mx + wy.wm[b] * mxy);
                    if slope_x {
                        gx += wx.dv[a] * (wy.wv[b] * v + wy.wm[b] * my) + wx.dm[a] * (wy.wv[b] * mx + wy.wm[b] * mxy);
                    }
                    if slope_y {
                        gy += wx.wv[a] * (wy.dv[b] * v + wy.dm[b] * my) + wx.wm[a] * (wy.dv[b] * mx + wy.dm[b] * mxy);
                    }
                }
            }
            *o = s + gx * wx.outside + gy * wy.outside;
        }
    }

    /// First component at `x`.
    pub fn eval(&self, x: &Point) -> f64 {
        let mut out = [0.0; 1 + MAX_DIM];
        self.eval_into(x, &mut out[..self.components]);
        out[0]
    }
}
