//! Gauss-Hermite rules and the one-step conditional expectations
//! `E[g(X^{n+1}) | X^n = x]` and `E[g(X^{n+1}) dW^T | X^n = x]`.
//!
//! With physicists' weight `exp(-a^2)`, a Brownian increment over `dt` is
//! written `dW = sqrt(2 dt) a`, and each tensor weight is scaled by
//! `pi^(-d/2)` so the weights sum to one.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::forward::ForwardStep;
use crate::model::{Point, MAX_DIM};

pub const MAX_ORDER: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermiteRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `sum_j w_j f(a_j)`, approximating `int f(a) exp(-a^2) da`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&a, &w)| w * f(a)).sum()
    }
}

/// Orthonormal Hermite recurrence at `x`: returns `(p_n(x), p_{n-1}(x))`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 0.0;
    let mut p = PI.powf(-0.25);
    for j in 1..=n {
        let jf = j as f64;
        let next = x * (2.0 / jf).sqrt() * p - ((jf - 1.0) / jf).sqrt() * p_prev;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Gauss-Hermite rule with `order` points.
///
/// Nodes come from the eigenvalues of the symmetric Jacobi matrix and are
/// then polished by Newton steps on the orthonormal recurrence, which also
/// yields the weights `2 / p_n'(a)^2`.
pub fn gh_rule(order: usize) -> Result<GaussHermiteRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::OrderOutOfRange(order));
    }
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let n = order as f64;
    let mut weights = Vec::with_capacity(order);
    for a in nodes.iter_mut() {
        for _ in 0..8 {
            let (p, p_prev) = orthonormal_hermite(order, *a);
            let dp = (2.0 * n).sqrt() * p_prev;
            let step = p / dp;
            *a -= step;
            if step.abs() <= 1e-16 * a.abs().max(1.0) {
                break;
            }
        }
        let (_, p_prev) = orthonormal_hermite(order, *a);
        let dp = (2.0 * n).sqrt() * p_prev;
        weights.push(2.0 / (dp * dp));
    }
    // Exact symmetry.
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let a = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -a;
        nodes[j] = a;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    Ok(GaussHermiteRule { nodes, weights })
}

/// Tensor-product rule over `dim` axes with probability weights.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub dim: usize,
    /// `(weight, a)` with weights summing to one.
    pub points: Vec<(f64, Point)>,
}

impl TensorRule {
    pub fn new(rule: &GaussHermiteRule, dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        let scale = PI.powf(-0.5);
        let m = rule.order();
        let total = m.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rest = flat;
            let mut w = 1.0;
            let mut a = [0.0; MAX_DIM];
            for axis in (0..dim).rev() {
                let j = rest % m;
                rest /= m;
                a[axis] = rule.nodes[j];
                w *= rule.weights[j] * scale;
            }
            points.push((w, a));
        }
        Self { dim, points }
    }

    pub fn with_order(order: usize, dim: usize) -> Result<Self> {
        Ok(Self::new(&gh_rule(order)?, dim))
    }
}

/// One realisation of the forward step at a quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub weight: f64,
    pub dw: Point,
    pub x_next: Point,
}

/// Quadrature realisations of `X^{n+1} = x + psi(t, x, dt, dW)`.
pub fn samples<'a>(
    fwd: &'a ForwardStep<'a>,
    rule: &'a TensorRule,
    t: f64,
    x: Point,
    dt: f64,
) -> impl Iterator<Item = Sample> + 'a {
    let root = (2.0 * dt).sqrt();
    let d = rule.dim;
    rule.points.iter().map(move |&(weight, a)| {
        let mut dw = [0.0; MAX_DIM];
        for c in 0..d {
            dw[c] = root * a[c];
        }
        let inc = fwd.psi(t, &x, dt, &dw);
        let mut x_next = x;
        for c in 0..d {
            x_next[c] += inc[c];
        }
        Sample { weight, dw, x_next }
    })
}

fn check_finite<const M: usize>(v: &[f64; M], at: &Point, d: usize) -> Result<()> {
    if v.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteSample {
            point: at[..d].to_vec(),
        })
    }
}

/// `E[g(X^{n+1}) | X^n = x]` for a vector-valued `g`.
pub fn cond_expect<const M: usize>(
    g: impl Fn(&Point) -> [f64; M],
    x: Point,
    t: f64,
    dt: f64,
    fwd: &ForwardStep<'_>,
    rule: &TensorRule,
) -> Result<[f64; M]> {
    let mut acc = [0.0; M];
    for s in samples(fwd, rule, t, x, dt) {
        let v = g(&s.x_next);
        check_finite(&v, &s.x_next, rule.dim)?;
        for (a, gv) in acc.iter_mut().zip(v) {
            *a += s.weight * gv;
        }
    }
    Ok(acc)
}

/// `E[g(X^{n+1}) dW^T | X^n = x]`; row `i` holds component `i` of `g`.
pub fn cond_expect_dw<const M: usize>(
    g: impl Fn(&Point) -> [f64; M],
    x: Point,
    t: f64,
    dt: f64,
    fwd: &ForwardStep<'_>,
    rule: &TensorRule,
) -> Result<[Point; M]> {
    let d = rule.dim;
    let mut acc = [[0.0; MAX_DIM]; M];
    for s in samples(fwd, rule, t, x, dt) {
        let v = g(&s.x_next);
        check_finite(&v, &s.x_next, d)?;
        for (row, gv) in acc.iter_mut().zip(v) {
            for c in 0..d {
                row[c] += s.weight * gv * s.dw[c];
            }
        }
    }
    Ok(acc)
}
