#![allow(dead_code)]

use std::f64::consts::PI;

use fbsde::model::{FbsdeProblem, Point};

/// `int x^q exp(-x^2) dx`; zero for odd `q`.
pub fn gaussian_moment(q: u32) -> f64 {
    if q % 2 == 1 {
        0.0
    } else {
        gaussian_abs_moment(q)
    }
}

/// `int |x|^q exp(-x^2) dx = Gamma((q+1)/2)`.
pub fn gaussian_abs_moment(q: u32) -> f64 {
    // Gamma(k + 1/2) and Gamma(k + 1) by their recurrences.
    let mut g = if q % 2 == 0 { PI.sqrt() } else { 1.0 };
    let mut a = if q % 2 == 0 { 0.5 } else { 1.0 };
    let target = (q as f64 + 1.0) / 2.0;
    while a < target {
        g *= a;
        a += 1.0;
    }
    g
}

const H: f64 = 1e-3;

fn d1(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x - 2.0 * H) - 8.0 * f(x - H) + 8.0 * f(x + H) - f(x + 2.0 * H)) / (12.0 * H)
}

fn d2(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (-f(x - 2.0 * H) + 16.0 * f(x - H) - 30.0 * f(x) + 16.0 * f(x + H) - f(x + 2.0 * H)) / (12.0 * H * H)
}

fn shifted(x: &Point, i: usize, v: f64) -> Point {
    let mut y = *x;
    y[i] = v;
    y
}

/// `|-dY/dt - b.grad Y - 1/2 tr(sigma sigma^T D^2 Y) - f(t, x, Y, Z)|` for the
/// analytic pair, with derivatives by five-point differences. Also checks
/// `Z = grad Y sigma` and returns the larger mismatch.
pub fn generator_residual(p: &FbsdeProblem, t: f64, x: &Point) -> f64 {
    let a = p.analytic.as_ref().expect("analytic pair");
    let u = |t: f64, x: &Point| (a.y)(t, x);
    let d = p.dim;
    let ut = d1(|s| u(s, x), t);
    let sigma = p.sigma(t, x);
    let b = p.b(t, x);
    let mut grad = [0.0; 2];
    let mut lu = 0.0;
    for i in 0..d {
        grad[i] = d1(|v| u(t, &shifted(x, i, v)), x[i]);
        lu += b[i] * grad[i];
        for j in 0..d {
            let aij: f64 = (0..d).map(|k| sigma[i][k] * sigma[j][k]).sum();
            if aij == 0.0 {
                continue;
            }
            let dij = if i == j {
                d2(|v| u(t, &shifted(x, i, v)), x[i])
            } else {
                d1(|v| d1(|w| u(t, &shifted(&shifted(x, i, v), j, w)), x[j]), x[i])
            };
            lu += 0.5 * aij * dij;
        }
    }
    let z = (a.z)(t, x);
    let f = p.generator(t, x, u(t, x), &z);
    let mut worst = (-ut - lu - f).abs();
    for k in 0..d {
        let zk: f64 = (0..d).map(|i| grad[i] * sigma[i][k]).sum();
        worst = worst.max((zk - z[k]).abs());
    }
    worst
}
