//! One-step forward discretisations `X^{n+1} = X^n + psi(t_n, X^n, dt, dW)`.
//!
//! In one dimension all three variants are available for general
//! coefficients. In two dimensions only Euler handles a state-dependent
//! diffusion; Milstein and the weak order-2 scheme require a constant
//! diffusion matrix, where the Milstein correction vanishes and the weak
//! order-2 scheme keeps only its drift terms.

use crate::error::{Error, Result};
use crate::model::{linalg, FbsdeProblem, ForwardScheme, Mat, Point, MAX_DIM};

#[derive(Clone, Copy)]
pub struct ForwardStep<'a> {
    pub variant: ForwardScheme,
    problem: &'a FbsdeProblem,
}

fn missing(scheme: ForwardScheme, what: &'static str) -> Error {
    Error::MissingDerivative {
        scheme: scheme.label(),
        what,
    }
}

impl<'a> ForwardStep<'a> {
    pub fn new(variant: ForwardScheme, problem: &'a FbsdeProblem) -> Result<Self> {
        let p = problem;
        let one_d = p.dim == 1;
        match variant {
            ForwardScheme::Euler => {}
            ForwardScheme::Milstein => {
                if !p.constant_diffusion {
                    if !one_d {
                        return Err(missing(variant, "a constant diffusion in more than one dimension"));
                    }
                    if p.diffusion_dx.is_none() {
                        return Err(missing(variant, "sigma_x"));
                    }
                }
            }
            ForwardScheme::WeakTaylor2 => {
                if !p.constant_diffusion {
                    if !one_d {
                        return Err(missing(variant, "a constant diffusion in more than one dimension"));
                    }
                    if p.diffusion_dx.is_none() {
                        return Err(missing(variant, "sigma_x"));
                    }
                    if p.diffusion_dt.is_none() {
                        return Err(missing(variant, "sigma_t"));
                    }
                    if p.diffusion_dxx.is_none() {
                        return Err(missing(variant, "sigma_xx"));
                    }
                }
                if p.drift_dx.is_none() {
                    return Err(missing(variant, "b_x"));
                }
                if p.drift_dt.is_none() {
                    return Err(missing(variant, "b_t"));
                }
                if p.drift_dxx.is_none() {
                    return Err(missing(variant, "b_xx"));
                }
            }
        }
        Ok(Self { variant, problem })
    }

    pub fn problem(&self) -> &'a FbsdeProblem {
        self.problem
    }

    /// `(sigma, sigma_x)` in one dimension.
    fn sigma_and_slope(&self, t: f64, x: &Point) -> (f64, f64) {
        let p = self.problem;
        let s = p.sigma(t, x)[0][0];
        let sx = if p.constant_diffusion {
            0.0
        } else {
            p.diffusion_dx.as_ref().expect("checked in new")(t, x)[0][0][0]
        };
        (s, sx)
    }

    /// Coefficient of `dt * dW / 2` in the weak order-2 scheme (1-D):
    /// `sigma_t + sigma b_x + b sigma_x + sigma^2 sigma_xx / 2`.
    fn wt2_mixed_1d(&self, t: f64, x: &Point, b: f64, s: f64, sx: f64) -> f64 {
        let p = self.problem;
        let bx = p.drift_dx.as_ref().expect("checked in new")(t, x)[0][0];
        if p.constant_diffusion {
            return s * bx;
        }
        let st = p.diffusion_dt.as_ref().expect("checked in new")(t, x)[0][0];
        let sxx = p.diffusion_dxx.as_ref().expect("checked in new")(t, x);
        st + s * bx + b * sx + 0.5 * s * s * sxx
    }

    /// `b_t + b_x b + (1/2) sigma sigma^T : b_xx`, the drift's generator image.
    fn wt2_drift_term(&self, t: f64, x: &Point, b: &Point, sigma: &Mat) -> Point {
        let p = self.problem;
        let d = p.dim;
        let bt = p.drift_dt.as_ref().expect("checked in new")(t, x);
        let bx = p.drift_dx.as_ref().expect("checked in new")(t, x);
        let bxx = p.drift_dxx.as_ref().expect("checked in new")(t, x);
        let st = linalg::mat_mul(sigma, &transpose(sigma, d), d);
        let bxb = linalg::mat_vec(&bx, b, d);
        let mut out = [0.0; MAX_DIM];
        for i in 0..d {
            let mut trace = 0.0;
            for k in 0..d {
                for l in 0..d {
                    trace += st[k][l] * bxx[i][k][l];
                }
            }
            out[i] = bt[i] + bxb[i] + 0.5 * trace;
        }
        out
    }

    /// The scheme increment.
    pub fn psi(&self, t: f64, x: &Point, dt: f64, dw: &Point) -> Point {
        let p = self.problem;
        let d = p.dim;
        let b = p.b(t, x);
        let sigma = p.sigma(t, x);
        let sdw = linalg::mat_vec(&sigma, dw, d);
        let mut inc = [0.0; MAX_DIM];
        for i in 0..d {
            inc[i] = b[i] * dt + sdw[i];
        }
        match self.variant {
            ForwardScheme::Euler => {}
            ForwardScheme::Milstein => {
                if d == 1 && !p.constant_diffusion {
                    let (s, sx) = self.sigma_and_slope(t, x);
                    inc[0] += 0.5 * s * sx * (dw[0] * dw[0] - dt);
                }
            }
            ForwardScheme::WeakTaylor2 => {
                let drift_term = self.wt2_drift_term(t, x, &b, &sigma);
                if d == 1 {
                    let (s, sx) = self.sigma_and_slope(t, x);
                    let mixed = self.wt2_mixed_1d(t, x, b[0], s, sx);
                    inc[0] += 0.5 * s * sx * (dw[0] * dw[0] - dt)
                        + 0.5 * mixed * dt * dw[0]
                        + 0.5 * drift_term[0] * dt * dt;
                } else {
                    // Additive noise: mixed term is b_x sigma dW.
                    let bx = p.drift_dx.as_ref().expect("checked in new")(t, x);
                    let mixed = linalg::mat_vec(&linalg::mat_mul(&bx, &sigma, d), dw, d);
                    for i in 0..d {
                        inc[i] += 0.5 * mixed[i] * dt + 0.5 * drift_term[i] * dt * dt;
                    }
                }
            }
        }
        inc
    }

    /// `int_{t_n}^{t_{n+1}} D_t X^{n+1} dt`; the derivative is constant on the
    /// step, so this is its value times `dt`.
    pub fn malliavin_integral(&self, t: f64, x: &Point, dt: f64, dw: &Point) -> Mat {
        let p = self.problem;
        let d = p.dim;
        let sigma = p.sigma(t, x);
        let mut m = sigma;
        match self.variant {
            ForwardScheme::Euler => {}
            ForwardScheme::Milstein => {
                if d == 1 && !p.constant_diffusion {
                    let (s, sx) = self.sigma_and_slope(t, x);
                    m[0][0] += s * sx * dw[0];
                }
            }
            ForwardScheme::WeakTaylor2 => {
                if d == 1 {
                    let (s, sx) = self.sigma_and_slope(t, x);
                    let b = p.b(t, x)[0];
                    m[0][0] += s * sx * dw[0] + 0.5 * dt * self.wt2_mixed_1d(t, x, b, s, sx);
                } else {
                    let bx = p.drift_dx.as_ref().expect("checked in new")(t, x);
                    let bxs = linalg::mat_mul(&bx, &sigma, d);
                    for i in 0..d {
                        for k in 0..d {
                            m[i][k] += 0.5 * dt * bxs[i][k];
                        }
                    }
                }
            }
        }
        for row in m.iter_mut().take(d) {
            for v in row.iter_mut().take(d) {
                *v *= dt;
            }
        }
        m
    }
}

fn transpose(m: &Mat, d: usize) -> Mat {
    let mut t = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for k in 0..d {
            t[i][k] = m[k][i];
        }
    }
    t
}

/// `A = I + b_x dt + sum_j (d sigma_j / dx) dW_j`, with `sigma_j` the `j`-th
/// column of sigma.
pub fn amatrix(problem: &FbsdeProblem, t: f64, x: &Point, dt: f64, dw: &Point) -> Result<Mat> {
    let d = problem.dim;
    let bx = problem
        .drift_dx
        .as_ref()
        .ok_or(Error::MissingDerivative {
            scheme: "S1",
            what: "b_x",
        })?(t, x);
    let mut a = linalg::identity(d);
    for i in 0..d {
        for k in 0..d {
            a[i][k] += bx[i][k] * dt;
        }
    }
    if !problem.constant_diffusion {
        let sx = problem
            .diffusion_dx
            .as_ref()
            .ok_or(Error::MissingDerivative {
                scheme: "S1",
                what: "sigma_x",
            })?(t, x);
        for (j, col_jac) in sx.iter().enumerate().take(d) {
            for i in 0..d {
                for k in 0..d {
                    a[i][k] += col_jac[i][k] * dw[j];
                }
            }
        }
    }
    Ok(a)
}
