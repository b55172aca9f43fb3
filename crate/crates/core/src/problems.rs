//! Benchmark problems with closed-form solutions.
//!
//! * [`heston_problem`]: backward stochastic Riccati equation for the
//!   opportunity process of mean-variance hedging under a one-factor Heston
//!   variance, driven by a single Brownian motion `W = rho W1 + sqrt(1-rho^2) W2`.
//! * [`sine2d_problem`]: two-dimensional problem with generator `y + f2`.
//! * [`linear_problem`]: zero generator and affine terminal value.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{AnalyticSolution, BoxDomain, FbsdeProblem, GeneratorPart, Mat, Point, MAX_DIM};

const ZERO_MAT: Mat = [[0.0; MAX_DIM]; MAX_DIM];

/// Constant drift and diffusion, zero generator and zero terminal value, with
/// every coefficient derivative present (all zero). Fields are public, so
/// callers replace whatever they need.
pub fn affine_sde(dim: usize, drift: Point, sigma: Mat) -> FbsdeProblem {
    assert!((1..=MAX_DIM).contains(&dim));
    FbsdeProblem {
        name: "affine".into(),
        dim,
        horizon: 1.0,
        drift: Arc::new(move |_, _| drift),
        diffusion: Arc::new(move |_, _| sigma),
        drift_dx: Some(Arc::new(|_, _| ZERO_MAT)),
        diffusion_dx: Some(Arc::new(|_, _| [ZERO_MAT; MAX_DIM])),
        drift_dt: Some(Arc::new(|_, _| [0.0; MAX_DIM])),
        diffusion_dt: Some(Arc::new(|_, _| ZERO_MAT)),
        drift_dxx: Some(Arc::new(|_, _| [ZERO_MAT; MAX_DIM])),
        diffusion_dxx: Some(Arc::new(|_, _| 0.0)),
        constant_diffusion: true,
        f1: GeneratorPart::zero(),
        f2: GeneratorPart::zero(),
        terminal: Arc::new(|_| 0.0),
        terminal_dx: Arc::new(|_| [0.0; MAX_DIM]),
        analytic: None,
        default_box: BoxDomain::new(vec![-3.0; dim], vec![3.0; dim]).expect("valid box"),
        default_x0: [0.0; MAX_DIM],
    }
}

/// `d = 1`, `b = 0`, `sigma = 1`, `f = 0`, `Phi(x) = 2x + 1`; the solution is
/// `Y = 2x + 1`, `Z = 2`.
pub fn linear_problem() -> FbsdeProblem {
    let mut p = affine_sde(1, [0.0; MAX_DIM], [[1.0, 0.0], [0.0, 0.0]]);
    p.name = "linear".into();
    p.terminal = Arc::new(|x| 2.0 * x[0] + 1.0);
    p.terminal_dx = Arc::new(|_| [2.0, 0.0]);
    p.analytic = Some(AnalyticSolution {
        y: Arc::new(|_, x| 2.0 * x[0] + 1.0),
        z: Arc::new(|_, _| [2.0, 0.0]),
    });
    p.default_box = BoxDomain::interval(-3.0, 3.0).expect("valid box");
    p.default_x0 = [0.5, 0.0];
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for HestonParams {
    fn default() -> Self {
        Self {
            mu: 0.3,
            kappa: 0.5,
            theta: 0.8,
            sigma: 0.2,
            rho: 0.8,
            x0: 1.0,
            horizon: 1.0,
        }
    }
}

/// Constants of the closed-form Riccati solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub f: f64,
}

/// `A = -mu^2`, `B = -kappa - 2 rho sigma mu`, `C = sigma^2 (1 - 2 rho^2) / 2`,
/// `D = sqrt(B^2 - 4AC)`, `F = kappa theta`.
pub fn heston_constants(p: &HestonParams) -> Result<HestonConstants> {
    let a = -p.mu * p.mu;
    let b = -p.kappa - 2.0 * p.rho * p.sigma * p.mu;
    let c = 0.5 * p.sigma * p.sigma * (1.0 - 2.0 * p.rho * p.rho);
    if c.abs() < 1e-14 {
        return Err(Error::DegenerateParameters("C = 0"));
    }
    let d2 = b * b - 4.0 * a * c;
    if !(d2 > 0.0) {
        return Err(Error::DegenerateParameters("B^2 - 4AC <= 0"));
    }
    Ok(HestonConstants {
        a,
        b,
        c,
        d: d2.sqrt(),
        f: p.kappa * p.theta,
    })
}

fn validate_heston(p: &HestonParams) -> Result<()> {
    let positive = [p.mu, p.kappa, p.theta, p.sigma, p.x0, p.horizon];
    if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig("Heston mu, kappa, theta, sigma, x0, T must be positive".into()));
    }
    if !(-1.0..=1.0).contains(&p.rho) {
        return Err(Error::InvalidConfig(format!("rho = {} outside [-1, 1]", p.rho)));
    }
    if 2.0 * p.kappa * p.theta < p.sigma * p.sigma {
        return Err(Error::InvalidConfig("Feller condition 2 kappa theta >= sigma^2 violated".into()));
    }
    Ok(())
}

/// `(chi0(t), chi1(t))`, so that `Y(t, x) = exp(chi0(t) + chi1(t) x)`.
pub fn heston_chi(t: f64, k: &HestonConstants, horizon: f64) -> (f64, f64) {
    let tau = horizon - t;
    let (b, c, d) = (k.b, k.c, k.d);
    let em = (-d * tau / 2.0).exp();
    let ep = (d * tau / 2.0).exp();
    let den = (b + d) * em - (b - d) * ep;
    let num = (b + d) * em + (b - d) * ep;
    let chi0 = k.f * (-b / (2.0 * c) * tau - (den / (2.0 * d)).ln() / c);
    let chi1 = -b / (2.0 * c) + d / (2.0 * c) * num / den;
    (chi0, chi1)
}

/// Splits the single-driver `Z` into the components on the two original
/// Brownian motions.
pub fn heston_recover_components(z: f64, rho: f64) -> (f64, f64) {
    (rho * z, (1.0 - rho * rho).max(0.0).sqrt() * z)
}

/// Heston opportunity-process BSDE on `truncation` (must stay above zero).
///
/// `b(x) = kappa (theta - x)`, `sigma(x) = sigma sqrt(x)`,
/// `f1 = -y mu^2 x - 2 mu sqrt(x) rho z`, `f2 = -(rho z)^2 / y`, `Phi = 1`.
/// Every square root is taken at `max(x, lo)`, so quadrature points that
/// step below the box see the coefficients frozen at its lower face.
pub fn heston_problem(p: HestonParams, truncation: BoxDomain) -> Result<FbsdeProblem> {
    validate_heston(&p)?;
    let consts = heston_constants(&p)?;
    if truncation.dim() != 1 {
        return Err(Error::InvalidConfig("Heston problem is one-dimensional".into()));
    }
    let floor = truncation.lo[0];
    if floor <= 0.0 {
        return Err(Error::BoxTouchesZero(floor));
    }
    let HestonParams {
        mu,
        kappa,
        theta,
        sigma,
        rho,
        horizon,
        ..
    } = p;
    let sq = move |x: &Point| x[0].max(floor).sqrt();
    let chi = move |t: f64| heston_chi(t, &consts, horizon);

    Ok(FbsdeProblem {
        name: "heston".into(),
        dim: 1,
        horizon,
        drift: Arc::new(move |_, x| [kappa * (theta - x[0]), 0.0]),
        diffusion: Arc::new(move |_, x| [[sigma * sq(x), 0.0], [0.0, 0.0]]),
        drift_dx: Some(Arc::new(move |_, _| [[-kappa, 0.0], [0.0, 0.0]])),
        diffusion_dx: Some(Arc::new(move |_, x| {
            [[[0.5 * sigma / sq(x), 0.0], [0.0, 0.0]], ZERO_MAT]
        })),
        drift_dt: Some(Arc::new(|_, _| [0.0; MAX_DIM])),
        diffusion_dt: Some(Arc::new(|_, _| ZERO_MAT)),
        drift_dxx: Some(Arc::new(|_, _| [ZERO_MAT; MAX_DIM])),
        diffusion_dxx: Some(Arc::new(move |_, x| {
            let s = sq(x);
            -0.25 * sigma / (s * s * s)
        })),
        constant_diffusion: false,
        f1: GeneratorPart::affine(move |_, x, y, z| -y * mu * mu * x[0] - 2.0 * mu * sq(x) * rho * z[0]),
        f2: GeneratorPart::new(move |_, _, y, z| {
            let rz = rho * z[0];
            -rz * rz / y
        }),
        terminal: Arc::new(|_| 1.0),
        terminal_dx: Arc::new(|_| [0.0; MAX_DIM]),
        analytic: Some(AnalyticSolution {
            y: Arc::new(move |t, x| {
                let (c0, c1) = chi(t);
                (c0 + c1 * x[0]).exp()
            }),
            z: Arc::new(move |t, x| {
                let (c0, c1) = chi(t);
                let y = (c0 + c1 * x[0]).exp();
                [c1 * y * sigma * x[0].sqrt(), 0.0]
            }),
        }),
        default_box: truncation,
        default_x0: [p.x0, 0.0],
    })
}

/// Default truncation for the Heston problem.
pub fn heston_default_box() -> BoxDomain {
    BoxDomain::interval(0.1, 2.5).expect("valid box")
}

/// Two-dimensional problem with `X = X0 + sigma W`,
/// `f1(y) = y`, `f2 = (5/2) sigma^2 e^{-2t} y / (y^2 + (z s)^2)` with
/// `s = (3/sigma, -1/sigma)^T`, and `Phi(x) = e^{-T} sin(x1 + 2 x2)`.
pub fn sine2d_problem(sigma: f64, x0: Point, truncation: Option<BoxDomain>) -> Result<FbsdeProblem> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let horizon = 1.0;
    let truncation = match truncation {
        Some(b) if b.dim() != 2 => {
            return Err(Error::InvalidConfig("sine2d problem is two-dimensional".into()))
        }
        Some(b) => b,
        None => BoxDomain::around(&x0, 1.0)?,
    };
    let s_tilde = [3.0 / sigma, -1.0 / sigma];
    let mut p = affine_sde(2, [0.0; MAX_DIM], [[sigma, 0.0], [0.0, sigma]]);
    p.name = "sine2d".into();
    p.horizon = horizon;
    p.f1 = GeneratorPart::affine(|_, _, y, _| y);
    p.f2 = GeneratorPart::new(move |t, _, y, z| {
        let zs = z[0] * s_tilde[0] + z[1] * s_tilde[1];
        2.5 * sigma * sigma * (-2.0 * t).exp() * y / (y * y + zs * zs)
    });
    let decay = (-horizon).exp();
    p.terminal = Arc::new(move |x| decay * (x[0] + 2.0 * x[1]).sin());
    p.terminal_dx = Arc::new(move |x| {
        let c = decay * (x[0] + 2.0 * x[1]).cos();
        [c, 2.0 * c]
    });
    p.analytic = Some(AnalyticSolution {
        y: Arc::new(|t, x| (-t).exp() * (x[0] + 2.0 * x[1]).sin()),
        z: Arc::new(move |t, x| {
            let c = sigma * (-t).exp() * (x[0] + 2.0 * x[1]).cos();
            [c, 2.0 * c]
        }),
    });
    p.default_box = truncation;
    p.default_x0 = x0;
    Ok(p)
}

pub const SINE2D_SIGMA: f64 = 0.2;
pub const SINE2D_X0: Point = [0.5, 0.5];
