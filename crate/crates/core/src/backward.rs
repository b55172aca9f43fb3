//! Backward time marching for `(Y^n, Z^n)`.
//!
//! At each level the `Z` update uses only level `n+1` data and is explicit.
//! The `Y` update is then implicit in one generator part: on even levels
//! `f1` is taken at `(t_n, x, Y^n, Z^n)` and `f2` at level `n+1`, on odd
//! levels the roles swap. The trapezoidal reference scheme treats the full
//! generator half implicitly and half explicitly. Implicit equations are
//! solved by Picard sweeps over the whole grid; one sweep updates every
//! node and convergence is measured in the max norm.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::forward::ForwardStep;
use crate::interp::SplineInterpolant;
use crate::model::{
    linalg, validate, FbsdeProblem, ForwardScheme, GeneratorPart, GridField, LevelSolution, Point, Scheme,
    SchemeConfig, SpaceTimeGrid, ZUpdate, MAX_DIM,
};
use crate::par;
use crate::quadrature::{samples, TensorRule};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub picard_iters: usize,
    /// Max-norm change of the last sweep.
    pub residual: f64,
    pub wallclock: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveStats {
    pub picard_total: usize,
    /// Indexed by level `n = 0..N-1`.
    pub levels: Vec<StepStats>,
    pub wallclock: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(level: usize) -> Self {
        if level % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// `Y^N = Phi(x)`, `Z^N = Phi_x(x) sigma(T, x)` on every node.
pub fn terminal_fields(problem: &FbsdeProblem, grid: &SpaceTimeGrid) -> LevelSolution {
    let d = problem.dim;
    let t = grid.horizon;
    let y = GridField::from_fn(grid, 1, |x, out| out[0] = (problem.terminal)(x));
    let z = GridField::from_fn(grid, d, |x, out| {
        let zrow = linalg::row_mul(&(problem.terminal_dx)(x), &problem.sigma(t, x), d);
        out.copy_from_slice(&zrow[..d]);
    });
    LevelSolution {
        level: grid.n_steps,
        y,
        z,
    }
}

/// Spline of `(Y, Z_1, .., Z_d)` at level `n+1`.
#[derive(Debug, Clone)]
pub struct NextLevel {
    spline: SplineInterpolant,
    dim: usize,
}

impl NextLevel {
    pub fn fit(grid: &SpaceTimeGrid, sol: &LevelSolution, cfg: &SchemeConfig) -> Result<Self> {
        let d = grid.dim();
        let comps = 1 + d;
        let mut joint = GridField::zeros(grid, comps);
        for n in 0..grid.node_count() {
            joint.values[n * comps] = sol.y.values[n];
            joint.values[n * comps + 1..(n + 1) * comps].copy_from_slice(sol.z.node_values(n));
        }
        Ok(Self {
            spline: SplineInterpolant::fit(grid, &joint, cfg.extrapolation)?,
            dim: d,
        })
    }

    /// `(Y^{n+1}(x), Z^{n+1}(x))`.
    #[inline]
    pub fn eval(&self, x: &Point) -> (f64, Point) {
        let mut out = [0.0; 1 + MAX_DIM];
        self.spline.eval_into(x, &mut out[..1 + self.dim]);
        let mut z = [0.0; MAX_DIM];
        z[..self.dim].copy_from_slice(&out[1..1 + self.dim]);
        (out[0], z)
    }
}

/// Conditional expectations at one node, all from one quadrature pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeExpectations {
    /// `E[Y^{n+1}]`
    pub ey: f64,
    /// `E[Y^{n+1} dW^T]`
    pub ey_dw: Point,
    /// `E[f(t_{n+1}, X^{n+1}, Y^{n+1}, Z^{n+1}) dW^T]`
    pub ef_dw: Point,
    /// `E[f1(..)]` and `E[f2(..)]` at level `n+1`.
    pub ef1: f64,
    pub ef2: f64,
    /// `E[Z^{n+1} - Z^{n+1} (sigma^{n+1})^{-1} A^n sigma^n]` or
    /// `E[Z^{n+1} ((sigma^{n+1})^{-1} int D_t X^{n+1} dt - dt I)]`.
    pub z_term: Point,
}

/// Which generator part is treated implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplicitPart {
    F1,
    F2,
    Full,
}

/// `Y = explicit + weight * f_part(t_n, x, Y, z_n)`.
#[derive(Debug, Clone, Copy)]
pub struct ImplicitStep {
    pub x: Point,
    pub z: Point,
    pub explicit: f64,
    pub weight: f64,
    pub part: ImplicitPart,
    /// `E[Y^{n+1}]`, used by the predictor.
    pub ey: f64,
}

/// Data shared by all nodes of one backward step `n+1 -> n`.
pub struct LevelContext<'a> {
    pub problem: &'a FbsdeProblem,
    pub fwd: ForwardStep<'a>,
    pub rule: &'a TensorRule,
    pub cfg: &'a SchemeConfig,
    pub level: usize,
    pub t: f64,
    pub t_next: f64,
    pub dt: f64,
    pub next: &'a NextLevel,
    mal_is_sigma_dt: bool,
}

impl<'a> LevelContext<'a> {
    pub fn new(
        problem: &'a FbsdeProblem,
        fwd: ForwardStep<'a>,
        rule: &'a TensorRule,
        cfg: &'a SchemeConfig,
        grid: &SpaceTimeGrid,
        level: usize,
        next: &'a NextLevel,
    ) -> Self {
        Self {
            problem,
            fwd,
            rule,
            cfg,
            level,
            t: grid.time(level),
            t_next: grid.time(level + 1),
            dt: grid.dt(),
            next,
            mal_is_sigma_dt: problem.constant_diffusion && cfg.forward != ForwardScheme::WeakTaylor2,
        }
    }

    fn z_mode(&self) -> ZUpdate {
        match self.cfg.scheme {
            Scheme::S1 => ZUpdate::AMatrix,
            Scheme::S2 => ZUpdate::Malliavin,
            Scheme::Cn => self.cfg.cn_z_update,
        }
    }

    fn part(&self, which: ImplicitPart) -> PartRef<'_> {
        match which {
            ImplicitPart::F1 => PartRef::One(&self.problem.f1),
            ImplicitPart::F2 => PartRef::One(&self.problem.f2),
            ImplicitPart::Full => PartRef::Both(&self.problem.f1, &self.problem.f2),
        }
    }

    /// One quadrature pass at node `x`.
    pub fn expectations(&self, x: &Point, mode: ZUpdate) -> Result<NodeExpectations> {
        let p = self.problem;
        let d = p.dim;
        let dt = self.dt;
        let sigma_n = p.sigma(self.t, x);
        // A^n = I + b_x dt + sum_j (d sigma_j/dx) dW_j; the x-dependent parts
        // are fixed per node.
        let jac = if mode == ZUpdate::AMatrix {
            let zero = [0.0; MAX_DIM];
            let bx = crate::forward::amatrix(p, self.t, x, dt, &zero)?;
            let sx = if p.constant_diffusion {
                None
            } else {
                p.diffusion_dx.as_ref().map(|f| f(self.t, x))
            };
            Some((bx, sx))
        } else {
            None
        };

        let mut e = NodeExpectations::default();
        for s in samples(&self.fwd, self.rule, self.t, *x, dt) {
            let (y1, z1) = self.next.eval(&s.x_next);
            let f1 = p.f1.call(self.t_next, &s.x_next, y1, &z1);
            let f2 = p.f2.call(self.t_next, &s.x_next, y1, &z1);
            let f = f1 + f2;
            if !(y1.is_finite() && f.is_finite()) {
                return Err(Error::NonFiniteSample {
                    point: s.x_next[..d].to_vec(),
                });
            }
            let sigma_inv = linalg::inverse(&p.sigma(self.t_next, &s.x_next), d).ok_or_else(|| {
                Error::SingularDiffusion {
                    t: self.t_next,
                    x: s.x_next[..d].to_vec(),
                }
            })?;
            let w = s.weight;
            e.ey += w * y1;
            e.ef1 += w * f1;
            e.ef2 += w * f2;
            for c in 0..d {
                e.ey_dw[c] += w * y1 * s.dw[c];
                e.ef_dw[c] += w * f * s.dw[c];
            }
            let term = match (&jac, mode) {
                (Some((a_base, sx)), ZUpdate::AMatrix) => {
                    let mut a = *a_base;
                    if let Some(sx) = sx {
                        for (j, col) in sx.iter().enumerate().take(d) {
                            for i in 0..d {
                                for k in 0..d {
                                    a[i][k] += col[i][k] * s.dw[j];
                                }
                            }
                        }
                    }
                    let m = linalg::mat_mul(&linalg::mat_mul(&sigma_inv, &a, d), &sigma_n, d);
                    let zm = linalg::row_mul(&z1, &m, d);
                    let mut t = [0.0; MAX_DIM];
                    for c in 0..d {
                        t[c] = z1[c] - zm[c];
                    }
                    t
                }
                // sigma^{-1} sigma dt - dt I vanishes for constant sigma.
                _ if self.mal_is_sigma_dt => [0.0; MAX_DIM],
                _ => {
                    let mal = self.fwd.malliavin_integral(self.t, x, dt, &s.dw);
                    let mut m = linalg::mat_mul(&sigma_inv, &mal, d);
                    for (c, row) in m.iter_mut().enumerate().take(d) {
                        row[c] -= dt;
                    }
                    linalg::row_mul(&z1, &m, d)
                }
            };
            for c in 0..d {
                e.z_term[c] += w * term[c];
            }
        }
        Ok(e)
    }

    fn z_from(&self, e: &NodeExpectations, mode: ZUpdate) -> Point {
        let d = self.problem.dim;
        let dt = self.dt;
        let lead = match mode {
            ZUpdate::AMatrix => -0.5 * dt,
            ZUpdate::Malliavin => 1.0,
        };
        let mut z = [0.0; MAX_DIM];
        for c in 0..d {
            z[c] = (lead * e.z_term[c] + e.ey_dw[c] + dt * e.ef_dw[c]) / dt;
        }
        z
    }

    /// `Z^n(x)` through the `A^n` matrix form.
    pub fn z_update_s1(&self, x: &Point) -> Result<Point> {
        let e = self.expectations(x, ZUpdate::AMatrix)?;
        Ok(self.z_from(&e, ZUpdate::AMatrix))
    }

    /// `Z^n(x)` through the Malliavin-derivative form.
    pub fn z_update_s2(&self, x: &Point) -> Result<Point> {
        let e = self.expectations(x, ZUpdate::Malliavin)?;
        Ok(self.z_from(&e, ZUpdate::Malliavin))
    }

    /// Sets up the implicit `Y` equation of the splitting schemes.
    pub fn splitting_step(&self, x: &Point, parity: Parity, z: Point, e: &NodeExpectations) -> ImplicitStep {
        let half = self.cfg.scheme == Scheme::S2 && self.cfg.s2_verbatim_weights;
        let weight = if half { 0.5 * self.dt } else { self.dt };
        let (part, explicit_mean) = match parity {
            Parity::Even => (ImplicitPart::F1, e.ef2),
            Parity::Odd => (ImplicitPart::F2, e.ef1),
        };
        ImplicitStep {
            x: *x,
            z,
            explicit: e.ey + weight * explicit_mean,
            weight,
            part,
            ey: e.ey,
        }
    }

    /// Sets up the implicit trapezoidal `Y` equation.
    pub fn trapezoidal_step(&self, x: &Point, z: Point, e: &NodeExpectations) -> ImplicitStep {
        let weight = 0.5 * self.dt;
        ImplicitStep {
            x: *x,
            z,
            explicit: e.ey + weight * (e.ef1 + e.ef2),
            weight,
            part: ImplicitPart::Full,
            ey: e.ey,
        }
    }

    /// Right-hand side of the implicit equation at `y`.
    #[inline]
    pub fn apply(&self, step: &ImplicitStep, y: f64) -> f64 {
        step.explicit + step.weight * self.part(step.part).call(self.t, &step.x, y, &step.z)
    }

    /// Picard seed: the exact root when the implicit part is affine in `y`
    /// and `affine_direct` is set, otherwise the explicit predictor.
    pub fn seed(&self, step: &ImplicitStep) -> f64 {
        let part = self.part(step.part);
        if self.cfg.affine_direct && part.affine() {
            let beta = part.call(self.t, &step.x, 0.0, &step.z);
            let alpha = part.call(self.t, &step.x, 1.0, &step.z) - beta;
            let denom = 1.0 - step.weight * alpha;
            if denom != 0.0 {
                return (step.explicit + step.weight * beta) / denom;
            }
        }
        self.apply(step, step.ey)
    }

    /// Node-local Picard solve.
    pub fn solve_node(&self, step: &ImplicitStep) -> Result<(f64, StepStats)> {
        let start = Instant::now();
        let mut y = self.seed(step);
        let mut prev_res = f64::INFINITY;
        let mut stats = StepStats::default();
        for k in 1..=self.cfg.picard_max {
            let next = self.apply(step, y);
            let res = (next - y).abs();
            y = next;
            stats.picard_iters = k;
            stats.residual = res;
            if !res.is_finite() || !y.is_finite() {
                return Err(self.diverged(res, k));
            }
            if res <= self.cfg.picard_tol {
                break;
            }
            if k == self.cfg.picard_max && res > prev_res {
                return Err(self.diverged(res, k));
            }
            prev_res = res;
        }
        stats.wallclock = start.elapsed().as_secs_f64();
        Ok((y, stats))
    }

    fn diverged(&self, residual: f64, iters: usize) -> Error {
        Error::PicardDiverged {
            level: self.level,
            residual,
            iters,
        }
    }

    /// `Y^n(x)` of the splitting schemes with `z_n` already computed.
    pub fn y_update(&self, x: &Point, parity: Parity, z_n: Point) -> Result<(f64, StepStats)> {
        let e = self.expectations(x, self.z_mode())?;
        self.solve_node(&self.splitting_step(x, parity, z_n, &e))
    }

    /// `Y^n(x)` of the trapezoidal reference scheme.
    pub fn y_update_cn(&self, x: &Point, z_n: Point) -> Result<(f64, StepStats)> {
        let e = self.expectations(x, self.z_mode())?;
        self.solve_node(&self.trapezoidal_step(x, z_n, &e))
    }

    /// `Z^n` and the implicit `Y` equation at one node.
    fn prepare_node(&self, x: &Point) -> Result<ImplicitStep> {
        let mode = self.z_mode();
        let e = self.expectations(x, mode)?;
        let z = self.z_from(&e, mode);
        Ok(match self.cfg.scheme {
            Scheme::S1 | Scheme::S2 => self.splitting_step(x, Parity::of(self.level), z, &e),
            Scheme::Cn => self.trapezoidal_step(x, z, &e),
        })
    }

    /// Full level update with grid-wide Picard sweeps.
    pub fn solve_level(&self, grid: &SpaceTimeGrid) -> Result<(LevelSolution, StepStats)> {
        let start = Instant::now();
        let exec = self.cfg.execution;
        let count = grid.node_count();
        let d = self.problem.dim;
        let steps = par::try_map_range(count, exec, |n| {
            self.prepare_node(&grid.node(n)).map_err(|e| Error::AtNode {
                level: self.level,
                node: n,
                source: Box::new(e),
            })
        })?;
        let mut y: Vec<f64> = par::map_range(count, exec, |n| self.seed(&steps[n]));
        let mut stats = StepStats::default();
        let mut prev_res = f64::INFINITY;
        for k in 1..=self.cfg.picard_max {
            let next: Vec<f64> = par::map_range(count, exec, |n| self.apply(&steps[n], y[n]));
            let res = next
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, |m: f64, r| if r.is_nan() || m.is_nan() { f64::NAN } else { m.max(r) });
            y = next;
            stats.picard_iters = k;
            stats.residual = res;
            if !res.is_finite() {
                return Err(self.diverged(res, k));
            }
            if res <= self.cfg.picard_tol {
                break;
            }
            if k == self.cfg.picard_max {
                if res > prev_res {
                    return Err(self.diverged(res, k));
                }
                log::warn!(
                    "level {}: Picard stopped at cap {} with residual {:e}",
                    self.level,
                    k,
                    res
                );
            }
            prev_res = res;
        }
        let mut z = GridField::zeros(grid, d);
        for (n, step) in steps.iter().enumerate() {
            z.values[n * d..(n + 1) * d].copy_from_slice(&step.z[..d]);
        }
        let sol = LevelSolution {
            level: self.level,
            y: GridField {
                shape: grid.nodes.clone(),
                components: 1,
                values: y,
            },
            z,
        };
        stats.wallclock = start.elapsed().as_secs_f64();
        Ok((sol, stats))
    }
}

enum PartRef<'a> {
    One(&'a GeneratorPart),
    Both(&'a GeneratorPart, &'a GeneratorPart),
}

impl PartRef<'_> {
    #[inline]
    fn call(&self, t: f64, x: &Point, y: f64, z: &Point) -> f64 {
        match self {
            PartRef::One(f) => f.call(t, x, y, z),
            PartRef::Both(f, g) => f.call(t, x, y, z) + g.call(t, x, y, z),
        }
    }

    fn affine(&self) -> bool {
        match self {
            PartRef::One(f) => f.affine_in_y,
            PartRef::Both(f, g) => f.affine_in_y && g.affine_in_y,
        }
    }
}

/// Result of a full backward sweep.
#[derive(Debug, Clone)]
pub struct MarchOutput {
    pub solution: LevelSolution,
    pub stats: SolveStats,
}

/// Runs the configured scheme from `T` back to `t = 0`.
pub fn march(problem: &FbsdeProblem, grid: &SpaceTimeGrid, cfg: &SchemeConfig) -> Result<MarchOutput> {
    march_with(problem, grid, cfg, |_| {})
}

/// As [`march`], calling `observe` with every level solution from `N` down to 0.
pub fn march_with(
    problem: &FbsdeProblem,
    grid: &SpaceTimeGrid,
    cfg: &SchemeConfig,
    mut observe: impl FnMut(&LevelSolution),
) -> Result<MarchOutput> {
    let start = Instant::now();
    validate(problem, grid, cfg)?;
    let fwd = ForwardStep::new(cfg.forward, problem)?;
    let rule = TensorRule::with_order(cfg.gh_order, problem.dim)?;
    let mut current = terminal_fields(problem, grid);
    observe(&current);
    let mut levels = vec![StepStats::default(); grid.n_steps];
    for level in (0..grid.n_steps).rev() {
        let next = NextLevel::fit(grid, &current, cfg)?;
        let ctx = LevelContext::new(problem, fwd, &rule, cfg, grid, level, &next);
        let (sol, stats) = ctx.solve_level(grid)?;
        levels[level] = stats;
        current = sol;
        observe(&current);
    }
    let stats = SolveStats {
        picard_total: levels.iter().map(|s| s.picard_iters).sum(),
        levels,
        wallclock: start.elapsed().as_secs_f64(),
    };
    Ok(MarchOutput {
        solution: current,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoxDomain;
    use crate::problems::{affine_sde, linear_problem};
    use std::sync::Arc;

    fn grid_for(p: &FbsdeProblem, n: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(p.horizon, n, &p.default_box, 2).unwrap()
    }

    #[test]
    fn terminal_constant_gives_zero_z() {
        let mut p = affine_sde(1, [0.0; 2], [[0.7, 0.0], [0.0, 0.0]]);
        p.terminal = Arc::new(|_| 1.0);
        let g = grid_for(&p, 8);
        let t = terminal_fields(&p, &g);
        assert!(t.y.values.iter().all(|&v| v == 1.0));
        assert!(t.z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn terminal_linear_gives_c_sigma() {
        let mut p = affine_sde(2, [0.0; 2], [[0.5, 0.1], [0.0, 0.3]]);
        p.terminal = Arc::new(|x| 2.0 * x[0] - x[1]);
        p.terminal_dx = Arc::new(|_| [2.0, -1.0]);
        let g = grid_for(&p, 4);
        let t = terminal_fields(&p, &g);
        for n in 0..g.node_count() {
            let z = t.z.node_values(n);
            assert_eq!(z, &[1.0, 0.2 - 0.3]);
        }
    }

    #[test]
    fn zero_generator_constant_terminal() {
        let mut p = affine_sde(1, [0.3, 0.0], [[0.5, 0.0], [0.0, 0.0]]);
        p.terminal = Arc::new(|_| 1.0);
        for scheme in [Scheme::S1, Scheme::S2, Scheme::Cn] {
            let g = grid_for(&p, 8);
            let out = march(&p, &g, &SchemeConfig::new(scheme, ForwardScheme::Euler)).unwrap();
            assert!(out.solution.y.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
            assert!(out.solution.z.values.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn linear_terminal_preserved_every_level() {
        let p = linear_problem();
        let g = grid_for(&p, 8);
        for scheme in [Scheme::S1, Scheme::S2, Scheme::Cn] {
            let cfg = SchemeConfig::new(scheme, ForwardScheme::Euler);
            let out = march_with(&p, &g, &cfg, |sol| {
                for n in 0..g.node_count() {
                    let x = g.node(n);
                    assert!((sol.y.values[n] - (2.0 * x[0] + 1.0)).abs() < 1e-10);
                    assert!((sol.z.values[n] - 2.0).abs() < 1e-10);
                }
            })
            .unwrap();
            assert_eq!(out.stats.picard_total, 8);
        }
    }

    #[test]
    fn linear_fixed_point_picard_rate() {
        // f1(y) = y: even-step fixed point is explicit / (1 - dt).
        let mut p = affine_sde(1, [0.0; 2], [[1.0, 0.0], [0.0, 0.0]]);
        p.f1 = crate::model::GeneratorPart::affine(|_, _, y, _| y);
        p.terminal = Arc::new(|x| x[0].sin());
        p.terminal_dx = Arc::new(|x| [x[0].cos(), 0.0]);
        let g = grid_for(&p, 8);
        let cfg = SchemeConfig {
            affine_direct: false,
            ..SchemeConfig::new(Scheme::S1, ForwardScheme::Euler)
        };
        let rule = TensorRule::with_order(8, 1).unwrap();
        let fwd = ForwardStep::new(cfg.forward, &p).unwrap();
        let next = NextLevel::fit(&g, &terminal_fields(&p, &g), &cfg).unwrap();
        let ctx = LevelContext::new(&p, fwd, &rule, &cfg, &g, 6, &next);
        let x = [0.4, 0.0];
        let e = ctx.expectations(&x, ZUpdate::AMatrix).unwrap();
        let step = ctx.splitting_step(&x, Parity::Even, [0.0; 2], &e);
        let exact = step.explicit / (1.0 - g.dt());
        let (y, stats) = ctx.solve_node(&step).unwrap();
        assert!((y - exact).abs() < 1e-12);
        // Error contracts by dt per sweep.
        let mut it = ctx.seed(&step);
        let mut err = (it - exact).abs();
        for _ in 0..4 {
            it = ctx.apply(&step, it);
            let e2 = (it - exact).abs();
            assert!((e2 / err - g.dt()).abs() < 1e-6);
            err = e2;
        }
        assert!(stats.picard_iters > 5);
    }

    #[test]
    fn trapezoidal_linear_fixed_point() {
        // f(y) = y, dt = 0.5, E-part 1, explicit mean f = 1:
        // Y = 1 + 0.25 Y + 0.25 -> 5/3.
        let mut p = affine_sde(1, [0.0; 2], [[1.0, 0.0], [0.0, 0.0]]);
        p.f1 = crate::model::GeneratorPart::new(|_, _, y, _| y);
        p.terminal = Arc::new(|_| 1.0);
        let b = BoxDomain::interval(-3.0, 3.0).unwrap();
        let g = SpaceTimeGrid::new(1.0, 2, &b, 2).unwrap();
        let cfg = SchemeConfig::new(Scheme::Cn, ForwardScheme::Euler);
        let rule = TensorRule::with_order(8, 1).unwrap();
        let fwd = ForwardStep::new(cfg.forward, &p).unwrap();
        let next = NextLevel::fit(&g, &terminal_fields(&p, &g), &cfg).unwrap();
        let ctx = LevelContext::new(&p, fwd, &rule, &cfg, &g, 1, &next);
        let (y, stats) = ctx.y_update_cn(&[0.2, 0.0], [0.0; 2]).unwrap();
        assert!((y - 5.0 / 3.0).abs() < 1e-12);
        assert!(stats.residual <= cfg.picard_tol);
    }

    #[test]
    fn singular_sigma_rejected() {
        let p = affine_sde(2, [0.0; 2], [[1.0, 1.0], [1.0, 1.0]]);
        let g = grid_for(&p, 4);
        let r = march(&p, &g, &SchemeConfig::default());
        assert!(matches!(r, Err(Error::SingularDiffusion { .. })));
    }

    #[test]
    fn sequential_and_parallel_identical() {
        let p = crate::problems::sine2d_problem(0.2, [0.5, 0.5], None).unwrap();
        let g = grid_for(&p, 4);
        let mut cfg = SchemeConfig::new(Scheme::S1, ForwardScheme::Euler);
        cfg.gh_order = 4;
        let a = march(&p, &g, &cfg).unwrap();
        cfg.execution = crate::model::Execution::Sequential;
        let b = march(&p, &g, &cfg).unwrap();
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.stats.picard_total, b.stats.picard_total);
    }
}
