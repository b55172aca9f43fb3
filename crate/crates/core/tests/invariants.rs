mod common;

use std::sync::Arc;

use fbsde::backward::march;
use fbsde::harness::{fit_rate, parse_config};
use fbsde::interp::SplineInterpolant;
use fbsde::model::{
    spatial_step, BoxDomain, Execution, Extrapolation, ForwardScheme, GridField, Scheme, SchemeConfig, SpaceTimeGrid,
    SPLINE_ORDER,
};
use fbsde::problems::{self, HestonParams};
use fbsde::quadrature::gh_rule;
use proptest::prelude::*;

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::S1), Just(Scheme::S2), Just(Scheme::Cn)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gh_rule_shape(m in 1usize..=64) {
        let r = gh_rule(m).unwrap();
        let sum: f64 = r.weights.iter().sum();
        prop_assert!((sum / std::f64::consts::PI.sqrt() - 1.0).abs() < 1e-12);
        prop_assert!(r.weights.iter().all(|&w| w > 0.0));
        prop_assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        for (a, b) in r.nodes.iter().zip(r.nodes.iter().rev()) {
            prop_assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_ignores_scale(c in 1e-6f64..1e6, k in 0.5f64..3.0, e0 in 1e-6f64..1.0) {
        let dts = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
        let errs: Vec<f64> = dts.iter().map(|d: &f64| e0 * d.powf(k)).collect();
        let scaled: Vec<f64> = errs.iter().map(|e| e * c).collect();
        let a = fit_rate(&errs, &dts).unwrap();
        let b = fit_rate(&scaled, &dts).unwrap();
        prop_assert!((a - k).abs() < 1e-9);
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn step_law_and_lattice(n in 1usize..200, p in 1u32..=2, lo in -3.0f64..0.0, w in 0.5f64..4.0) {
        let n = 2 * n;
        let b = BoxDomain::interval(lo, lo + w).unwrap();
        let Ok(g) = SpaceTimeGrid::new(1.0, n, &b, p) else { return Ok(()); };
        prop_assert_eq!(g.dx.to_bits(), spatial_step(g.dt(), p, SPLINE_ORDER).to_bits());
        prop_assert!(g.hi[0] >= lo + w);
        prop_assert_eq!(g.coordinate(0, g.nodes[0] - 1), g.hi[0]);
    }

    #[test]
    fn grid_field_round_trip(i in 0usize..1000, j in 0usize..1000, v in -1e3f64..1e3) {
        let b = BoxDomain::new(vec![0.0, -1.0], vec![1.0, 1.5]).unwrap();
        let g = SpaceTimeGrid::new(1.0, 16, &b, 2).unwrap();
        let idx = [i % g.nodes[0], j % g.nodes[1]];
        let mut f = GridField::zeros(&g, 3);
        f.set(&idx, 2, v);
        prop_assert_eq!(f.get(&idx, 2), v);
        prop_assert_eq!(g.multi_index(g.flat_index(&idx)), idx);
    }

    #[test]
    fn spline_reproduces_cubics(c in prop::array::uniform4(-2.0f64..2.0), x in 0.0f64..1.0) {
        let b = BoxDomain::interval(-1.0, 2.0).unwrap();
        let g = SpaceTimeGrid::new(1.0, 4, &b, 2).unwrap();
        let poly = |x: f64| c[0] + x * (c[1] + x * (c[2] + x * c[3]));
        let f = GridField::from_fn(&g, 1, |p, o| o[0] = poly(p[0]));
        let s = SplineInterpolant::fit(&g, &f, Extrapolation::LinearBoundary).unwrap();
        let t = g.lo[0] + x * (g.hi[0] - g.lo[0]);
        prop_assert!((s.eval(&[t, 0.0]) - poly(t)).abs() < 1e-10);
    }

    #[test]
    fn config_keys_normalised(key in "[a-z]{1,6}(_[a-z]{1,6})?", val in "[a-z0-9.]{1,8}") {
        let m = parse_config(&format!("{key} = {val}\n")).unwrap();
        prop_assert_eq!(m.get(&key.replace('_', "-")), Some(&val));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Constant coefficients, zero generator and affine terminal value:
    /// `Y(t, x) = c0 + c1 (x + b (T - t))`, `Z = c1 sigma`.
    #[test]
    fn affine_data_solved_exactly(
        s in scheme(),
        b in -0.5f64..0.5,
        sigma in 0.1f64..1.0,
        c0 in -1.0f64..1.0,
        c1 in -2.0f64..2.0,
        half_n in 1usize..8,
    ) {
        let mut p = problems::affine_sde(1, [b, 0.0], [[sigma, 0.0], [0.0, 0.0]]);
        p.terminal = Arc::new(move |x| c0 + c1 * x[0]);
        p.terminal_dx = Arc::new(move |_| [c1, 0.0]);
        let g = SpaceTimeGrid::new(1.0, 2 * half_n, &p.default_box, 2).unwrap();
        let out = march(&p, &g, &SchemeConfig::new(s, ForwardScheme::Euler)).unwrap();
        for n in 0..g.node_count() {
            let x = g.node(n)[0];
            prop_assert!((out.solution.y.values[n] - (c0 + c1 * (x + b))).abs() < 1e-10);
            prop_assert!((out.solution.z.values[n] - c1 * sigma).abs() < 1e-10);
        }
    }

    #[test]
    fn execution_mode_does_not_change_results(s in scheme(), half_n in 1usize..5) {
        let p = problems::heston_problem(HestonParams::default(), problems::heston_default_box()).unwrap();
        let g = SpaceTimeGrid::new(1.0, 2 * half_n, &p.default_box, 2).unwrap();
        let mut cfg = SchemeConfig::new(s, ForwardScheme::WeakTaylor2);
        let a = march(&p, &g, &cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let b = march(&p, &g, &cfg).unwrap();
        prop_assert_eq!(a.solution, b.solution);
        prop_assert_eq!(a.stats.picard_total, b.stats.picard_total);
    }

    #[test]
    fn heston_chi_smooth(t in 0.0f64..0.999) {
        let params = HestonParams::default();
        let k = problems::heston_constants(&params).unwrap();
        let (a0, a1) = problems::heston_chi(t, &k, 1.0);
        let (b0, b1) = problems::heston_chi(t + 1e-3, &k, 1.0);
        prop_assert!((a0 - b0).abs() < 1e-2 && (a1 - b1).abs() < 1e-2);
    }

    #[test]
    fn analytic_pairs_satisfy_generator(t in 0.05f64..0.95, u in 0.1f64..0.9, v in 0.1f64..0.9) {
        let h = problems::heston_problem(HestonParams::default(), problems::heston_default_box()).unwrap();
        let x = [0.1 + 2.4 * u, 0.0];
        prop_assert!(common::generator_residual(&h, t, &x) < 1e-8);
        let s = problems::sine2d_problem(0.2, [0.5, 0.5], None).unwrap();
        let x = [-0.5 + 2.0 * u, -0.5 + 2.0 * v];
        prop_assert!(common::generator_residual(&s, t, &x) < 1e-8);
    }
}
