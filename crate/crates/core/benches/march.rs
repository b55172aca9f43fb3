use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fbsde::backward::march;
use fbsde::model::{Execution, ForwardScheme, Scheme, SchemeConfig, SpaceTimeGrid};
use fbsde::problems::{self, HestonParams};

fn execution_modes() -> Vec<(&'static str, Execution)> {
    let mut v = vec![("sequential", Execution::Sequential)];
    if fbsde::par::parallel_available() {
        v.push(("parallel", Execution::Parallel));
    }
    v
}

fn heston(c: &mut Criterion) {
    let p = problems::heston_problem(HestonParams::default(), problems::heston_default_box()).unwrap();
    let mut group = c.benchmark_group("heston_wt2");
    for n in [32usize, 128] {
        let grid = SpaceTimeGrid::new(p.horizon, n, &p.default_box, 2).unwrap();
        for (label, exec) in execution_modes() {
            let cfg = SchemeConfig {
                execution: exec,
                ..SchemeConfig::new(Scheme::S1, ForwardScheme::WeakTaylor2)
            };
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| b.iter(|| march(&p, &grid, &cfg).unwrap()));
        }
    }
    group.finish();
}

fn sine2d(c: &mut Criterion) {
    let p = problems::sine2d_problem(problems::SINE2D_SIGMA, problems::SINE2D_X0, None).unwrap();
    let mut group = c.benchmark_group("sine2d");
    group.sample_size(10);
    let n = 16;
    let grid = SpaceTimeGrid::new(p.horizon, n, &p.default_box, 2).unwrap();
    for scheme in [Scheme::S1, Scheme::Cn] {
        for (label, exec) in execution_modes() {
            let cfg = SchemeConfig {
                execution: exec,
                ..SchemeConfig::new(scheme, ForwardScheme::Euler)
            };
            let id = BenchmarkId::new(format!("{}/{label}", scheme.label()), n);
            group.bench_function(id, |b| b.iter(|| march(&p, &grid, &cfg).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, heston, sine2d);
criterion_main!(benches);
