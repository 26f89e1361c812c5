use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use evpinn_core::geometry::rk4_advect;
use evpinn_core::lm::{damped_step, LmConfig};
use evpinn_core::net::{JetSpec, Mlp};
use evpinn_core::ntk::gram;
use evpinn_core::linalg::symmetric_eigenvalues;
use evpinn_core::residuals::{ModelKind, PinnProblem, ResidualOptions, ResidualSystem};
use evpinn_core::sampling::{InterfacePlacement, SamplePlan, TrainingSets};
use evpinn_core::{Benchmark, ExtensionKind, ProblemSpec};

fn ex1_system(counts: [usize; 4]) -> (ProblemSpec, ResidualSystem) {
    let p = ProblemSpec::benchmark(Benchmark::Ex1);
    let ls = p.analytic_level_set().unwrap();
    let motion = p.rigid_motion().unwrap();
    let sets =
        TrainingSets::generate(&p.domain, p.t_end, &SamplePlan::new(counts, 0), &ls, &InterfacePlacement::Rigid(&motion))
            .unwrap();
    let opts = ResidualOptions::new(ModelKind::Extended(ExtensionKind::AbsLevelSet));
    let sys = ResidualSystem::build(&p, &ls, &sets, &opts).unwrap();
    (p, sys)
}

fn jets(c: &mut Criterion) {
    let net = Mlp::init(&[4, 32, 32, 32, 1], 0).unwrap();
    let x = [0.1, -0.2, 0.5, 0.3];
    c.bench_function("jet_first_order", |b| b.iter(|| net.jet(black_box(&x), &JetSpec::first()).unwrap()));
    let spec = JetSpec::second(&[0, 1, 3]);
    c.bench_function("jet_second_order", |b| b.iter(|| net.jet(black_box(&x), &spec).unwrap()));
}

fn assembly(c: &mut Criterion) {
    let (_, sys) = ex1_system([500, 100, 100, 50]);
    let net = Mlp::init(&[4, 32, 32, 32, 1], 0).unwrap();
    c.bench_function("residual_jacobian_750_rows", |b| b.iter(|| sys.residuals_and_jacobian(black_box(&net)).unwrap()));
}

fn lm_step(c: &mut Criterion) {
    let (_, sys) = ex1_system([500, 100, 100, 50]);
    let net = Mlp::init(&[4, 16, 16, 1], 0).unwrap();
    let problem = PinnProblem::new(&sys, &net).unwrap();
    let cfg = LmConfig::default();
    c.bench_function("lm_step_normal_equations", |b| {
        b.iter(|| damped_step(&problem, black_box(net.params()), 1e-3, &cfg).unwrap())
    });
    let wide = Mlp::init(&[4, 64, 64, 1], 0).unwrap();
    let problem = PinnProblem::new(&sys, &wide).unwrap();
    c.bench_function("lm_step_push_through", |b| {
        b.iter(|| damped_step(&problem, black_box(wide.params()), 1e-3, &cfg).unwrap())
    });
}

fn kernels(c: &mut Criterion) {
    let (_, sys) = ex1_system([200, 50, 50, 50]);
    let net = Mlp::init(&[4, 64, 1], 0).unwrap();
    let (_, jac) = sys.raw_residuals_and_jacobian(&net).unwrap();
    let (m, p) = (sys.row_count(), net.param_count());
    c.bench_function("gram_350_rows", |b| b.iter(|| gram(black_box(&jac), m, p).unwrap()));
    let k = gram(&jac, m, p).unwrap();
    c.bench_function("eigenvalues_350", |b| b.iter(|| symmetric_eigenvalues(black_box(&k)).unwrap()));
}

fn advection(c: &mut Criterion) {
    let p = ProblemSpec::benchmark(Benchmark::Ex4);
    let v = |x: &[f64], t: f64| p.velocity(x, t);
    c.bench_function("rk4_vortex_1000_steps", |b| b.iter(|| rk4_advect(&v, black_box(&[0.5, 0.75]), 0.0, 1.0, 1000).unwrap()));
}

criterion_group!(benches, jets, assembly, lm_step, kernels, advection);
criterion_main!(benches);
