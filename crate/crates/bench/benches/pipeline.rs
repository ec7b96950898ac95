use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mclose_core::closure::{close_system, Scheme, DEFAULT_DELTA};
use mclose_core::expr::parse_model;
use mclose_core::momentgen::build_open_system;
use mclose_core::sim::{euler_maruyama, initial_moments, integrate_closed, McConfig};
use mclose_core::models;

fn generate(c: &mut Criterion) {
    let vdp = parse_model(models::VAN_DER_POL).unwrap();
    let pend = parse_model(models::PENDULUM).unwrap();
    c.bench_function("open system vdp order 4", |b| b.iter(|| build_open_system(black_box(&vdp), 4).unwrap()));
    c.bench_function("open system pendulum order 4", |b| b.iter(|| build_open_system(black_box(&pend), 4).unwrap()));
}

fn close(c: &mut Criterion) {
    for (name, src) in [("vdp", models::VAN_DER_POL), ("pendulum", models::PENDULUM)] {
        let open = build_open_system(&parse_model(src).unwrap(), 3).unwrap();
        c.bench_function(&format!("dm closure {name} order 3"), |b| {
            b.iter(|| close_system(black_box(open.clone()), Scheme::DerivativeMatching, DEFAULT_DELTA).unwrap())
        });
    }
}

fn integrate(c: &mut Criterion) {
    let model = parse_model(models::PENDULUM).unwrap();
    let closed = close_system(build_open_system(&model, 2).unwrap(), Scheme::DerivativeMatching, DEFAULT_DELTA).unwrap();
    let nu0 = initial_moments(model.space(), &[0.3, 0.0], closed.open().basis());
    c.bench_function("rk4 pendulum 10k steps", |b| {
        b.iter(|| integrate_closed(&closed, black_box(&nu0), 0.0, 1.0, 1e-4, 1000).unwrap())
    });
}

fn monte_carlo(c: &mut Criterion) {
    let model = parse_model(models::PENDULUM).unwrap();
    let basis = model.space().enumerate_upto(2).unwrap();
    let cfg = McConfig {
        t0: 0.0,
        t1: 0.1,
        dt: 1e-3,
        paths: 1000,
        seed: 42,
        save_every: 10,
    };
    let mut group = c.benchmark_group("monte carlo");
    group.sample_size(10);
    group.bench_function("pendulum 1000 paths x 100 steps", |b| {
        b.iter(|| euler_maruyama(&model, black_box(&[0.3, 0.0]), &cfg, &basis).unwrap())
    });
    group.finish();
}

criterion_group!(benches, generate, close, integrate, monte_carlo);
criterion_main!(benches);
