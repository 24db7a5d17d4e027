use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slabmom::closure::{hessian, moments_of};
use slabmom::optimizer::solve_dual;
use slabmom::standard::StandardScheme;
use slabmom::transformed::{TransformedConfig, TransformedScheme};
use slabmom::OptimizerConfig;
use slabmom_bench::{Fixture, BASES};

fn optimizer(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_dual");
    let config = OptimizerConfig::default();
    for kind in BASES {
        let fx = Fixture::new(kind, 8);
        for peak in [1.0, 20.0] {
            let u = fx.peaked_moments(peak);
            g.bench_with_input(BenchmarkId::new(kind.to_string(), peak), &u, |b, u| {
                b.iter(|| solve_dual(&fx.basis, black_box(u), &config, None).unwrap())
            });
        }
    }
    g.finish();
}

fn closure(c: &mut Criterion) {
    let mut g = c.benchmark_group("closure");
    for kind in BASES {
        let fx = Fixture::new(kind, 8);
        let u = fx.peaked_moments(5.0);
        let alpha = solve_dual(&fx.basis, &u, &OptimizerConfig::default(), None).unwrap().alpha;
        g.bench_function(BenchmarkId::new("hessian", kind), |b| b.iter(|| hessian(&fx.basis, black_box(&alpha)).unwrap()));
        g.bench_function(BenchmarkId::new("moments", kind), |b| b.iter(|| moments_of(&fx.basis, black_box(&alpha)).unwrap()));
    }
    g.finish();
}

fn right_hand_sides(c: &mut Criterion) {
    let mut g = c.benchmark_group("rhs");
    g.sample_size(20);
    for kind in BASES {
        let fx = Fixture::new(kind, 120);
        let scheme = TransformedScheme::new(&fx.basis, &fx.disc, TransformedConfig::default()).unwrap();
        g.bench_function(BenchmarkId::new("transformed", kind), |b| {
            b.iter(|| scheme.alpha_update(black_box(&fx.alpha)).unwrap())
        });
        let mut standard = StandardScheme::new(&fx.basis, &fx.disc, OptimizerConfig::default());
        g.bench_function(BenchmarkId::new("standard", kind), |b| {
            b.iter(|| {
                let mut u = fx.u.clone();
                standard.hyperbolic_rhs(&mut u).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, optimizer, closure, right_hand_sides);
criterion_main!(benches);
