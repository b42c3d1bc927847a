use campanato_core::dirichlet::{carleson_functional, poisson_extension, HeightGrid};
use campanato_core::exec;
use campanato_core::grid::{sample, BallFamily, Boundary, GridDomain};
use campanato_core::norms::{campanato_operator, morrey_norm, NormParams};
use campanato_core::spectral::{OperatorEngine, OperatorSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const MODES: [(&str, bool); 2] = [("sequential", false), ("parallel", true)];

fn ball_scan(c: &mut Criterion) {
    let d = GridDomain::new(2, 4.0, 256, Boundary::Periodic).unwrap();
    let f = sample(&d, |x| (x[0] * x[0] + x[1] * x[1] + 0.01).powf(-0.2)).unwrap();
    let fam = BallFamily::default_for(&d);
    let params = NormParams::new(2.0, 1.0, 2.0, 2).unwrap();
    let mut g = c.benchmark_group("morrey_2d_256");
    g.sample_size(10);
    for (name, par) in MODES {
        exec::set_parallel(par);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| morrey_norm(black_box(&f), &params, &fam).unwrap())
        });
    }
    g.finish();
}

fn operator_campanato(c: &mut Criterion) {
    let d = GridDomain::new(2, 4.0, 128, Boundary::Periodic).unwrap();
    let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
    let f = sample(&d, |x| (x[0].sin() * x[1].cos()).exp()).unwrap();
    let fam = BallFamily::default_for(&d);
    let params = NormParams::new(2.0, 1.0, 2.0, 2).unwrap();
    let mut g = c.benchmark_group("campanato_operator_2d_128");
    g.sample_size(10);
    for (name, par) in MODES {
        exec::set_parallel(par);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| campanato_operator(black_box(&f), &e, &params, &fam).unwrap())
        });
    }
    g.finish();
}

fn carleson(c: &mut Criterion) {
    let d = GridDomain::new(1, 8.0, 1024, Boundary::Periodic).unwrap();
    let e = OperatorEngine::build(OperatorSpec::laplacian(), &d).unwrap();
    let f = sample(&d, |x| if x[0].abs() < 2.0 { 1.0 } else { 0.0 }).unwrap();
    let hg = HeightGrid::full_range(&d, 200).unwrap();
    let fam = BallFamily::default_for(&d);
    let params = NormParams::new(2.0, 0.5, 1.0, 1).unwrap();
    let mut g = c.benchmark_group("extension_carleson_1d_1024");
    g.sample_size(10);
    for (name, par) in MODES {
        exec::set_parallel(par);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let u = poisson_extension(&e, black_box(&f), &hg).unwrap();
                carleson_functional(&u, &params, &fam).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, ball_scan, operator_campanato, carleson);
criterion_main!(benches);
