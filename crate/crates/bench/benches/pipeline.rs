use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use synthpop::glm::{fit_logistic, FitOptions};
use synthpop::spline::spline_basis;
use synthpop::{fit_chain, sample_chain, FitData, ModelPack, RngContract, SampleOptions, SplineDef};
use synthpop_bench::{fitted, logistic_problem, population};

fn spline(c: &mut Criterion) {
    let ages: Vec<f64> = (0..100_000).map(|i| (i % 106) as f64).collect();
    let def = SplineDef::age();
    c.bench_function("age spline basis, 100k", |b| b.iter(|| spline_basis(&ages, &def).unwrap()));
}

fn solver(c: &mut Criterion) {
    let (x, y) = logistic_problem(100_000);
    c.bench_function("logistic fit, 100k x 3", |b| {
        b.iter(|| fit_logistic(&x, &y, FitOptions::default()).unwrap())
    });
}

fn chain(c: &mut Criterion) {
    let (spec, table) = population("paperlike-small", 20_000, 1);
    let config = spec.chain();
    c.bench_function("fit chain, paperlike-small 20k", |b| {
        b.iter(|| fit_chain(FitData::Table(&table), &config).unwrap())
    });
}

fn generate(c: &mut Criterion) {
    let (pack, seeds) = fitted("paperlike-small", 100_000);
    c.bench_function("sample chain, paperlike-small 100k", |b| {
        b.iter(|| sample_chain(&pack, &seeds, &RngContract::new(7), SampleOptions::default()).unwrap())
    });
    let bytes = pack.to_bytes().unwrap();
    c.bench_function("pack round trip", |b| {
        b.iter_batched(|| bytes.clone(), |v| ModelPack::from_bytes(&v).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = spline, solver, chain, generate
}
criterion_main!(benches);
