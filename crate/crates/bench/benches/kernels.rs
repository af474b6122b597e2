use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fibrot::cocycle::transfer_product;
use fibrot::duality::{build_dual, TrigPolynomial};
use fibrot::hyperbolicity::{uh_test, UhParams};
use fibrot::matkernel::real;
use fibrot::model::BlockTridiagonal;
use fibrot::rotation::rot_number;
use fibrot::{BasePoint, LagrangianFrame, OperatorModel};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn dual(degree: usize) -> OperatorModel {
    let mut coefficients = vec![real(0.0)];
    coefficients.extend((0..degree).map(|_| real(1.0)));
    build_dual(&TrigPolynomial::new(coefficients, GOLDEN).unwrap()).unwrap()
}

fn transfer_products(c: &mut Criterion) {
    let mut group = c.benchmark_group("transfer_product");
    for degree in [1, 2, 3] {
        let model = dual(degree);
        let theta = BasePoint::from(0.1);
        group.bench_with_input(BenchmarkId::from_parameter(degree), &model, |b, model| {
            b.iter(|| transfer_product(model, black_box(0.3), &theta, 1000).unwrap())
        });
    }
    group.finish();
}

fn sturm_count(c: &mut Criterion) {
    let mut group = c.benchmark_group("count_below");
    for sites in [1_000, 10_000] {
        let tri = BlockTridiagonal::new(&dual(2), &BasePoint::from(0.0), sites).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(sites), &tri, |b, tri| b.iter(|| tri.count_below(black_box(0.3))));
    }
    group.finish();
}

fn rotation(c: &mut Criterion) {
    let mut group = c.benchmark_group("rot_number");
    group.sample_size(20);
    for degree in [1, 2] {
        let model = dual(degree);
        let frame = LagrangianFrame::horizontal(degree);
        group.bench_with_input(BenchmarkId::from_parameter(degree), &model, |b, model| {
            b.iter(|| rot_number(model, black_box(0.3), &BasePoint::from(0.0), &frame, 1000).unwrap())
        });
    }
    group.finish();
}

fn hyperbolicity(c: &mut Criterion) {
    let mut group = c.benchmark_group("uh_test");
    group.sample_size(10);
    let params = UhParams { n_iter: 500, sample_count: 100, ..UhParams::default() };
    group.bench_function("free_outside", |b| b.iter(|| uh_test(&OperatorModel::free_laplacian(), black_box(3.0), &params).unwrap()));
    group.bench_function("dual2_gap", |b| b.iter(|| uh_test(&dual(2), black_box(0.3), &params).unwrap()));
    group.finish();
}

criterion_group!(benches, transfer_products, sturm_count, rotation, hyperbolicity);
criterion_main!(benches);
