//! Criterion benchmarks for the closed-form bridge, the Sinkhorn recursion
//! and the grid oracle.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use gbridge::bridge::BridgeProblem;
use gbridge::oracle::{grid_ipf, GridSpec};
use gbridge::random::{random_invertible, random_spd, rng, standard_normal_vector};
use gbridge::riccati::fixed_points;
use gbridge::{
    run_sinkhorn, schrodinger_bridge, DMatrix, DVector, GaussianDist, KernelParams, RiccatiSpec,
    SpdMatrix,
};

const DIMS: [usize; 4] = [1, 4, 16, 64];

/// Random problem with eigenvalues bounded below by 0.3.
pub fn problem(seed: u64, d: usize) -> BridgeProblem {
    let mut g = rng(seed);
    let eta = GaussianDist::new(
        standard_normal_vector(&mut g, d),
        random_spd(&mut g, d, 0.3),
    )
    .unwrap();
    let mu = GaussianDist::new(
        standard_normal_vector(&mut g, d),
        random_spd(&mut g, d, 0.3),
    )
    .unwrap();
    let theta = KernelParams::new(
        standard_normal_vector(&mut g, d),
        random_invertible(&mut g, d),
        random_spd(&mut g, d, 0.3),
    )
    .unwrap();
    BridgeProblem::new(eta, mu, theta).unwrap()
}

fn riccati(c: &mut Criterion) {
    let mut group = c.benchmark_group("riccati_fixed_points");
    for d in DIMS {
        let spec = RiccatiSpec::new(random_spd(&mut rng(d as u64), d, 0.1));
        group.bench_with_input(BenchmarkId::from_parameter(d), &spec, |b, s| {
            b.iter(|| fixed_points(black_box(s)))
        });
    }
    group.finish();
}

fn bridge(c: &mut Criterion) {
    let mut group = c.benchmark_group("schrodinger_bridge");
    for d in DIMS {
        let p = problem(7, d);
        group.bench_with_input(BenchmarkId::from_parameter(d), &p, |b, p| {
            b.iter(|| schrodinger_bridge(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn_50_steps");
    for d in [1, 4, 16] {
        let p = problem(11, d);
        group.bench_with_input(BenchmarkId::from_parameter(d), &p, |b, p| {
            b.iter(|| run_sinkhorn(black_box(p), 50).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_ipf");
    group.sample_size(10);
    let g = |m: f64, s: f64| {
        GaussianDist::new(DVector::from_element(1, m), SpdMatrix::scalar(s).unwrap()).unwrap()
    };
    let theta = KernelParams::new(
        DVector::from_element(1, 0.1),
        DMatrix::from_element(1, 1, -0.9),
        SpdMatrix::scalar(1.3).unwrap(),
    )
    .unwrap();
    let p = BridgeProblem::new(g(0.3, 0.8), g(-0.5, 1.1), theta).unwrap();
    for n in [201, 601] {
        let grid = GridSpec::new(-8.0, 8.0, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, g| {
            b.iter(|| grid_ipf(black_box(&p), *g, 100_000, 1e-10).unwrap())
        });
    }
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    riccati(c);
    bridge(c);
    sinkhorn(c);
    oracle(c);
}
