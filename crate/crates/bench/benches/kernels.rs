//! Criterion benchmarks for the numeric kernels: the augmented kriging
//! solve across neighbourhood sizes, block prediction, the empirical
//! variogram scan, WLS fitting, raking, and a small end-to-end alignment.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use arealize::geom::{AreaUnit, Point};
use arealize::kriging::{predict_block, solve_ordinary_kriging};
use arealize::linalg::Matrix;
use arealize::rng::Rng;
use arealize::survey::rake_2d;
use arealize::tuning::{align_field, TuningConfig};
use arealize::variogram::{covariance, empirical_variogram, fit_variogram, Family, VariogramSpec};
use arealize_bench::synthetic_field;

fn spec() -> VariogramSpec {
    VariogramSpec::new(Family::Exponential, 0.1, 1.0, 4.0).unwrap()
}

fn bench_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("ordinary_kriging_solve");
    for &n in &[8usize, 16, 32, 64] {
        let spec = spec();
        let mut rng = Rng::stream(1, "bench-solve", n as u64);
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.range_f64(0.0, 20.0), rng.range_f64(0.0, 20.0)))
            .collect();
        let target = Point::new(10.0, 10.0);
        let mut cmat = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                cmat.set(i, j, covariance(&spec, pts[i].dist(&pts[j])).unwrap());
            }
        }
        let c_target: Vec<f64> = pts
            .iter()
            .map(|p| covariance(&spec, p.dist(&target)).unwrap())
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_ordinary_kriging(black_box(&cmat), black_box(&c_target)).unwrap())
        });
    }
    group.finish();
}

fn bench_block_prediction(c: &mut Criterion) {
    let field = synthetic_field(20, 2);
    let area = AreaUnit::from_outer(
        "b",
        vec![
            Point::new(4.0, 4.0),
            Point::new(9.0, 4.0),
            Point::new(9.0, 8.0),
            Point::new(4.0, 8.0),
        ],
    )
    .unwrap();
    let spec = spec();
    c.bench_function("block_prediction_nmax32", |b| {
        b.iter(|| predict_block(black_box(&field), black_box(&area), &spec, 32, 0.5).unwrap())
    });
}

fn bench_variogram(c: &mut Criterion) {
    let field = synthetic_field(20, 3);
    c.bench_function("empirical_variogram_400", |b| {
        b.iter(|| empirical_variogram(black_box(&field), 15, 9.0).unwrap())
    });
    let emp = empirical_variogram(&field, 15, 9.0).unwrap();
    c.bench_function("wls_fit_exponential", |b| {
        b.iter(|| fit_variogram(black_box(&emp), Family::Exponential, 1.0, 9.0).unwrap())
    });
}

fn bench_raking(c: &mut Criterion) {
    let n = [[4u32, 3, 2], [2, 3, 1]];
    let rows = [40.0, 20.0];
    let cols = [30.0, 18.0, 12.0];
    c.bench_function("rake_2x3", |b| {
        b.iter(|| rake_2d(black_box(&n), &rows, &cols, 1e-10, 1000).unwrap())
    });
}

fn bench_alignment(c: &mut Criterion) {
    let field = synthetic_field(12, 4);
    let areas: Vec<AreaUnit> = (0..4)
        .map(|k| {
            let (x0, y0) = ((k % 2) as f64 * 5.0, (k / 2) as f64 * 5.0);
            AreaUnit::from_outer(
                format!("a{k}"),
                vec![
                    Point::new(x0, y0),
                    Point::new(x0 + 4.5, y0),
                    Point::new(x0 + 4.5, y0 + 4.5),
                    Point::new(x0, y0 + 4.5),
                ],
            )
            .unwrap()
        })
        .collect();
    let cfg = TuningConfig {
        seed: 5,
        spacing: 0.75,
        nmax_grid: vec![8, 16],
        families: vec![Family::Exponential, Family::Spherical],
        ..TuningConfig::default()
    };
    let mut group = c.benchmark_group("align_field_12x12");
    group.sample_size(10);
    group.bench_function("tuned", |b| {
        b.iter(|| align_field(black_box(&field), black_box(&areas), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(
    kernels,
    bench_solve,
    bench_block_prediction,
    bench_variogram,
    bench_raking,
    bench_alignment
);
criterion_main!(kernels);
