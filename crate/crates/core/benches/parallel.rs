//! Sequential against rayon execution for the three parallel hot spots.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion as Bench};
use oed_core::acquisition::{minimize_acquisition, AcquisitionSpec};
use oed_core::algorithms::GridInformation;
use oed_core::design::DirectionalDerivative;
use oed_core::gpr::{GpState, KernelParams};
use oed_core::models::{flash_grid, FlashModel, ModelHandle};
use oed_core::sobol::SobolStream;
use oed_core::{Criterion, DesignPoint, Execution, SigmaEps};
use std::hint::black_box;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn label(e: Execution) -> &'static str {
    match e {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

/// Every tenth point of the flash grid.
fn flash_points() -> Vec<DesignPoint> {
    flash_grid().into_iter().step_by(10).map(Into::into).collect()
}

fn grid_jacobians(c: &mut Bench) {
    let model = ModelHandle::new(FlashModel::methanol_water());
    let grid = flash_points();
    let sigma = SigmaEps::identity(2);
    let mut g = c.benchmark_group("grid_jacobians");
    g.sample_size(10);
    for e in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &e, |b, &e| {
            b.iter(|| GridInformation::compute(&model, black_box(&grid), &sigma, e).unwrap())
        });
    }
    g.finish();
}

fn grid_scan(c: &mut Bench) {
    let model = ModelHandle::new(FlashModel::methanol_water());
    let grid: Vec<DesignPoint> = flash_grid().into_iter().map(Into::into).collect();
    let info = GridInformation::compute(&model, &grid, &SigmaEps::identity(2), Execution::Parallel).unwrap();
    let idx: Vec<usize> = (0..info.len()).step_by(997).collect();
    let m = info
        .information(&idx, &vec![1.0 / idx.len() as f64; idx.len()])
        .unwrap();
    let deriv = DirectionalDerivative::new(&m, Criterion::LogD).unwrap();
    let mut g = c.benchmark_group("grid_scan");
    let mut out = Vec::new();
    for e in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &e, |b, &e| {
            b.iter(|| info.scan(black_box(&deriv), e, &mut out))
        });
    }
    g.finish();
}

fn acquisition_multistart(c: &mut Bench) {
    let mut stream = SobolStream::new(4).unwrap();
    let x = stream.next_points(200);
    let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| (6.0 * v).sin()).sum()).collect();
    let gp = GpState::fit(&x, &y, KernelParams::new(1.0, 0.3, 1e-6)).unwrap();
    let spec = AcquisitionSpec::new(&gp, 1.0).unwrap();
    let mut g = c.benchmark_group("acquisition_multistart");
    g.sample_size(10);
    for e in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &e, |b, &e| {
            b.iter(|| {
                let mut s = SobolStream::new(4).unwrap();
                minimize_acquisition(&spec, &mut s, 10, e).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, grid_jacobians, grid_scan, acquisition_multistart);
criterion_main!(benches);
