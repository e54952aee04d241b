//! The ADA-GPR acquisition `tau * mean(x) - variance(x)` and its multistart
//! minimisation over the unit cube.

use crate::bounded::{minimize, BoundedOptions};
use crate::error::{OedError, Result};
use crate::gpr::GpState;
use crate::parallel::Execution;
use crate::sobol::SobolStream;

#[derive(Clone, Copy, Debug)]
pub struct AcquisitionSpec<'a> {
    pub gp: &'a GpState,
    /// 1 trades mean against variance, 0 maximises variance alone.
    pub tau: f64,
}

impl<'a> AcquisitionSpec<'a> {
    pub fn new(gp: &'a GpState, tau: f64) -> Result<Self> {
        if tau != 0.0 && tau != 1.0 {
            return Err(OedError::InvalidInput(format!("tau must be 0 or 1, got {tau}")));
        }
        Ok(AcquisitionSpec { gp, tau })
    }
}

pub fn acquisition_value(spec: &AcquisitionSpec<'_>, x: &[f64]) -> (f64, Vec<f64>) {
    let p = spec.gp.posterior(x);
    let value = spec.tau * p.mean - p.variance;
    let grad = p
        .mean_gradient
        .iter()
        .zip(&p.variance_gradient)
        .map(|(m, v)| spec.tau * m - v)
        .collect();
    (value, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Set when no local run produced a finite value and a start point was
    /// returned instead.
    pub fallback: bool,
}

/// Runs the bounded quasi-Newton minimiser from `n_starts` points drawn from
/// `stream` and returns the best local minimum. The starts are drawn before
/// the runs are dispatched, so the result does not depend on `exec`.
pub fn minimize_acquisition(
    spec: &AcquisitionSpec<'_>,
    stream: &mut SobolStream,
    n_starts: usize,
    exec: Execution,
) -> Result<AcquisitionResult> {
    if n_starts == 0 {
        return Err(OedError::InvalidInput("need at least one start".into()));
    }
    let d = spec.gp.dim();
    if stream.dim() != d {
        return Err(OedError::InvalidInput(format!(
            "Sobol stream has dimension {}, surrogate has {d}",
            stream.dim()
        )));
    }
    let starts = stream.next_points(n_starts);
    let (lower, upper) = (vec![0.0; d], vec![1.0; d]);
    let opts = BoundedOptions::default();
    let runs = exec.map(&starts, |s| {
        let r = minimize(|x| acquisition_value(spec, x), s, &lower, &upper, &opts);
        (r.x, r.value)
    });

    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x, v) in runs {
        if v.is_finite() && best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((x, v));
        }
    }
    if let Some((x, value)) = best {
        let x = x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        return Ok(AcquisitionResult {
            x,
            value,
            fallback: false,
        });
    }
    log::warn!("every acquisition run failed; returning the best start point");
    let (x, value) = starts
        .iter()
        .map(|s| (s.clone(), acquisition_value(spec, s).0))
        .fold((starts[0].clone(), f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    Ok(AcquisitionResult {
        x,
        value,
        fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::KernelParams;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point_gp() -> GpState {
        GpState::fit(&[vec![0.2], vec![0.8]], &[1.0, 1.0], KernelParams::new(1.0, 0.2, 0.0)).unwrap()
    }

    #[test]
    fn tau_zero_is_negative_variance() {
        let gp = two_point_gp();
        let spec = AcquisitionSpec::new(&gp, 0.0).unwrap();
        for x in [0.0, 0.33, 0.5, 0.9] {
            assert_eq!(acquisition_value(&spec, &[x]).0, -gp.posterior(&[x]).variance);
        }
        assert!(AcquisitionSpec::new(&gp, 0.5).is_err());
    }

    #[test]
    fn tau_one_at_training_point() {
        let gp = GpState::fit(&[vec![0.2], vec![0.7]], &[1.5, -0.5], KernelParams::new(1.0, 0.3, 0.0)).unwrap();
        let spec = AcquisitionSpec::new(&gp, 1.0).unwrap();
        assert_abs_diff_eq!(acquisition_value(&spec, &[0.7]).0, -0.5, epsilon = 1e-10);
    }

    #[test]
    fn gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<Vec<f64>> = (0..10).map(|_| (0..2).map(|_| rng.random::<f64>()).collect()).collect();
            let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gp = GpState::fit(&x, &y, KernelParams::new(1.0, 0.4, 1e-6)).unwrap();
            let spec = AcquisitionSpec::new(&gp, 1.0).unwrap();
            let q: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            let (_, g) = acquisition_value(&spec, &q);
            for k in 0..2 {
                let (mut a, mut b) = (q.clone(), q.clone());
                a[k] += 1e-6;
                b[k] -= 1e-6;
                let fd = (acquisition_value(&spec, &a).0 - acquisition_value(&spec, &b).0) / 2e-6;
                assert!((g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-3) < 1e-5);
            }
        }
    }

    #[test]
    fn variance_maximiser_matches_grid() {
        let gp = two_point_gp();
        let spec = AcquisitionSpec::new(&gp, 0.0).unwrap();
        let oracle = (0..=10_000)
            .map(|i| acquisition_value(&spec, &[i as f64 / 10_000.0]).0)
            .fold(f64::INFINITY, f64::min);
        let mut stream = SobolStream::new(1).unwrap();
        let r = minimize_acquisition(&spec, &mut stream, 10, Execution::Sequential).unwrap();
        assert!(!r.fallback);
        assert!((0.0..=1.0).contains(&r.x[0]));
        assert!((r.value - oracle).abs() < 1e-4, "{} vs {oracle}", r.value);
        assert_eq!(stream.index(), 10);
    }

    #[test]
    fn result_no_worse_than_any_start_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|p| p[0] * p[1] - p[2]).collect();
        let gp = GpState::fit(&x, &y, KernelParams::new(0.5, 0.3, 1e-8)).unwrap();
        for tau in [0.0, 1.0] {
            let spec = AcquisitionSpec::new(&gp, tau).unwrap();
            let mut s1 = SobolStream::new(3).unwrap();
            let mut s2 = SobolStream::new(3).unwrap();
            let mut s3 = SobolStream::new(3).unwrap();
            let starts = s3.next_points(10);
            let a = minimize_acquisition(&spec, &mut s1, 10, Execution::Sequential).unwrap();
            let b = minimize_acquisition(&spec, &mut s2, 10, Execution::default()).unwrap();
            assert_eq!(a, b);
            for s in &starts {
                assert!(a.value <= acquisition_value(&spec, s).0);
            }
            if tau == 0.0 {
                let at_train = x.iter().map(|p| gp.posterior(p).variance).fold(0.0, f64::max);
                assert!(-a.value >= at_train);
            }
        }
    }

    #[test]
    fn single_start_at_minimum() {
        // variance is maximal midway between the two points, at 0.5
        let gp = two_point_gp();
        let spec = AcquisitionSpec::new(&gp, 0.0).unwrap();
        let mut stream = SobolStream::new(1).unwrap();
        let r = minimize_acquisition(&spec, &mut stream, 1, Execution::Sequential).unwrap();
        assert_eq!(r.x, vec![0.5]);
    }
}
