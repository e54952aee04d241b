use std::time::Instant;

use crate::design::{criterion_value, DesignPoint, DirectionalDerivative};
use crate::error::Result;
use crate::models::ModelHandle;

use super::grid::GridInformation;
use super::{AlgoConfig, AlgoReport, Algorithm, RunLog, Termination, Timing, TraceEntry};

/// One vertex-direction step with step length `1 / (n + 1)`: every weight is
/// scaled by `n / (n + 1)` and `new` receives `1 / (n + 1)`, merging with an
/// existing support entry if present.
pub fn vdm_update<T: PartialEq>(support: &mut Vec<T>, weights: &mut Vec<f64>, new: T, n: usize) {
    let step = 1.0 / (n as f64 + 1.0);
    for w in weights.iter_mut() {
        *w *= 1.0 - step;
    }
    match support.iter().position(|s| *s == new) {
        Some(k) => weights[k] += step,
        None => {
            support.push(new);
            weights.push(step);
        }
    }
}

/// Vertex direction method on a fixed grid. Starts from `n_initial`
/// (default `d_theta + 1`) random grid points with equal weights and adds the
/// grid argmin of `phi` each iteration until `min phi > -epsilon`.
pub fn run_vdm(model: &ModelHandle, grid: &[DesignPoint], cfg: &AlgoConfig) -> Result<AlgoReport> {
    let mut run = RunLog::start(model);
    cfg.validate(model)?;

    let t = Instant::now();
    let info = GridInformation::compute(model, grid, &cfg.sigma_for(model), cfg.execution)?;
    Timing::add(&mut run.timing.jacobian, t.elapsed());

    let n0 = cfg.n_initial.unwrap_or(model.param_dim() + 1);
    let (mut support, resamples) = info.random_start(n0, cfg.seed)?;
    if resamples > 0 {
        run.warn(format!("initial design was singular; resampled {resamples} times"));
    }
    let mut weights = vec![1.0 / n0 as f64; n0];
    let mut n = n0;

    let mut phi = Vec::new();
    run.termination = loop {
        let m = info.information(&support, &weights)?;
        let deriv = DirectionalDerivative::new(&m, cfg.criterion)?;
        let t = Instant::now();
        let (min_phi, arg) = info.scan(&deriv, cfg.execution, &mut phi);
        Timing::add(&mut run.timing.acquisition, t.elapsed());
        run.trace.push(TraceEntry {
            iteration: run.trace.len() + 1,
            objective: criterion_value(&m, cfg.criterion)?,
            min_phi,
            candidates: support.len(),
        });
        if min_phi > -cfg.epsilon {
            break Termination::Optimal;
        }
        if run.trace.len() >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        let t = Instant::now();
        vdm_update(&mut support, &mut weights, arg, n);
        n += 1;
        Timing::add(&mut run.timing.weights, t.elapsed());
    };
    run.finish_grid(Algorithm::Vdm, cfg, model, &info, &support, &weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_equal_weights_become_fifths() {
        let mut s = vec![0, 1, 2, 3];
        let mut w = vec![0.25; 4];
        vdm_update(&mut s, &mut w, 7, 4);
        assert_eq!(s, vec![0, 1, 2, 3, 7]);
        for v in &w {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_point_merges() {
        let mut s = vec![0, 1, 2, 3];
        let mut w = vec![0.25; 4];
        vdm_update(&mut s, &mut w, 2, 4);
        assert_eq!(s.len(), 4);
        let expect = [0.2, 0.2, 0.4, 0.2];
        for (v, e) in w.iter().zip(expect) {
            assert!((v - e).abs() < 1e-15);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
