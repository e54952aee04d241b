use std::time::Instant;

use crate::design::{criterion_value, DesignPoint, DirectionalDerivative};
use crate::error::Result;
use crate::models::ModelHandle;

use super::grid::GridInformation;
use super::{solve_weights, AlgoConfig, AlgoReport, Algorithm, RunLog, Termination, Timing, TraceEntry};

/// YBT exchange on a fixed grid: optimal weights on the current candidates,
/// then the grid argmin of `phi` joins the candidates, until
/// `min phi > -epsilon`.
pub fn run_ybt(model: &ModelHandle, grid: &[DesignPoint], cfg: &AlgoConfig) -> Result<AlgoReport> {
    let mut run = RunLog::start(model);
    cfg.validate(model)?;

    let t = Instant::now();
    let info = GridInformation::compute(model, grid, &cfg.sigma_for(model), cfg.execution)?;
    Timing::add(&mut run.timing.jacobian, t.elapsed());

    let n0 = cfg.n_initial.unwrap_or(model.param_dim() + 1);
    let (mut candidates, resamples) = info.random_start(n0, cfg.seed)?;
    if resamples > 0 {
        run.warn(format!("initial design was singular; resampled {resamples} times"));
    }

    let mut start: Option<Vec<f64>> = None;
    let mut phi = Vec::new();
    let weights = loop {
        let t = Instant::now();
        let sol = solve_weights(&info.mus(&candidates), cfg, start.as_deref(), &mut run)?;
        Timing::add(&mut run.timing.weights, t.elapsed());

        let m = info.information(&candidates, &sol.weights)?;
        let deriv = DirectionalDerivative::new(&m, cfg.criterion)?;
        let t = Instant::now();
        let (min_phi, arg) = info.scan(&deriv, cfg.execution, &mut phi);
        Timing::add(&mut run.timing.acquisition, t.elapsed());
        run.trace.push(TraceEntry {
            iteration: run.trace.len() + 1,
            objective: criterion_value(&m, cfg.criterion)?,
            min_phi,
            candidates: candidates.len(),
        });
        if min_phi > -cfg.epsilon {
            run.termination = Termination::Optimal;
            break sol.weights;
        }
        if run.trace.len() >= cfg.max_iterations {
            run.termination = Termination::MaxIterations;
            break sol.weights;
        }
        if candidates.contains(&arg) {
            run.warn(format!(
                "grid argmin {:?} is already a candidate (phi = {min_phi:e}); stopping",
                info.points()[arg].0
            ));
            run.termination = Termination::Stalled;
            break sol.weights;
        }
        candidates.push(arg);
        let mut w = sol.weights;
        w.push(0.0);
        start = Some(w);
    };

    run.finish_grid(Algorithm::Ybt, cfg, model, &info, &candidates, &weights)
}
