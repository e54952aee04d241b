use std::time::Instant;

use crate::acquisition::{minimize_acquisition, AcquisitionSpec};
use crate::design::{
    criterion_value, fisher_at_point, weighted_information, Design, DesignPoint, DirectionalDerivative, FisherMatrix,
    SigmaEps,
};
use crate::error::{OedError, Result};
use crate::gpr::{select_alpha_cv, select_alpha_cv_with, select_hypers, GpState, KernelParams};
use crate::models::{Bounds, ModelHandle};
use crate::sobol::SobolStream;

use super::{
    cluster_design, progress_value, solve_weights, AlgoConfig, AlgoReport, Algorithm, RunLog, Termination, Timing,
    TraceEntry,
};

/// Replacement draws allowed per rejected point.
const MAX_REPLACEMENTS: usize = 100;

/// The acquisition switch: a point with negative `phi` keeps `tau = 1`,
/// otherwise `tau` flips. `phi` counts as negative below `-zero_tol`, so that
/// re-selecting a support point, where `phi` is zero up to the weight
/// solver's tolerance, triggers exploration.
pub fn next_tau(tau: f64, phi: f64, zero_tol: f64) -> f64 {
    if phi < -zero_tol || tau == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn rejectable(e: &OedError) -> bool {
    matches!(e, OedError::NonFiniteModel(_) | OedError::NoSolution(_))
}

fn fisher_at(model: &ModelHandle, bounds: &Bounds, sigma: &SigmaEps, z: &[f64]) -> Result<FisherMatrix> {
    let j = model.jacobian(&bounds.from_unit(z))?;
    fisher_at_point(&j, sigma)
}

/// Evaluates at `z`, replacing it with later Sobol points while the model
/// fails there.
fn accept_point(
    model: &ModelHandle,
    bounds: &Bounds,
    sigma: &SigmaEps,
    stream: &mut SobolStream,
    mut z: Vec<f64>,
    first: Option<Result<FisherMatrix>>,
    run: &mut RunLog,
) -> Result<(Vec<f64>, FisherMatrix)> {
    let mut result = first.unwrap_or_else(|| fisher_at(model, bounds, sigma, &z));
    for _ in 0..MAX_REPLACEMENTS {
        match result {
            Ok(mu) => return Ok((z, mu)),
            Err(e) if rejectable(&e) => {
                run.warn(format!("rejected point {:?}: {e}", bounds.from_unit(&z)));
                z = stream.next_point();
                result = fisher_at(model, bounds, sigma, &z);
            }
            Err(e) => return Err(e),
        }
    }
    result.map(|mu| (z, mu)).map_err(|e| {
        OedError::Initialization(format!(
            "model failed at {MAX_REPLACEMENTS} replacement points in a row: {e}"
        ))
    })
}

/// ADA-GPR on the continuous design space `bounds`, worked in the unit cube.
///
/// Starts from the first `n_initial` Sobol points. Each iteration computes
/// optimal weights on the candidates, fits a GP to the exact `phi` values at
/// the candidates, minimises `tau * mean - variance` from further Sobol
/// starts and adds the minimiser as a candidate. Stops on the progress rule.
pub fn run_adagpr(model: &ModelHandle, bounds: &Bounds, cfg: &AlgoConfig) -> Result<AlgoReport> {
    let mut run = RunLog::start(model);
    cfg.validate(model)?;
    let n0 = cfg
        .n_initial
        .ok_or_else(|| OedError::InvalidInput("ADA-GPR needs n_initial".into()))?;
    if bounds.dim() != model.input_dim() {
        return Err(OedError::InvalidInput(format!(
            "bounds have dimension {}, model expects {}",
            bounds.dim(),
            model.input_dim()
        )));
    }
    let sigma = cfg.sigma_for(model);
    let opts = &cfg.adagpr;
    let mut stream = SobolStream::new(bounds.dim())?;

    let t = Instant::now();
    let starts = stream.next_points(n0);
    let first = cfg.execution.map(&starts, |z| fisher_at(model, bounds, &sigma, z));
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(n0);
    let mut mus: Vec<FisherMatrix> = Vec::with_capacity(n0);
    for (p, r) in starts.into_iter().zip(first) {
        let (p, mu) = accept_point(model, bounds, &sigma, &mut stream, p, Some(r), &mut run)?;
        z.push(p);
        mus.push(mu);
    }
    let mut extended = 0;
    while !weighted_information(&vec![1.0 / mus.len() as f64; mus.len()], &mus)?.is_invertible() {
        if extended == n0 {
            return Err(OedError::Initialization(format!(
                "information matrix still singular after {} Sobol points",
                mus.len()
            )));
        }
        let p = stream.next_point();
        let (p, mu) = accept_point(model, bounds, &sigma, &mut stream, p, None, &mut run)?;
        z.push(p);
        mus.push(mu);
        extended += 1;
    }
    if extended > 0 {
        run.warn(format!("initial design was singular; added {extended} Sobol points"));
    }
    Timing::add(&mut run.timing.jacobian, t.elapsed());

    let mut tau = 1.0;
    let mut params: Option<KernelParams> = None;
    let mut alpha = crate::gpr::DEFAULT_ALPHA;
    let mut start: Option<Vec<f64>> = None;
    let mut progress = Vec::new();
    let weights = loop {
        let k = run.trace.len() + 1;
        let t = Instant::now();
        let sol = solve_weights(&mus, cfg, start.as_deref(), &mut run)?;
        Timing::add(&mut run.timing.weights, t.elapsed());

        let m = weighted_information(&sol.weights, &mus)?;
        let deriv = DirectionalDerivative::new(&m, cfg.criterion)?;
        let y: Vec<f64> = mus.iter().map(|mu| deriv.at(mu)).collect();
        run.trace.push(TraceEntry {
            iteration: k,
            objective: criterion_value(&m, cfg.criterion)?,
            min_phi: y.iter().copied().fold(f64::INFINITY, f64::min),
            candidates: mus.len(),
        });
        progress.push(progress_value(&m, cfg.criterion)?);
        if opts.progress.should_stop(&progress, k) {
            run.termination = Termination::Progress;
            break sol.weights;
        }
        if k >= cfg.max_iterations {
            run.termination = Termination::MaxIterations;
            break sol.weights;
        }

        let t = Instant::now();
        if k <= opts.alpha_warmup || k % opts.alpha_every == 0 {
            let sel = match &params {
                None => select_alpha_cv(&z, &y)?,
                Some(p) => select_alpha_cv_with(&z, &y, p)?,
            };
            alpha = sel.alpha;
        }
        let hyp = select_hypers(&z, &y, alpha, params.as_ref())?;
        if hyp.fallback {
            run.warn(format!("iteration {k}: hyper-parameter search failed, using defaults"));
        }
        let mut p = hyp.params;
        let gp = loop {
            match GpState::fit(&z, &y, p) {
                Ok(gp) => break gp,
                Err(OedError::SingularKernel) if p.alpha < 1.0 => {
                    p.alpha = (p.alpha * 10.0).min(1.0);
                    run.warn(format!(
                        "iteration {k}: kernel singular, raising alpha to {:e}",
                        p.alpha
                    ));
                }
                Err(e) => return Err(e),
            }
        };
        params = Some(p);
        let p_fit = p;
        Timing::add(&mut run.timing.hyperparameters, t.elapsed());

        let t = Instant::now();
        let spec = AcquisitionSpec::new(&gp, tau)?;
        let next = minimize_acquisition(&spec, &mut stream, opts.n_starts, cfg.execution)?;
        if next.fallback {
            run.warn(format!("iteration {k}: every acquisition run failed"));
        }
        Timing::add(&mut run.timing.acquisition, t.elapsed());

        let t = Instant::now();
        let (p, mu) = accept_point(model, bounds, &sigma, &mut stream, next.x, None, &mut run)?;
        Timing::add(&mut run.timing.jacobian, t.elapsed());
        let phi_new = deriv.at(&mu);
        log::debug!(
            "iteration {k}: tau {tau}, sigma_f^2 {:.3e}, l {:.3e}, alpha {:.1e}, predicted {:.4e}, phi {phi_new:.4e}, min phi {:.4e}",
            p_fit.signal_variance,
            p_fit.lengthscale,
            p_fit.alpha,
            gp.mean(&p),
            run.trace[k - 1].min_phi
        );
        tau = next_tau(tau, phi_new, cfg.weights.tol);
        z.push(p);
        mus.push(mu);
        let mut w = sol.weights;
        w.push(0.0);
        start = Some(w);
    };

    let information = weighted_information(&weights, &mus[..weights.len()])?;
    let (points, w): (Vec<DesignPoint>, Vec<f64>) = z
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(p, &w)| (DesignPoint::new(p.clone()), w))
        .unzip();
    let total: f64 = w.iter().sum();
    let unit = Design::new(points, w.iter().map(|v| v / total).collect())?;
    let clustered = cluster_design(&unit, opts.cluster_radius)?;
    let to_box = |p: &DesignPoint| DesignPoint::new(bounds.from_unit(p));
    run.finish(
        Algorithm::AdaGpr,
        cfg,
        model,
        unit.map_points(to_box),
        clustered.map_points(to_box),
        information,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_transitions() {
        assert_eq!(next_tau(1.0, -0.5, 0.0), 1.0);
        assert_eq!(next_tau(1.0, 0.2, 0.0), 0.0);
        assert_eq!(next_tau(0.0, 0.2, 0.0), 1.0);
        assert_eq!(next_tau(0.0, -0.2, 0.0), 1.0);
        assert_eq!(next_tau(1.0, 0.0, 0.0), 0.0);
        assert_eq!(next_tau(1.0, -3e-7, 1e-6), 0.0);
        assert_eq!(next_tau(1.0, -3e-6, 1e-6), 1.0);
    }
}
