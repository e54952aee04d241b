//! Design algorithms: the vertex direction method, the YBT exchange scheme and
//! ADA-GPR, which replaces the grid search by a Gaussian-process surrogate of
//! the directional derivative.

mod adagpr;
mod grid;
mod vdm;
mod ybt;

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::design::{criterion_value, Criterion, Design, DesignPoint, FisherMatrix, SigmaEps};
use crate::error::{OedError, Result};
use crate::models::ModelHandle;
use crate::parallel::Execution;
use crate::weights::{optimize_weights_from, WeightOptions, WeightSolution};

pub use adagpr::{next_tau, run_adagpr};
pub use grid::GridInformation;
pub use vdm::{run_vdm, vdm_update};
pub use ybt::run_ybt;

/// Reported designs drop support points lighter than this.
pub const REPORT_MIN_WEIGHT: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct AdaGprOptions {
    pub n_starts: usize,
    /// Alpha is cross-validated in each of the first `alpha_warmup` iterations.
    pub alpha_warmup: usize,
    /// After the warm-up, alpha is cross-validated every `alpha_every` iterations.
    pub alpha_every: usize,
    pub progress: ProgressRule,
    /// Unit-cube radius for merging support points in the reported design.
    pub cluster_radius: f64,
}

impl Default for AdaGprOptions {
    fn default() -> Self {
        AdaGprOptions {
            n_starts: 10,
            alpha_warmup: 10,
            alpha_every: 10,
            progress: ProgressRule::default(),
            cluster_radius: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProgressRule {
    /// No stop at or below this many iterations.
    pub min_iterations: usize,
    /// Fraction of the run that the progress window looks back over.
    pub window_fraction: f64,
    pub max_window: usize,
    pub threshold: f64,
}

impl Default for ProgressRule {
    fn default() -> Self {
        ProgressRule {
            min_iterations: 50,
            window_fraction: 0.4,
            max_window: 50,
            threshold: 1e-3,
        }
    }
}

impl ProgressRule {
    /// The 1-based iteration the current objective is compared against.
    pub fn reference_iteration(&self, n_cur: usize) -> usize {
        let frac = ((1.0 - self.window_fraction) * n_cur as f64 - 1e-9).ceil() as usize;
        frac.max(n_cur.saturating_sub(self.max_window)).max(1)
    }

    /// `trace[k - 1]` is the objective after iteration `k`.
    pub fn should_stop(&self, trace: &[f64], n_cur: usize) -> bool {
        if n_cur <= self.min_iterations || n_cur > trace.len() || n_cur == 0 {
            return false;
        }
        let n_stop = self.reference_iteration(n_cur);
        (trace[n_cur - 1] - trace[n_stop - 1]).abs() < self.threshold
    }
}

/// The progress stopping rule with its default window and threshold.
pub fn progress_stop(trace: &[f64], n_cur: usize) -> bool {
    ProgressRule::default().should_stop(trace, n_cur)
}

#[derive(Clone, Debug)]
pub struct AlgoConfig {
    pub criterion: Criterion,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Initial candidates. Grid methods default to `d_theta + 1`; ADA-GPR
    /// requires a value.
    pub n_initial: Option<usize>,
    pub seed: u64,
    /// Identity when unset.
    pub sigma: Option<SigmaEps>,
    pub execution: Execution,
    pub weights: WeightOptions,
    pub adagpr: AdaGprOptions,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            criterion: Criterion::LogD,
            epsilon: 1e-3,
            max_iterations: 10_000,
            n_initial: None,
            seed: 0,
            sigma: None,
            execution: Execution::default(),
            weights: WeightOptions::default(),
            adagpr: AdaGprOptions::default(),
        }
    }
}

impl AlgoConfig {
    pub fn new(criterion: Criterion) -> Self {
        AlgoConfig {
            criterion,
            ..AlgoConfig::default()
        }
    }

    pub fn validate(&self, model: &ModelHandle) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(OedError::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(OedError::InvalidInput("max_iterations must be at least 1".into()));
        }
        if let Some(n) = self.n_initial {
            if n < model.param_dim() + 1 {
                return Err(OedError::InvalidInput(format!(
                    "n_initial = {n} but the model has {} parameters; need at least {}",
                    model.param_dim(),
                    model.param_dim() + 1
                )));
            }
        }
        if let Some(s) = &self.sigma {
            if s.dim() != model.output_dim() {
                return Err(OedError::InvalidInput(format!(
                    "measurement covariance is {0}x{0} but the model has {1} outputs",
                    s.dim(),
                    model.output_dim()
                )));
            }
        }
        if self.adagpr.n_starts == 0 {
            return Err(OedError::InvalidInput("n_starts must be at least 1".into()));
        }
        if !(self.adagpr.cluster_radius > 0.0) {
            return Err(OedError::InvalidInput("cluster radius must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn sigma_for(&self, model: &ModelHandle) -> SigmaEps {
        self.sigma
            .clone()
            .unwrap_or_else(|| SigmaEps::identity(model.output_dim()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Vdm,
    Ybt,
    AdaGpr,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Vdm => "vdm",
            Algorithm::Ybt => "ybt",
            Algorithm::AdaGpr => "adagpr",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = OedError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "vdm" => Ok(Algorithm::Vdm),
            "ybt" => Ok(Algorithm::Ybt),
            "adagpr" => Ok(Algorithm::AdaGpr),
            _ => Err(OedError::InvalidInput(format!("unknown algorithm '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `min phi > -epsilon` over the grid.
    Optimal,
    /// The progress rule fired.
    Progress,
    MaxIterations,
    /// The grid argmin was already a candidate, so the exchange cannot move.
    Stalled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub jacobian: f64,
    pub weights: f64,
    pub acquisition: f64,
    pub hyperparameters: f64,
    pub total: f64,
}

impl Timing {
    pub(crate) fn add(slot: &mut f64, d: Duration) {
        *slot += d.as_secs_f64();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Criterion value `Phi(M)` of the current design.
    pub objective: f64,
    /// Smallest exact directional derivative over the grid (grid methods) or
    /// the candidates (ADA-GPR).
    pub min_phi: f64,
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgoReport {
    pub algorithm: Algorithm,
    pub criterion: Criterion,
    /// The design as reported: light points pruned, and for ADA-GPR nearby
    /// points clustered. Original units.
    pub design: Design,
    /// Every point with positive weight, original units.
    pub raw_design: Design,
    pub information: FisherMatrix,
    /// `Phi(M)` of the raw design.
    pub objective: f64,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub jacobian_evaluations: u64,
    pub termination: Termination,
    pub timing: Timing,
    pub warnings: Vec<String>,
}

impl AlgoReport {
    /// `log10 det M` for the D family, `Phi(M)` otherwise.
    pub fn reported_objective(&self) -> Result<f64> {
        reported_objective(&self.information, self.criterion)
    }

    /// Equal up to wall-clock timings.
    pub fn same_outcome(&self, other: &AlgoReport) -> bool {
        let strip = |r: &AlgoReport| AlgoReport {
            timing: Timing::default(),
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

pub fn reported_objective(m: &FisherMatrix, c: Criterion) -> Result<f64> {
    if c.is_d_family() {
        m.log10_det()
    } else {
        criterion_value(m, c)
    }
}

/// The quantity whose progress the stopping rule watches. For D the raw
/// determinant inverse is replaced by `-ln det M`.
pub(crate) fn progress_value(m: &FisherMatrix, c: Criterion) -> Result<f64> {
    match c {
        Criterion::D => criterion_value(m, Criterion::LogD),
        _ => criterion_value(m, c),
    }
}

/// Bookkeeping shared by the algorithm drivers.
pub(crate) struct RunLog {
    pub trace: Vec<TraceEntry>,
    pub termination: Termination,
    pub timing: Timing,
    pub warnings: Vec<String>,
    started: Instant,
    jacobians_before: u64,
}

impl RunLog {
    pub fn start(model: &ModelHandle) -> Self {
        RunLog {
            trace: Vec::new(),
            termination: Termination::MaxIterations,
            timing: Timing::default(),
            warnings: Vec::new(),
            started: Instant::now(),
            jacobians_before: model.jacobian_evals(),
        }
    }

    pub fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn finish(
        mut self,
        algorithm: Algorithm,
        cfg: &AlgoConfig,
        model: &ModelHandle,
        raw_design: Design,
        design: Design,
        information: FisherMatrix,
    ) -> Result<AlgoReport> {
        self.timing.total = self.started.elapsed().as_secs_f64();
        let objective = criterion_value(&information, cfg.criterion)?;
        Ok(AlgoReport {
            algorithm,
            criterion: cfg.criterion,
            design,
            raw_design,
            information,
            objective,
            iterations: self.trace.len(),
            trace: self.trace,
            jacobian_evaluations: model.jacobian_evals() - self.jacobians_before,
            termination: self.termination,
            timing: self.timing,
            warnings: self.warnings,
        })
    }

    /// Report for a design on grid indices `support`; the reported design
    /// drops weights below [`REPORT_MIN_WEIGHT`].
    pub fn finish_grid(
        self,
        algorithm: Algorithm,
        cfg: &AlgoConfig,
        model: &ModelHandle,
        info: &GridInformation,
        support: &[usize],
        weights: &[f64],
    ) -> Result<AlgoReport> {
        let information = info.information(support, weights)?;
        let (points, w): (Vec<DesignPoint>, Vec<f64>) = support
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&i, &w)| (info.points()[i].clone(), w))
            .unzip();
        let total: f64 = w.iter().sum();
        let raw = Design::new(points, w.iter().map(|v| v / total).collect())?;
        let design = raw.pruned(REPORT_MIN_WEIGHT);
        self.finish(algorithm, cfg, model, raw, design, information)
    }
}

/// Optimal weights, accepting the best iterate with a warning when the
/// solver runs out of iterations.
pub(crate) fn solve_weights(
    mus: &[FisherMatrix],
    cfg: &AlgoConfig,
    start: Option<&[f64]>,
    run: &mut RunLog,
) -> Result<WeightSolution> {
    match optimize_weights_from(mus, cfg.criterion, &cfg.weights, start) {
        Ok(s) => Ok(s),
        Err(OedError::Convergence {
            iterations,
            residual,
            best,
        }) => {
            run.warn(format!(
                "weight optimisation stopped after {iterations} iterations with residual {residual:e}"
            ));
            Ok(*best)
        }
        Err(e) => Err(e),
    }
}

/// Single-linkage clustering. Points lighter than [`REPORT_MIN_WEIGHT`] are
/// dropped first; any two remaining points closer than `radius` end up in the
/// same cluster. Each cluster becomes the unweighted mean of its members,
/// carrying their total weight. Clusters are ordered by first member.
pub fn cluster_design(design: &Design, radius: f64) -> Result<Design> {
    if !(radius > 0.0) {
        return Err(OedError::InvalidInput(format!(
            "cluster radius must be positive, got {radius}"
        )));
    }
    let kept = design.pruned(REPORT_MIN_WEIGHT);
    let pts = kept.points();
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if pts[i].distance(&pts[j]) < radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut order: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if members[r].is_empty() {
            order.push(r);
        }
        members[r].push(i);
    }
    let dim = pts.first().map_or(0, |p| p.dim());
    let mut points = Vec::with_capacity(order.len());
    let mut weights = Vec::with_capacity(order.len());
    for r in order {
        let group = &members[r];
        let mut c = vec![0.0; dim];
        for &i in group {
            for (ck, v) in c.iter_mut().zip(pts[i].iter()) {
                *ck += v;
            }
        }
        c.iter_mut().for_each(|v| *v /= group.len() as f64);
        points.push(DesignPoint::new(c));
        weights.push(group.iter().map(|&i| kept.weights()[i]).sum());
    }
    Design::new(points, weights)
}
