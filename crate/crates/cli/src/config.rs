//! Problem configuration files.
//!
//! A problem is one JSON object. Only `model` and `algorithm` are required:
//!
//! ```json
//! {
//!   "model": { "id": "flash-meoh-water" },
//!   "algorithm": "adagpr",
//!   "n_initial": 50
//! }
//! ```
//!
//! [`load_problem`] fills every default, so serialising a loaded config and
//! loading it again gives the same value.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use oed_core::algorithms::{AdaGprOptions, AlgoConfig, Algorithm, ProgressRule};
use oed_core::models::{
    flash_grid, yeast_grid, Bounds, FlashModel, FlashSystem, ModelHandle, NrtlParams, QuadraticModel, SubstrateForm,
    YeastModel, YeastParams,
};
use oed_core::weights::WeightOptions;
use oed_core::{Criterion, DesignPoint, Execution, SigmaEps};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Model id and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    FlashMeohWater {
        #[serde(default = "nrtl_water")]
        nrtl: NrtlParams,
    },
    FlashMeohAcetone {
        #[serde(default = "nrtl_acetone")]
        nrtl: NrtlParams,
    },
    Yeast {
        #[serde(default = "yeast_theta")]
        theta: [f64; 4],
        #[serde(default = "yeast_y2_0")]
        y2_0: f64,
        #[serde(default)]
        substrate_form: SubstrateForm,
    },
    Quadratic {
        #[serde(default = "quadratic_theta")]
        theta: [f64; 3],
        #[serde(default = "minus_one")]
        lower: f64,
        #[serde(default = "one")]
        upper: f64,
    },
}

fn nrtl_water() -> NrtlParams {
    NrtlParams::METHANOL_WATER
}

fn nrtl_acetone() -> NrtlParams {
    NrtlParams::METHANOL_ACETONE
}

fn yeast_theta() -> [f64; 4] {
    YeastParams::default().theta
}

fn yeast_y2_0() -> f64 {
    YeastParams::default().y2_0
}

fn quadratic_theta() -> [f64; 3] {
    [1.0; 3]
}

fn minus_one() -> f64 {
    -1.0
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ModelSpec::FlashMeohWater { .. } => "flash-meoh-water",
            ModelSpec::FlashMeohAcetone { .. } => "flash-meoh-acetone",
            ModelSpec::Yeast { .. } => "yeast",
            ModelSpec::Quadratic { .. } => "quadratic",
        }
    }

    /// Column names for design tables.
    pub fn input_names(&self) -> Vec<String> {
        match self {
            ModelSpec::FlashMeohWater { .. } | ModelSpec::FlashMeohAcetone { .. } => {
                vec!["x_m".into(), "p_bar".into()]
            }
            ModelSpec::Yeast { .. } => std::iter::once("y1_0".to_string())
                .chain((1..=5).map(|j| format!("u1_{j}")))
                .chain((1..=5).map(|j| format!("u2_{j}")))
                .collect(),
            ModelSpec::Quadratic { .. } => vec!["x".into()],
        }
    }

    pub fn build(&self) -> Result<ModelHandle, CliError> {
        Ok(match self {
            ModelSpec::FlashMeohWater { nrtl } => {
                ModelHandle::new(FlashModel::new(self.id(), FlashSystem::METHANOL_WATER, *nrtl))
            }
            ModelSpec::FlashMeohAcetone { nrtl } => {
                ModelHandle::new(FlashModel::new(self.id(), FlashSystem::METHANOL_ACETONE, *nrtl))
            }
            ModelSpec::Yeast {
                theta,
                y2_0,
                substrate_form,
            } => ModelHandle::new(YeastModel::new(
                YeastParams {
                    theta: *theta,
                    y2_0: *y2_0,
                },
                *substrate_form,
            )),
            ModelSpec::Quadratic { theta, lower, upper } => ModelHandle::new(
                QuadraticModel::with_bounds(*theta, *lower, *upper)
                    .map_err(|e| CliError::Validation(format!("model: {e}")))?,
            ),
        })
    }
}

/// One axis of a level product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Levels(Vec<f64>),
    Linspace { start: f64, stop: f64, n: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Levels(v) => v.clone(),
            Axis::Linspace { n: 0, .. } => Vec::new(),
            Axis::Linspace { n: 1, start, .. } => vec![*start],
            &Axis::Linspace { start, stop, n } => {
                let m = (n - 1) as f64;
                (0..n).map(|i| (start * (m - i as f64) + stop * i as f64) / m).collect()
            }
        }
    }
}

/// Candidate grid for the grid methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Explicit list of points.
    Points(Vec<Vec<f64>>),
    /// Cartesian product of per-dimension levels, last dimension fastest.
    Product(Vec<Axis>),
    /// Built-in grids: `flash` (9191 points) or `yeast` (15552 points).
    Preset(GridPreset),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    Flash,
    Yeast,
}

impl GridSpec {
    pub fn expand(&self) -> Vec<Vec<f64>> {
        match self {
            GridSpec::Points(p) => p.clone(),
            GridSpec::Preset(GridPreset::Flash) => flash_grid(),
            GridSpec::Preset(GridPreset::Yeast) => yeast_grid(),
            GridSpec::Product(axes) => {
                let mut out: Vec<Vec<f64>> = vec![Vec::new()];
                for axis in axes {
                    let vals = axis.values();
                    out = out
                        .into_iter()
                        .flat_map(|p| {
                            vals.iter().map(move |&v| {
                                let mut q = p.clone();
                                q.push(v);
                                q
                            })
                        })
                        .collect();
                }
                out
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// ADA-GPR settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaGprSettings {
    pub n_starts: usize,
    pub cluster_radius: f64,
    pub progress_threshold: f64,
    pub progress_min_iterations: usize,
}

impl Default for AdaGprSettings {
    fn default() -> Self {
        let o = AdaGprOptions::default();
        AdaGprSettings {
            n_starts: o.n_starts,
            cluster_radius: o.cluster_radius,
            progress_threshold: o.progress.threshold,
            progress_min_iterations: o.progress.min_iterations,
        }
    }
}

impl AdaGprSettings {
    fn options(&self) -> AdaGprOptions {
        AdaGprOptions {
            n_starts: self.n_starts,
            cluster_radius: self.cluster_radius,
            progress: ProgressRule {
                threshold: self.progress_threshold,
                min_iterations: self.progress_min_iterations,
                ..ProgressRule::default()
            },
            ..AdaGprOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub model: ModelSpec,
    pub algorithm: Algorithm,
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    /// Design space for ADA-GPR; defaults to the model's box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_initial: Option<usize>,
    /// Measurement covariance, row-major. Defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_eps: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub weights: WeightOptions,
    #[serde(default)]
    pub adagpr: AdaGprSettings,
}

fn default_criterion() -> Criterion {
    Criterion::LogD
}

fn default_epsilon() -> f64 {
    AlgoConfig::default().epsilon
}

fn default_max_iterations() -> usize {
    AlgoConfig::default().max_iterations
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("oed-out")
}

/// Parses a config from JSON text. Errors carry the line, column and field
/// path of the problem.
pub fn parse_problem(text: &str) -> Result<ProblemConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: ProblemConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Parse {
            line: inner.line(),
            column: inner.column(),
            field: path,
            message: inner.to_string(),
            file: None,
        }
    })?;
    raw.validated()
}

pub fn load_problem(path: &Path) -> Result<ProblemConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_problem(&text).map_err(|e| e.in_file(path))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl ProblemConfig {
    /// Checks every invariant and fills `bounds` and `sigma_eps`.
    pub fn validated(mut self) -> Result<ProblemConfig, CliError> {
        let model = self.model.build()?;
        match (self.algorithm, &self.grid) {
            (Algorithm::AdaGpr, Some(_)) => return Err(invalid("grid: not allowed for adagpr")),
            (Algorithm::Vdm | Algorithm::Ybt, None) => {
                return Err(invalid(format!("grid: required for {}", self.algorithm)))
            }
            _ => {}
        }
        if self.algorithm == Algorithm::AdaGpr && self.n_initial.is_none() {
            return Err(invalid("n_initial: required for adagpr"));
        }
        if self.algorithm != Algorithm::AdaGpr && self.bounds.is_some() {
            return Err(invalid(format!("bounds: only used by adagpr, not {}", self.algorithm)));
        }

        if self.algorithm == Algorithm::AdaGpr {
            let spec = self.bounds.take().unwrap_or_else(|| BoundsSpec {
                lower: model.bounds().lower().to_vec(),
                upper: model.bounds().upper().to_vec(),
            });
            let b = Bounds::new(spec.lower.clone(), spec.upper.clone()).map_err(|e| invalid(format!("bounds: {e}")))?;
            if b.dim() != model.input_dim() {
                return Err(invalid(format!(
                    "bounds: dimension {} does not match model input dimension {}",
                    b.dim(),
                    model.input_dim()
                )));
            }
            let outer = model.bounds();
            if !(outer.contains(b.lower()) && outer.contains(b.upper())) {
                return Err(invalid("bounds: must lie inside the model's design space"));
            }
            self.bounds = Some(spec);
        }

        if let Some(grid) = &self.grid {
            let points = grid.expand();
            if points.is_empty() {
                return Err(invalid("grid: no points"));
            }
            for (i, p) in points.iter().enumerate() {
                if p.len() != model.input_dim() {
                    return Err(invalid(format!(
                        "grid: point {i} has dimension {}, model expects {}",
                        p.len(),
                        model.input_dim()
                    )));
                }
                if !model.bounds().contains(p) {
                    return Err(invalid(format!(
                        "grid: point {i} {p:?} lies outside the model's design space"
                    )));
                }
            }
        }

        let d = model.output_dim();
        let sigma = self.sigma_eps.take().unwrap_or_else(|| {
            (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect()
        });
        sigma_matrix(&sigma, d)?;
        self.sigma_eps = Some(sigma);

        self.algo_config()
            .validate(&model)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(self)
    }

    pub fn grid_points(&self) -> Vec<DesignPoint> {
        self.grid
            .as_ref()
            .map(|g| g.expand().into_iter().map(DesignPoint::new).collect())
            .unwrap_or_default()
    }

    pub fn design_bounds(&self, model: &ModelHandle) -> Result<Bounds, CliError> {
        match &self.bounds {
            Some(b) => Bounds::new(b.lower.clone(), b.upper.clone()).map_err(|e| invalid(format!("bounds: {e}"))),
            None => Ok(model.bounds().clone()),
        }
    }

    pub fn algo_config(&self) -> AlgoConfig {
        AlgoConfig {
            criterion: self.criterion,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            n_initial: self.n_initial,
            seed: self.seed,
            sigma: self.sigma_eps.as_ref().and_then(|s| sigma_matrix(s, s.len()).ok()),
            execution: self.execution,
            weights: self.weights,
            adagpr: self.adagpr.options(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

fn sigma_matrix(rows: &[Vec<f64>], d: usize) -> Result<SigmaEps, CliError> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(invalid(format!("sigma_eps: must be {d}x{d}")));
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    SigmaEps::new(m).map_err(|e| invalid(format!("sigma_eps: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_flash_config_gets_defaults() {
        let c =
            parse_problem(r#"{"model": {"id": "flash-meoh-water"}, "algorithm": "adagpr", "n_initial": 50}"#).unwrap();
        assert_eq!(c.epsilon, 1e-3);
        assert_eq!(c.seed, 0);
        assert_eq!(c.criterion, Criterion::LogD);
        assert_eq!(c.sigma_eps, Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]));
        assert_eq!(c.bounds.as_ref().unwrap().upper, vec![1.0, 5.0]);
        assert_eq!(
            c.model,
            ModelSpec::FlashMeohWater {
                nrtl: NrtlParams::METHANOL_WATER
            }
        );
    }

    #[test]
    fn adagpr_rejects_grid() {
        let e = parse_problem(
            r#"{"model": {"id": "quadratic"}, "algorithm": "adagpr", "n_initial": 5,
                "grid": {"points": [[0.0]]}}"#,
        )
        .unwrap_err();
        assert!(matches!(&e, CliError::Validation(m) if m.starts_with("grid")), "{e}");
    }

    #[test]
    fn grid_methods_need_a_grid() {
        let e = parse_problem(r#"{"model": {"id": "quadratic"}, "algorithm": "ybt"}"#).unwrap_err();
        assert!(matches!(e, CliError::Validation(_)));
    }

    #[test]
    fn yeast_level_product_has_15552_points() {
        let c = parse_problem(
            r#"{"model": {"id": "yeast"}, "algorithm": "ybt", "grid": {"product": [
                [1, 10],
                [0.05, 0.2], [0.05, 0.2], [0.05, 0.2], [0.05, 0.2], [0.05, 0.2],
                [5, 20, 35], [5, 20, 35], [5, 20, 35], [5, 20, 35], [5, 20, 35]]}}"#,
        )
        .unwrap();
        let g = c.grid.as_ref().unwrap().expand();
        assert_eq!(g.len(), 15_552);
        assert_eq!(g, yeast_grid());
    }

    #[test]
    fn linspace_axis_reproduces_flash_preset() {
        let spec = GridSpec::Product(vec![
            Axis::Linspace {
                start: 0.0,
                stop: 1.0,
                n: 101,
            },
            Axis::Linspace {
                start: 0.5,
                stop: 5.0,
                n: 91,
            },
        ]);
        let a = spec.expand();
        let b = flash_grid();
        assert_eq!(a.len(), 9191);
        for (p, q) in a.iter().zip(&b) {
            assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_errors_name_line_and_field() {
        let e = parse_problem(
            "{\n  \"model\": {\"id\": \"quadratic\"},\n  \"algorithm\": \"ybt\",\n  \"epsilon\": \"small\"\n}",
        )
        .unwrap_err();
        match e {
            CliError::Parse { line, field, .. } => {
                assert_eq!(line, 4);
                assert_eq!(field, "epsilon");
            }
            other => panic!("{other}"),
        }
        let e = parse_problem(r#"{"model": {"id": "distillation"}, "algorithm": "ybt"}"#).unwrap_err();
        assert!(matches!(e, CliError::Parse { .. }), "{e}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let e = parse_problem(r#"{"model": {"id": "quadratic"}, "algorithm": "ybt", "gird": {"points": [[0]]}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("gird"), "{e}");
    }

    #[test]
    fn round_trip_of_defaults() {
        for text in [
            r#"{"model": {"id": "flash-meoh-acetone"}, "algorithm": "ybt", "grid": {"preset": "flash"}}"#,
            r#"{"model": {"id": "yeast", "substrate_form": "classical"}, "algorithm": "adagpr", "n_initial": 200}"#,
            r#"{"model": {"id": "quadratic"}, "algorithm": "vdm", "criterion": "E",
                "grid": {"product": [{"start": -1, "stop": 1, "n": 21}]}}"#,
        ] {
            let a = parse_problem(text).unwrap();
            let b = parse_problem(&a.to_json()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sigma_shape_is_checked() {
        let e = parse_problem(
            r#"{"model": {"id": "quadratic"}, "algorithm": "ybt", "grid": {"points": [[0]]},
                "sigma_eps": [[1, 0], [0, 1]]}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("sigma_eps"), "{e}");
    }

    #[test]
    fn grid_outside_domain_is_rejected() {
        let e = parse_problem(r#"{"model": {"id": "quadratic"}, "algorithm": "ybt", "grid": {"points": [[2.0]]}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("outside"), "{e}");
    }
}
