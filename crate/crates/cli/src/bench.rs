//! Benchmark suites: the design studies behind the acceptance checks, run
//! through the same config path as `oed run`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use oed_core::algorithms::{AlgoReport, Algorithm};
use oed_core::models::SubstrateForm;

use crate::config::{Axis, GridPreset, GridSpec, ModelSpec, ProblemConfig};
use crate::report::Summary;
use crate::{emit_report, execute, parse_problem, CliError};

pub const SUITES: [&str; 4] = ["quadratic", "flash", "yeast", "all"];

#[derive(Clone, Debug)]
pub struct BenchCase {
    pub name: String,
    pub config: ProblemConfig,
}

pub struct BenchResult {
    pub case: BenchCase,
    pub report: AlgoReport,
    pub seconds: f64,
}

fn case(
    name: impl Into<String>,
    model: ModelSpec,
    algorithm: Algorithm,
    grid: Option<GridSpec>,
    n0: usize,
) -> BenchCase {
    let mut json = serde_json::json!({ "model": model, "algorithm": algorithm });
    match grid {
        Some(g) => json["grid"] = serde_json::to_value(g).unwrap(),
        None => json["n_initial"] = n0.into(),
    }
    BenchCase {
        name: name.into(),
        config: parse_problem(&json.to_string()).expect("bench config"),
    }
}

fn quadratic() -> ModelSpec {
    ModelSpec::Quadratic {
        theta: [1.0; 3],
        lower: -1.0,
        upper: 1.0,
    }
}

fn quadratic_grid() -> GridSpec {
    GridSpec::Product(vec![Axis::Linspace {
        start: -1.0,
        stop: 1.0,
        n: 201,
    }])
}

fn water() -> ModelSpec {
    ModelSpec::FlashMeohWater {
        nrtl: oed_core::models::NrtlParams::METHANOL_WATER,
    }
}

fn acetone() -> ModelSpec {
    ModelSpec::FlashMeohAcetone {
        nrtl: oed_core::models::NrtlParams::METHANOL_ACETONE,
    }
}

fn yeast(form: SubstrateForm) -> ModelSpec {
    let p = oed_core::models::YeastParams::default();
    ModelSpec::Yeast {
        theta: p.theta,
        y2_0: p.y2_0,
        substrate_form: form,
    }
}

/// The cases of `suite`, or `None` for an unknown name.
pub fn suite(name: &str) -> Option<Vec<BenchCase>> {
    let flash = || Some(GridSpec::Preset(GridPreset::Flash));
    Some(match name {
        "quadratic" => vec![
            case("quadratic-vdm", quadratic(), Algorithm::Vdm, Some(quadratic_grid()), 0),
            case("quadratic-ybt", quadratic(), Algorithm::Ybt, Some(quadratic_grid()), 0),
            case("quadratic-adagpr", quadratic(), Algorithm::AdaGpr, None, 5),
        ],
        "flash" => vec![
            case("meoh-water-vdm", water(), Algorithm::Vdm, flash(), 0),
            case("meoh-water-ybt", water(), Algorithm::Ybt, flash(), 0),
            case("meoh-water-adagpr", water(), Algorithm::AdaGpr, None, 50),
            case("meoh-acetone-ybt", acetone(), Algorithm::Ybt, flash(), 0),
        ],
        "yeast" => [SubstrateForm::AsPrinted, SubstrateForm::Classical]
            .into_iter()
            .flat_map(|form| {
                [
                    case(
                        format!("yeast-{form}-ybt"),
                        yeast(form),
                        Algorithm::Ybt,
                        Some(GridSpec::Preset(GridPreset::Yeast)),
                        0,
                    ),
                    case(
                        format!("yeast-{form}-adagpr"),
                        yeast(form),
                        Algorithm::AdaGpr,
                        None,
                        200,
                    ),
                ]
            })
            .collect(),
        "all" => ["quadratic", "flash", "yeast"]
            .iter()
            .flat_map(|s| suite(s).unwrap())
            .collect(),
        _ => return None,
    })
}

pub fn run_case(case: &BenchCase) -> Result<BenchResult, CliError> {
    let t = Instant::now();
    let report = execute(&case.config)?;
    Ok(BenchResult {
        case: case.clone(),
        report,
        seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn results_csv(results: &[BenchResult]) -> Result<String, CliError> {
    let mut out = String::from(
        "case,model,algorithm,criterion,objective,iterations,jacobian_evaluations,support_points,termination,seconds\n",
    );
    for r in results {
        let s = Summary::new(&r.report, r.case.config.model.id())?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.3}",
            r.case.name,
            s.model,
            s.algorithm,
            s.criterion,
            s.objective,
            s.iterations,
            s.jacobian_evaluations,
            s.support_points,
            serde_json::to_value(s.termination).unwrap().as_str().unwrap(),
            r.seconds
        )
        .unwrap();
    }
    Ok(out)
}

/// Runs every case of `name` with the given seed, writing one report
/// directory per case and `bench.csv` under `out`.
pub fn run_suite(name: &str, seed: u64, out: &Path) -> Result<Vec<BenchResult>, CliError> {
    let cases = suite(name).ok_or_else(|| {
        CliError::Validation(format!(
            "unknown bench suite {name:?}; expected one of {}",
            SUITES.join(", ")
        ))
    })?;
    let mut results = Vec::with_capacity(cases.len());
    for mut c in cases {
        c.config.seed = seed;
        c.config.output_dir = out.join(&c.name);
        log::info!("running {}", c.name);
        let r = run_case(&c)?;
        emit_report(&r.report, &c.config, &c.config.output_dir)?;
        results.push(r);
    }
    let path = out.join("bench.csv");
    fs::write(&path, results_csv(&results)?).map_err(|source| CliError::Io { path, source })?;
    Ok(results)
}
