//! Forward models `f(x, theta)`, their parameter Jacobians and evaluation
//! accounting.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OedError, Result};

pub mod flash;
pub mod yeast;

pub use flash::{flash_grid, FlashModel, FlashSystem, NrtlParams, SubstanceParams};
pub use yeast::{yeast_grid, SubstrateForm, YeastModel, YeastParams};

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(OedError::InvalidInput(
                "bounds must be non-empty and of equal length".into(),
            ));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(OedError::InvalidInput(format!("invalid bound pair [{l}, {u}]")));
            }
        }
        Ok(Bounds { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }

    /// Inverse of [`Bounds::to_unit`]; endpoints map exactly onto the bounds.
    pub fn from_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| if *t == 1.0 { *u } else { l + t * (u - l) })
            .collect()
    }
}

/// A forward model. Implementations must be pure.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;
    fn bounds(&self) -> &Bounds;
    fn output_dim(&self) -> usize;
    fn theta(&self) -> &[f64];
    fn eval(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>>;

    /// `d_theta x d_y` Jacobian at the nominal parameters, if known in closed form.
    fn analytic_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn input_dim(&self) -> usize {
        self.bounds().dim()
    }

    fn param_dim(&self) -> usize {
        self.theta().len()
    }
}

/// A shared model with evaluation counters.
#[derive(Clone)]
pub struct ModelHandle {
    model: Arc<dyn Model>,
    counters: Arc<Counters>,
}

#[derive(Default)]
struct Counters {
    evals: AtomicU64,
    jacobians: AtomicU64,
}

impl std::fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelHandle")
            .field("model", &self.model.name())
            .field("evals", &self.model_evals())
            .field("jacobians", &self.jacobian_evals())
            .finish()
    }
}

impl ModelHandle {
    pub fn new<M: Model + 'static>(model: M) -> Self {
        ModelHandle {
            model: Arc::new(model),
            counters: Arc::default(),
        }
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    pub fn bounds(&self) -> &Bounds {
        self.model.bounds()
    }

    pub fn theta(&self) -> &[f64] {
        self.model.theta()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.model.param_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.model.output_dim()
    }

    pub fn model_evals(&self) -> u64 {
        self.counters.evals.load(Ordering::Relaxed)
    }

    pub fn jacobian_evals(&self) -> u64 {
        self.counters.jacobians.load(Ordering::Relaxed)
    }

    /// `f(x, theta)`, counted as one model evaluation.
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.counters.evals.fetch_add(1, Ordering::Relaxed);
        let y = self.model.eval(x, theta)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OedError::NonFiniteModel(format!("{} at x = {x:?}", self.model.name())));
        }
        Ok(y)
    }

    /// Parameter Jacobian at the nominal estimate: analytic when the model
    /// provides one, central differences otherwise. Counts one Jacobian
    /// evaluation either way.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if let Some(j) = self.model.analytic_jacobian(x) {
            self.counters.jacobians.fetch_add(1, Ordering::Relaxed);
            if j.iter().any(|v| !v.is_finite()) {
                return Err(OedError::NonFiniteModel(format!(
                    "{} Jacobian at x = {x:?}",
                    self.model.name()
                )));
            }
            return Ok(j);
        }
        fd_jacobian(self, x)
    }
}

/// Central-difference Jacobian `d_theta x d_y` with steps
/// `h_j = 1e-6 max(1, |theta_j|)`.
pub fn fd_jacobian(model: &ModelHandle, x: &[f64]) -> Result<DMatrix<f64>> {
    model.counters.jacobians.fetch_add(1, Ordering::Relaxed);
    let theta = model.theta().to_vec();
    let (p, q) = (theta.len(), model.output_dim());
    let mut jac = DMatrix::zeros(p, q);
    let mut t = theta.clone();
    for j in 0..p {
        let h = 1e-6 * theta[j].abs().max(1.0);
        t[j] = theta[j] + h;
        let plus = model.eval(x, &t).map_err(|e| perturbation_error(e, j, '+'))?;
        t[j] = theta[j] - h;
        let minus = model.eval(x, &t).map_err(|e| perturbation_error(e, j, '-'))?;
        t[j] = theta[j];
        if plus.len() != q || minus.len() != q {
            return Err(OedError::InvalidInput(format!(
                "model returned {} outputs, expected {q}",
                plus.len()
            )));
        }
        for k in 0..q {
            jac[(j, k)] = (plus[k] - minus[k]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn perturbation_error(e: OedError, j: usize, sign: char) -> OedError {
    match e {
        OedError::NonFiniteModel(m) => OedError::NonFiniteModel(format!("{m} (theta[{j}] {sign} h)")),
        other => other,
    }
}

/// `f(x, theta) = theta_0 + theta_1 x + theta_2 x^2` on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    bounds: Bounds,
    theta: Vec<f64>,
}

impl QuadraticModel {
    pub fn new(theta: [f64; 3]) -> Self {
        QuadraticModel {
            bounds: Bounds::new(vec![-1.0], vec![1.0]).expect("static bounds"),
            theta: theta.to_vec(),
        }
    }

    pub fn with_bounds(theta: [f64; 3], lower: f64, upper: f64) -> Result<Self> {
        Ok(QuadraticModel {
            bounds: Bounds::new(vec![lower], vec![upper])?,
            theta: theta.to_vec(),
        })
    }
}

impl Default for QuadraticModel {
    fn default() -> Self {
        QuadraticModel::new([1.0, 1.0, 1.0])
    }
}

pub fn quadratic_model(x: f64, theta: &[f64; 3]) -> f64 {
    theta[0] + theta[1] * x + theta[2] * x * x
}

impl Model for QuadraticModel {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn eval(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![quadratic_model(x[0], &[theta[0], theta[1], theta[2]])])
    }

    fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_column_slice(3, 1, &[1.0, x[0], x[0] * x[0]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    struct Square;

    impl Model for Square {
        fn name(&self) -> &str {
            "square"
        }
        fn bounds(&self) -> &Bounds {
            static B: std::sync::OnceLock<Bounds> = std::sync::OnceLock::new();
            B.get_or_init(|| Bounds::new(vec![0.0], vec![1.0]).unwrap())
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn theta(&self) -> &[f64] {
            &[3.0]
        }
        fn eval(&self, _x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![theta[0] * theta[0]])
        }
    }

    struct Affine;

    impl Model for Affine {
        fn name(&self) -> &str {
            "affine"
        }
        fn bounds(&self) -> &Bounds {
            Square.bounds()
        }
        fn output_dim(&self) -> usize {
            2
        }
        fn theta(&self) -> &[f64] {
            &[0.3, -7.0, 120.0]
        }
        fn eval(&self, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![2.0 * t[0] - t[1] + x[0] * t[2], 5.0 + 0.5 * t[2]])
        }
    }

    struct Blowup;

    impl Model for Blowup {
        fn name(&self) -> &str {
            "blowup"
        }
        fn bounds(&self) -> &Bounds {
            Square.bounds()
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn theta(&self) -> &[f64] {
            &[1.0]
        }
        fn eval(&self, _x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![if t[0] > 1.0 { f64::NAN } else { t[0] }])
        }
    }

    #[test]
    fn fd_square() {
        let m = ModelHandle::new(Square);
        let j = fd_jacobian(&m, &[0.5]).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 6.0, epsilon = 1e-6);
        assert_eq!(m.jacobian_evals(), 1);
        assert_eq!(m.model_evals(), 2);
    }

    #[test]
    fn fd_affine_is_exact() {
        let m = ModelHandle::new(Affine);
        let j = m.jacobian(&[0.25]).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, -1.0, 0.0, 0.25, 0.5]);
        assert!((j - expected).amax() < 1e-8);
        assert_eq!(m.model_evals(), 6);
    }

    #[test]
    fn fd_constant_is_zero() {
        struct Constant;
        impl Model for Constant {
            fn name(&self) -> &str {
                "constant"
            }
            fn bounds(&self) -> &Bounds {
                Square.bounds()
            }
            fn output_dim(&self) -> usize {
                3
            }
            fn theta(&self) -> &[f64] {
                &[1.0, 2.0]
            }
            fn eval(&self, _x: &[f64], _t: &[f64]) -> Result<Vec<f64>> {
                Ok(vec![4.0, 5.0, 6.0])
            }
        }
        let j = fd_jacobian(&ModelHandle::new(Constant), &[0.0]).unwrap();
        assert_eq!(j, DMatrix::zeros(2, 3));
    }

    #[test]
    fn fd_reports_failing_perturbation() {
        let err = fd_jacobian(&ModelHandle::new(Blowup), &[0.0]).unwrap_err();
        match err {
            OedError::NonFiniteModel(m) => assert!(m.contains("theta[0] + h"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quadratic_values() {
        assert_eq!(quadratic_model(0.0, &[4.0, 9.0, 9.0]), 4.0);
        assert_eq!(quadratic_model(2.0, &[1.0, 1.0, 1.0]), 7.0);
        let m = ModelHandle::new(QuadraticModel::default());
        assert_eq!(m.jacobian(&[2.0]).unwrap().as_slice(), &[1.0, 2.0, 4.0]);
        assert_eq!(m.jacobian(&[0.0]).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(m.jacobian_evals(), 2);
        assert_eq!(m.model_evals(), 0);
    }

    #[test]
    fn bounds_round_trip() {
        let b = Bounds::new(vec![0.0, 0.5], vec![1.0, 5.0]).unwrap();
        assert_eq!(b.to_unit(&[0.25, 5.0]), vec![0.25, 1.0]);
        assert_eq!(b.from_unit(&[0.0, 1.0]), vec![0.0, 5.0]);
        assert!(b.contains(&[1.0, 0.5]));
        assert!(!b.contains(&[1.01, 0.5]));
        assert!(Bounds::new(vec![1.0], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn quadratic_jacobian_independent_of_theta(
            x in -1.0f64..1.0,
            a in proptest::array::uniform3(-5.0f64..5.0),
            b in proptest::array::uniform3(-5.0f64..5.0),
        ) {
            let ja = fd_jacobian(&ModelHandle::new(QuadraticModel::new(a)), &[x]).unwrap();
            let jb = fd_jacobian(&ModelHandle::new(QuadraticModel::new(b)), &[x]).unwrap();
            let exact = QuadraticModel::new(a).analytic_jacobian(&[x]).unwrap();
            prop_assert!((&ja - &jb).amax() < 1e-8);
            prop_assert!((&ja - &exact).amax() < 1e-8);
        }
    }
}
