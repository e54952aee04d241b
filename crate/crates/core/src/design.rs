//! Designs, Fisher information, design criteria and directional derivatives.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{OedError, Result};

/// `M` counts as invertible when `lambda_min / lambda_max` exceeds this.
pub const INVERTIBILITY_RATIO: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues within this relative distance of the smallest one are treated
/// as the same eigenvalue by the E-criterion derivative.
const E_MULTIPLICITY_GAP: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(pub Vec<f64>);

impl DesignPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        DesignPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &DesignPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for DesignPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for DesignPoint {
    fn from(v: Vec<f64>) -> Self {
        DesignPoint(v)
    }
}

/// A continuous design: design points with non-negative weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    points: Vec<DesignPoint>,
    weights: Vec<f64>,
}

impl Design {
    /// Validates and renormalises. Weights may be off from unit sum by 1e-9
    /// (accumulated rounding); anything worse is rejected.
    pub fn new(points: Vec<DesignPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(OedError::InvalidInput(format!(
                "{} design points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(OedError::InvalidInput("empty design".into()));
        }
        let dim = points[0].dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(OedError::InvalidInput("design points differ in dimension".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(OedError::InvalidInput("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(OedError::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Design { points, weights })
    }

    pub fn uniform(points: Vec<DesignPoint>) -> Result<Self> {
        let n = points.len().max(1);
        let w = vec![1.0 / n as f64; points.len()];
        Design::new(points, w)
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DesignPoint, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Drops points whose weight is below `min_weight` and renormalises.
    /// The heaviest point always survives.
    pub fn pruned(&self, min_weight: f64) -> Design {
        let heaviest = self
            .weights
            .iter()
            .enumerate()
            .fold(0, |best, (i, &w)| if w > self.weights[best] { i } else { best });
        let (points, weights): (Vec<_>, Vec<_>) = self
            .iter()
            .enumerate()
            .filter(|(i, (_, w))| *w >= min_weight || *i == heaviest)
            .map(|(_, (p, w))| (p.clone(), w))
            .unzip();
        let total: f64 = weights.iter().sum();
        Design {
            points,
            weights: weights.into_iter().map(|w| w / total).collect(),
        }
    }

    /// Applies `f` to every point, keeping weights.
    pub fn map_points<F: Fn(&DesignPoint) -> DesignPoint>(&self, f: F) -> Design {
        Design {
            points: self.points.iter().map(f).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Symmetric positive semi-definite `d_theta x d_theta` information matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherMatrix(DMatrix<f64>);

impl FisherMatrix {
    /// Checks shape, finiteness and symmetry, then stores the symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(OedError::InvalidInput(format!(
                "Fisher matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(OedError::InvalidInput("Fisher matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(OedError::InvalidInput(format!(
                "Fisher matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(FisherMatrix::symmetrized(m))
    }

    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let s = (&m + m.transpose()) * 0.5;
        FisherMatrix(s)
    }

    pub fn zeros(dim: usize) -> Self {
        FisherMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        FisherMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        FisherMatrix(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Column-major entries.
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn scaled(&self, c: f64) -> Self {
        FisherMatrix(&self.0 * c)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn is_invertible(&self) -> bool {
        Spectrum::of(self).is_invertible()
    }

    /// `log10 det M`, the objective reported for D-type criteria.
    pub fn log10_det(&self) -> Result<f64> {
        let s = Spectrum::of(self);
        s.require_invertible()?;
        Ok(s.ln_det() / std::f64::consts::LN_10)
    }
}

/// Measurement-error covariance and its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaEps {
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl SigmaEps {
    pub fn identity(dim: usize) -> Self {
        SigmaEps {
            covariance: DMatrix::identity(dim, dim),
            precision: DMatrix::identity(dim, dim),
        }
    }

    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() || covariance.nrows() == 0 {
            return Err(OedError::InvalidInput("measurement covariance must be square".into()));
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(OedError::InvalidInput(
                "measurement covariance has non-finite entries".into(),
            ));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > SYMMETRY_TOL * covariance.amax().max(f64::MIN_POSITIVE) {
            return Err(OedError::InvalidInput("measurement covariance is not symmetric".into()));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| OedError::InvalidInput("measurement covariance is not positive definite".into()))?;
        let precision = chol.inverse();
        let precision = (&precision + precision.transpose()) * 0.5;
        Ok(SigmaEps { covariance, precision })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

/// Design criterion. All criteria are minimised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    /// `tr(M^-1)`
    A,
    /// `det(M)^-1`
    D,
    /// `-ln det(M)`
    #[serde(rename = "logD")]
    LogD,
    /// `1 / lambda_min(M)`
    E,
}

impl Criterion {
    /// D and log-D share minimisers and directional derivative.
    pub fn is_d_family(self) -> bool {
        matches!(self, Criterion::D | Criterion::LogD)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::A => "A",
            Criterion::D => "D",
            Criterion::LogD => "logD",
            Criterion::E => "E",
        })
    }
}

impl FromStr for Criterion {
    type Err = OedError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Criterion::A),
            "D" | "d" => Ok(Criterion::D),
            "logD" | "logd" | "log-D" => Ok(Criterion::LogD),
            "E" | "e" => Ok(Criterion::E),
            other => Err(OedError::InvalidInput(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Eigen-decomposition of an information matrix, ascending eigenvalues.
pub(crate) struct Spectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl Spectrum {
    pub(crate) fn of(m: &FisherMatrix) -> Self {
        let eig = SymmetricEigen::new(m.0.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(m.dim(), m.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        Spectrum { values, vectors }
    }

    fn min(&self) -> f64 {
        self.values[0]
    }

    fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub(crate) fn is_invertible(&self) -> bool {
        let max = self.max();
        max > 0.0 && self.min() > INVERTIBILITY_RATIO * max
    }

    fn require_invertible(&self) -> Result<()> {
        if self.is_invertible() {
            Ok(())
        } else {
            Err(OedError::SingularInformation(format!(
                "eigenvalue range [{:e}, {:e}]",
                self.min(),
                self.max()
            )))
        }
    }

    fn ln_det(&self) -> f64 {
        self.values.iter().map(|v| v.ln()).sum()
    }

    /// `V diag(f(lambda)) V^T`
    fn reconstruct<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        let d = self.values.len();
        let mut out = DMatrix::zeros(d, d);
        for (k, &lambda) in self.values.iter().enumerate() {
            let v = self.vectors.column(k);
            out += (v * v.transpose()) * f(lambda);
        }
        (&out + out.transpose()) * 0.5
    }
}

/// `mu(x) = J Sigma^-1 J^T`, with the Jacobian stored `d_theta x d_y`.
pub fn fisher_at_point(jacobian: &DMatrix<f64>, sigma: &SigmaEps) -> Result<FisherMatrix> {
    if jacobian.iter().any(|v| !v.is_finite()) {
        return Err(OedError::InvalidInput("Jacobian has non-finite entries".into()));
    }
    if jacobian.ncols() != sigma.dim() {
        return Err(OedError::InvalidInput(format!(
            "Jacobian has {} output columns, measurement covariance is {}x{}",
            jacobian.ncols(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    if jacobian.nrows() == 0 {
        return Err(OedError::InvalidInput("Jacobian has no parameter rows".into()));
    }
    let mu = jacobian * sigma.precision() * jacobian.transpose();
    Ok(FisherMatrix::symmetrized(mu))
}

/// `sum_i w_i mu_i`
pub fn weighted_information(weights: &[f64], mus: &[FisherMatrix]) -> Result<FisherMatrix> {
    if weights.len() != mus.len() {
        return Err(OedError::InvalidInput(format!(
            "{} weights but {} Fisher matrices",
            weights.len(),
            mus.len()
        )));
    }
    let Some(first) = mus.first() else {
        return Err(OedError::InvalidInput("no Fisher matrices".into()));
    };
    let d = first.dim();
    let mut m = DMatrix::zeros(d, d);
    for (w, mu) in weights.iter().zip(mus) {
        if mu.dim() != d {
            return Err(OedError::InvalidInput("Fisher matrices differ in dimension".into()));
        }
        if *w != 0.0 {
            m += &mu.0 * *w;
        }
    }
    Ok(FisherMatrix(m))
}

pub fn information_matrix(design: &Design, mus: &[FisherMatrix]) -> Result<FisherMatrix> {
    weighted_information(design.weights(), mus)
}

pub fn criterion_value(m: &FisherMatrix, c: Criterion) -> Result<f64> {
    let s = Spectrum::of(m);
    match c {
        Criterion::E => {
            if s.is_invertible() {
                Ok(1.0 / s.min())
            } else {
                Ok(f64::INFINITY)
            }
        }
        Criterion::A => {
            s.require_invertible()?;
            Ok(s.values.iter().map(|v| 1.0 / v).sum())
        }
        Criterion::D => {
            s.require_invertible()?;
            Ok((-s.ln_det()).exp())
        }
        Criterion::LogD => {
            s.require_invertible()?;
            Ok(-s.ln_det())
        }
    }
}

/// The directional derivative `phi(xi, x)` of a fixed design, in the form
/// `constant - <weight, mu(x)>` shared by all supported criteria.
///
/// * D, log-D: `d_theta - tr(M^-1 mu)`
/// * A: `tr(M^-1) - tr(M^-2 mu)`
/// * E: `lambda_min - sum_i pi_i P_i^T mu P_i`, with equal `pi_i` over the
///   eigenvectors of the smallest eigenvalue.
#[derive(Clone, Debug)]
pub struct DirectionalDerivative {
    criterion: Criterion,
    constant: f64,
    weight: DMatrix<f64>,
}

impl DirectionalDerivative {
    pub fn new(m: &FisherMatrix, criterion: Criterion) -> Result<Self> {
        let s = Spectrum::of(m);
        s.require_invertible()?;
        let d = m.dim();
        let (constant, weight) = match criterion {
            Criterion::D | Criterion::LogD => (d as f64, s.reconstruct(|l| 1.0 / l)),
            Criterion::A => (s.values.iter().map(|l| 1.0 / l).sum(), s.reconstruct(|l| 1.0 / (l * l))),
            Criterion::E => {
                let lmin = s.min();
                let mult = s
                    .values
                    .iter()
                    .take_while(|&&l| l - lmin <= E_MULTIPLICITY_GAP * lmin.abs())
                    .count();
                let mut w = DMatrix::zeros(d, d);
                for k in 0..mult {
                    let v = s.vectors.column(k);
                    w += (v * v.transpose()) / mult as f64;
                }
                (lmin, (&w + w.transpose()) * 0.5)
            }
        };
        Ok(DirectionalDerivative {
            criterion,
            constant,
            weight,
        })
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn at(&self, mu: &FisherMatrix) -> f64 {
        self.at_slice(mu.as_slice())
    }

    /// Same as [`at`](Self::at) on a column-major `d x d` slice.
    #[inline]
    pub fn at_slice(&self, mu: &[f64]) -> f64 {
        let inner: f64 = self.weight.as_slice().iter().zip(mu).map(|(g, m)| g * m).sum();
        self.constant - inner
    }
}

pub fn directional_derivative(m: &FisherMatrix, mu_x: &FisherMatrix, c: Criterion) -> Result<f64> {
    if m.dim() != mu_x.dim() {
        return Err(OedError::InvalidInput("Fisher matrices differ in dimension".into()));
    }
    Ok(DirectionalDerivative::new(m, c)?.at(mu_x))
}

/// Minimum of `phi(xi, .)` over the candidates and its first argmin.
pub fn optimality_gap(
    design: &Design,
    support_mus: &[FisherMatrix],
    candidate_mus: &[FisherMatrix],
    c: Criterion,
) -> Result<(f64, usize)> {
    if candidate_mus.is_empty() {
        return Err(OedError::InvalidInput("empty candidate set".into()));
    }
    let m = information_matrix(design, support_mus)?;
    let phi = DirectionalDerivative::new(&m, c)?;
    Ok(argmin(candidate_mus.iter().map(|mu| phi.at(mu))))
}

/// `(min, index)`; the lowest index wins ties, NaN never wins.
pub(crate) fn argmin<I: IntoIterator<Item = f64>>(values: I) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.0 {
            best = (v, i);
        }
    }
    best
}
