use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::{
    argmin, fisher_at_point, weighted_information, DesignPoint, DirectionalDerivative, FisherMatrix, SigmaEps,
};
use crate::error::{OedError, Result};
use crate::models::ModelHandle;
use crate::parallel::Execution;

/// Fisher matrices of every grid point, computed once.
#[derive(Clone, Debug)]
pub struct GridInformation {
    points: Vec<DesignPoint>,
    flat: Vec<f64>,
    dim: usize,
}

const MAX_RESAMPLES: usize = 100;

impl GridInformation {
    /// One Jacobian per grid point. Fails on the first point the model cannot
    /// evaluate.
    pub fn compute(model: &ModelHandle, grid: &[DesignPoint], sigma: &SigmaEps, exec: Execution) -> Result<Self> {
        if grid.is_empty() {
            return Err(OedError::InvalidInput("empty grid".into()));
        }
        let dx = model.input_dim();
        if let Some(p) = grid.iter().find(|p| p.dim() != dx) {
            return Err(OedError::InvalidInput(format!(
                "grid point {:?} has dimension {}, model expects {dx}",
                p.0,
                p.dim()
            )));
        }
        let mus = exec.map(grid, |p| model.jacobian(p).and_then(|j| fisher_at_point(&j, sigma)));
        let dim = model.param_dim();
        let mut flat = Vec::with_capacity(grid.len() * dim * dim);
        for (mu, p) in mus.into_iter().zip(grid) {
            let mu = mu.map_err(|e| match e {
                OedError::InvalidInput(m) => OedError::InvalidInput(format!("{m} at grid point {:?}", p.0)),
                other => other,
            })?;
            flat.extend_from_slice(mu.as_slice());
        }
        Ok(GridInformation {
            points: grid.to_vec(),
            flat,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn param_dim(&self) -> usize {
        self.dim
    }

    pub fn mu_slice(&self, i: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.flat[i * dd..(i + 1) * dd]
    }

    pub fn mu(&self, i: usize) -> FisherMatrix {
        FisherMatrix::new(nalgebra::DMatrix::from_column_slice(
            self.dim,
            self.dim,
            self.mu_slice(i),
        ))
        .expect("stored Fisher matrices are valid")
    }

    pub fn mus(&self, idx: &[usize]) -> Vec<FisherMatrix> {
        idx.iter().map(|&i| self.mu(i)).collect()
    }

    /// `sum_k weights[k] mu(idx[k])`
    pub fn information(&self, idx: &[usize], weights: &[f64]) -> Result<FisherMatrix> {
        weighted_information(weights, &self.mus(idx))
    }

    /// Writes `phi` at every grid point into `out` and returns `(min, argmin)`.
    pub fn scan(&self, deriv: &DirectionalDerivative, exec: Execution, out: &mut Vec<f64>) -> (f64, usize) {
        out.resize(self.len(), 0.0);
        exec.fill(out, |i| deriv.at_slice(self.mu_slice(i)));
        argmin(out.iter().copied())
    }

    /// `n` distinct random grid indices whose uniform design has an
    /// invertible information matrix. Returns the indices and the number of
    /// rejected draws.
    pub(crate) fn random_start(&self, n: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
        if n > self.len() {
            return Err(OedError::InvalidInput(format!(
                "{n} initial points requested from a grid of {}",
                self.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = vec![1.0 / n as f64; n];
        for attempt in 0..=MAX_RESAMPLES {
            let mut idx = sample(&mut rng, self.len(), n).into_vec();
            idx.sort_unstable();
            if self.information(&idx, &w)?.is_invertible() {
                return Ok((idx, attempt));
            }
        }
        Err(OedError::Initialization(format!(
            "no invertible start among {} random draws of {n} grid points",
            MAX_RESAMPLES + 1
        )))
    }
}
