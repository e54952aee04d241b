//! Gaussian-process regression with a squared-exponential kernel and a white
//! noise term on the training diagonal.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::bounded::{minimize, BoundedOptions};
use crate::error::{OedError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-6, 1e6);
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const DEFAULT_ALPHA: f64 = 1e-6;
const RESTARTS: usize = 5;
const CV_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub alpha: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscale: f64, alpha: f64) -> Self {
        KernelParams {
            signal_variance,
            lengthscale,
            alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.lengthscale > 0.0 && self.alpha >= 0.0)
            || !self.signal_variance.is_finite()
            || !self.lengthscale.is_finite()
            || !self.alpha.is_finite()
        {
            return Err(OedError::InvalidInput(format!("invalid kernel parameters {self:?}")));
        }
        Ok(())
    }
}

/// The 21 white-noise levels searched by cross-validation: `10^(-10 + k/2)`.
pub fn alpha_grid() -> Vec<f64> {
    (0..=20).map(|k| 10f64.powf(-10.0 + 0.5 * k as f64)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn check_points(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map_or(0, Vec::len);
    if x.iter().any(|p| p.len() != d) {
        return Err(OedError::InvalidInput("training points differ in dimension".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(OedError::InvalidInput("non-finite training input".into()));
    }
    Ok(d)
}

/// `sigma_f^2 exp(-|a_i - b_j|^2 / 2 l^2)`; the noise term is not included.
pub fn kernel_matrix(xa: &[Vec<f64>], xb: &[Vec<f64>], p: &KernelParams) -> Mat<f64> {
    let s = -0.5 / (p.lengthscale * p.lengthscale);
    Mat::from_fn(xa.len(), xb.len(), |i, j| {
        p.signal_variance * (s * sq_dist(&xa[i], &xb[j])).exp()
    })
}

fn pairwise_sq_dists(x: &[Vec<f64>]) -> Mat<f64> {
    Mat::from_fn(x.len(), x.len(), |i, j| sq_dist(&x[i], &x[j]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
    pub mean_gradient: Vec<f64>,
    pub variance_gradient: Vec<f64>,
}

/// A fitted GP. Immutable; posterior queries take `&self`.
#[derive(Clone, Debug)]
pub struct GpState {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    params: KernelParams,
    /// `(K + alpha I)^-1 (y - mean)`
    coef: Vec<f64>,
    /// Lower Cholesky factor of `K + alpha I`, column-major.
    chol: Vec<f64>,
}

impl GpState {
    /// Fits to centred targets. Fails with [`OedError::SingularKernel`] when
    /// `K + alpha I` is not numerically positive definite.
    pub fn fit(x: &[Vec<f64>], y: &[f64], p: KernelParams) -> Result<GpState> {
        let offset = y.iter().sum::<f64>() / y.len().max(1) as f64;
        GpState::fit_with_offset(x, y, p, offset)
    }

    /// Fits with a fixed constant prior mean instead of the target average.
    pub fn fit_with_offset(x: &[Vec<f64>], y: &[f64], p: KernelParams, offset: f64) -> Result<GpState> {
        p.validate()?;
        if x.is_empty() || x.len() != y.len() {
            return Err(OedError::InvalidInput(format!(
                "{} inputs but {} targets",
                x.len(),
                y.len()
            )));
        }
        check_points(x)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OedError::InvalidInput("non-finite training target".into()));
        }
        let n = x.len();
        let y_mean = offset;
        let mut k = kernel_matrix(x, x, &p);
        for i in 0..n {
            k[(i, i)] += p.alpha;
        }
        let llt = k.llt(Side::Lower).map_err(|_| OedError::SingularKernel)?;
        let l = llt.L();
        let mut chol = vec![0.0; n * n];
        for j in 0..n {
            for i in j..n {
                chol[j * n + i] = l[(i, j)];
            }
        }
        if (0..n).any(|i| !(chol[i * n + i] > 0.0) || !chol[i * n + i].is_finite()) {
            return Err(OedError::SingularKernel);
        }
        let mut coef: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        forward(&chol, n, &mut coef);
        backward(&chol, n, &mut coef);
        Ok(GpState {
            x: x.to_vec(),
            y: y.to_vec(),
            y_mean,
            params: p,
            coef,
            chol,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        let s = -0.5 / (self.params.lengthscale * self.params.lengthscale);
        let dot: f64 = self
            .x
            .iter()
            .zip(&self.coef)
            .map(|(xi, c)| c * self.params.signal_variance * (s * sq_dist(x, xi)).exp())
            .sum();
        self.y_mean + dot
    }

    pub fn posterior(&self, x: &[f64]) -> Posterior {
        let n = self.x.len();
        let d = x.len();
        let p = &self.params;
        let inv_l2 = 1.0 / (p.lengthscale * p.lengthscale);
        let kx: Vec<f64> = self
            .x
            .iter()
            .map(|xi| p.signal_variance * (-0.5 * inv_l2 * sq_dist(x, xi)).exp())
            .collect();
        let mean = self.y_mean + kx.iter().zip(&self.coef).map(|(k, c)| k * c).sum::<f64>();
        let mut v = kx.clone();
        forward(&self.chol, n, &mut v);
        let raw_var = p.signal_variance - v.iter().map(|z| z * z).sum::<f64>();
        backward(&self.chol, n, &mut v);
        // d k_i / dx = -k_i (x - x_i) / l^2
        let mut mean_gradient = vec![0.0; d];
        let mut variance_gradient = vec![0.0; d];
        for i in 0..n {
            let wm = -kx[i] * inv_l2 * self.coef[i];
            let wv = 2.0 * kx[i] * inv_l2 * v[i];
            for (k, (&xk, &xik)) in x.iter().zip(&self.x[i]).enumerate() {
                let diff = xk - xik;
                mean_gradient[k] += wm * diff;
                variance_gradient[k] += wv * diff;
            }
        }
        let variance = if raw_var > 0.0 {
            raw_var
        } else {
            variance_gradient.iter_mut().for_each(|g| *g = 0.0);
            0.0
        };
        Posterior {
            mean,
            variance,
            mean_gradient,
            variance_gradient,
        }
    }
}

/// Solves `L z = b` in place.
fn forward(l: &[f64], n: usize, b: &mut [f64]) {
    for j in 0..n {
        let col = &l[j * n..(j + 1) * n];
        b[j] /= col[j];
        let bj = b[j];
        for i in (j + 1)..n {
            b[i] -= col[i] * bj;
        }
    }
}

/// Solves `L^T z = b` in place.
fn backward(l: &[f64], n: usize, b: &mut [f64]) {
    for j in (0..n).rev() {
        let col = &l[j * n..(j + 1) * n];
        let s: f64 = ((j + 1)..n).map(|i| col[i] * b[i]).sum();
        b[j] = (b[j] - s) / col[j];
    }
}

/// `-1/2 y^T (K + alpha I)^-1 y - 1/2 ln det(K + alpha I) - n/2 ln 2 pi`, on
/// the targets as given (no centring).
pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], p: &KernelParams) -> Result<f64> {
    p.validate()?;
    check_points(x)?;
    if x.len() != y.len() || x.is_empty() {
        return Err(OedError::InvalidInput(format!(
            "{} inputs but {} targets",
            x.len(),
            y.len()
        )));
    }
    let d2 = pairwise_sq_dists(x);
    lml(&d2, y, p.signal_variance.ln(), p.lengthscale.ln(), p.alpha, false).map(|(v, _)| v)
}

/// Log marginal likelihood and its gradient with respect to
/// `(ln sigma_f^2, ln l)`.
fn lml(d2: &Mat<f64>, y: &[f64], ln_sf2: f64, ln_l: f64, alpha: f64, grad: bool) -> Result<(f64, [f64; 2])> {
    let n = y.len();
    let sf2 = ln_sf2.exp();
    let inv_2l2 = 0.5 * (-2.0 * ln_l).exp();
    let r = Mat::from_fn(n, n, |i, j| (-inv_2l2 * d2[(i, j)]).exp());
    let k = Mat::from_fn(n, n, |i, j| sf2 * r[(i, j)] + if i == j { alpha } else { 0.0 });
    let llt = k.llt(Side::Lower).map_err(|_| OedError::SingularKernel)?;
    let l = llt.L();
    let mut a = Mat::from_fn(n, 1, |i, _| y[i]);
    l.solve_lower_triangular_in_place(a.as_mut());
    let fit: f64 = (0..n).map(|i| a[(i, 0)] * a[(i, 0)]).sum();
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    let value = -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
    if !value.is_finite() {
        return Err(OedError::SingularKernel);
    }
    if !grad {
        return Ok((value, [0.0; 2]));
    }
    l.transpose().solve_upper_triangular_in_place(a.as_mut());
    let kinv = llt.inverse();
    // dL/dt = 1/2 tr((a a^T - K^-1) dK/dt)
    let (mut g_sf, mut g_l) = (0.0, 0.0);
    for j in 0..n {
        let aj = a[(j, 0)];
        for i in 0..n {
            let w = a[(i, 0)] * aj - kinv[(i, j)];
            let dk = sf2 * r[(i, j)];
            g_sf += w * dk;
            g_l += w * dk * 2.0 * inv_2l2 * d2[(i, j)];
        }
    }
    Ok((value, [0.5 * g_sf, 0.5 * g_l]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperSelection {
    pub params: KernelParams,
    /// Set when every restart failed and the defaults were returned.
    pub fallback: bool,
}

/// Maximises the log marginal likelihood of the centred targets over
/// `(sigma_f^2, l)` with `alpha` fixed, from 5 deterministic log-space
/// starts. `warm` replaces the first start.
pub fn select_hypers(x: &[Vec<f64>], y: &[f64], alpha: f64, warm: Option<&KernelParams>) -> Result<HyperSelection> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(OedError::InvalidInput(
            "hyper-parameter selection needs at least two points".into(),
        ));
    }
    let d = check_points(x)?;
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let var = yc.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let d2 = pairwise_sq_dists(x);

    let lo = [SIGNAL_VARIANCE_BOUNDS.0.ln(), LENGTHSCALE_BOUNDS.0.ln()];
    let hi = [SIGNAL_VARIANCE_BOUNDS.1.ln(), LENGTHSCALE_BOUNDS.1.ln()];
    let sf0 = var.clamp(SIGNAL_VARIANCE_BOUNDS.0, SIGNAL_VARIANCE_BOUNDS.1).ln();
    let span = (d.max(1) as f64).sqrt();
    let mut starts: Vec<[f64; 2]> = [0.3, 0.1, 1.0, 0.03, 3.0]
        .iter()
        .map(|f: &f64| [sf0, (f * span).ln()])
        .collect();
    if let Some(w) = warm {
        starts[0] = [w.signal_variance.ln(), w.lengthscale.ln()];
    }
    debug_assert_eq!(starts.len(), RESTARTS);

    let opts = BoundedOptions {
        max_iterations: 100,
        gtol: 1e-6,
        ftol: 1e-10,
    };
    let mut best: Option<([f64; 2], f64)> = None;
    for s in &starts {
        let objective = |t: &[f64]| match lml(&d2, &yc, t[0], t[1], alpha, true) {
            Ok((v, g)) => (-v, vec![-g[0], -g[1]]),
            Err(_) => (f64::INFINITY, vec![0.0, 0.0]),
        };
        let r = minimize(objective, s, &lo, &hi, &opts);
        if r.value.is_finite() && best.is_none_or(|(_, b)| r.value < b) {
            best = Some(([r.x[0], r.x[1]], r.value));
        }
    }
    Ok(match best {
        Some((t, _)) => HyperSelection {
            params: KernelParams::new(t[0].exp(), t[1].exp(), alpha),
            fallback: false,
        },
        None => {
            log::warn!("hyper-parameter selection failed from every start; using defaults");
            HyperSelection {
                params: KernelParams::new(var.max(SIGNAL_VARIANCE_BOUNDS.0), 1.0, alpha),
                fallback: true,
            }
        }
    })
}

/// Training inputs, training targets and held-out indices.
type Fold = (Vec<Vec<f64>>, Vec<f64>, Vec<usize>);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaSelection {
    pub alpha: f64,
    /// Set when there were too few points and the default was returned.
    pub fallback: bool,
}

/// Picks the white-noise level from [`alpha_grid`] by 5-fold cross-validated
/// mean squared error, with `(sigma_f^2, l)` taken from `params`. Fold `f`
/// holds the points with index `i % 5 == f`. Ties go to the larger alpha.
pub fn select_alpha_cv_with(x: &[Vec<f64>], y: &[f64], params: &KernelParams) -> Result<AlphaSelection> {
    if x.len() != y.len() {
        return Err(OedError::InvalidInput(format!(
            "{} inputs but {} targets",
            x.len(),
            y.len()
        )));
    }
    check_points(x)?;
    let n = x.len();
    if n < CV_FOLDS {
        log::warn!("alpha cross-validation needs {CV_FOLDS} points, got {n}; using {DEFAULT_ALPHA}");
        return Ok(AlphaSelection {
            alpha: DEFAULT_ALPHA,
            fallback: true,
        });
    }
    let folds: Vec<Fold> = (0..CV_FOLDS)
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|i| i % CV_FOLDS != f).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % CV_FOLDS == f).collect();
            (
                train.iter().map(|&i| x[i].clone()).collect(),
                train.iter().map(|&i| y[i]).collect(),
                test,
            )
        })
        .collect();
    let mut best = (f64::INFINITY, DEFAULT_ALPHA);
    let mut any = false;
    for alpha in alpha_grid() {
        let p = KernelParams { alpha, ..*params };
        let mut sse = 0.0;
        let mut ok = true;
        for (tx, ty, test) in &folds {
            match GpState::fit(tx, ty, p) {
                Ok(gp) => {
                    for &i in test {
                        let e = gp.mean(&x[i]) - y[i];
                        sse += e * e;
                    }
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        let mse = sse / n as f64;
        if ok && mse.is_finite() && mse <= best.0 {
            best = (mse, alpha);
            any = true;
        }
    }
    if !any {
        log::warn!("no alpha in the grid gave a usable fit; using the largest");
        return Ok(AlphaSelection {
            alpha: *alpha_grid().last().unwrap(),
            fallback: true,
        });
    }
    Ok(AlphaSelection {
        alpha: best.1,
        fallback: false,
    })
}

/// [`select_alpha_cv_with`] using hyper-parameters chosen at the default alpha.
pub fn select_alpha_cv(x: &[Vec<f64>], y: &[f64]) -> Result<AlphaSelection> {
    if x.len() < CV_FOLDS {
        return select_alpha_cv_with(x, y, &KernelParams::new(1.0, 1.0, DEFAULT_ALPHA));
    }
    let params = select_hypers(x, y, DEFAULT_ALPHA, None)?.params;
    select_alpha_cv_with(x, y, &params)
}
