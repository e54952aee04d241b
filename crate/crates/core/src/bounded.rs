//! Box-constrained quasi-Newton minimisation (projected BFGS with an active
//! set and projected Armijo backtracking).

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundedOptions {
    pub max_iterations: usize,
    /// Stop when the projected gradient's largest entry is below this.
    pub gtol: f64,
    /// Stop when the relative decrease of `f` is below this.
    pub ftol: f64,
}

impl Default for BoundedOptions {
    fn default() -> Self {
        BoundedOptions {
            max_iterations: 200,
            gtol: 1e-8,
            ftol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundedResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut DVector<f64>, lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Gradient with components pointing out of the box at active bounds zeroed.
fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, lower: &[f64], upper: &[f64]) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        if (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0) {
            0.0
        } else {
            g[i]
        }
    })
}

/// Minimises `f` over `[lower, upper]` starting from `x0` (clamped first).
/// `f` returns the value and gradient. A non-finite value at a trial point is
/// treated as a failed step.
pub fn minimize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &BoundedOptions) -> BoundedResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    assert!(
        lower.len() == n && upper.len() == n,
        "bounds do not match the start point"
    );
    let mut x = DVector::from_column_slice(x0);
    project(&mut x, lower, upper);
    let (mut fx, g0) = f(x.as_slice());
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BoundedResult {
            x: x.as_slice().to_vec(),
            value: fx,
            iterations: 0,
            converged: false,
        };
    }

    for it in 0..opts.max_iterations {
        let pg = projected_gradient(&x, &g, lower, upper);
        if pg.amax() <= opts.gtol {
            return BoundedResult {
                x: x.as_slice().to_vec(),
                value: fx,
                iterations: it,
                converged: true,
            };
        }
        let free: Vec<bool> = (0..n).map(|i| pg[i] != 0.0 || g[i] == 0.0).collect();
        let mut d = -(&h * &pg);
        for i in 0..n {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        if d.dot(&pg) >= 0.0 {
            h.fill_with_identity();
            d = -pg.clone();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = &x + &d * t;
            project(&mut trial, lower, upper);
            let step = &trial - &x;
            if step.amax() == 0.0 {
                break;
            }
            let (ft, gt) = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * g.dot(&step) {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            return BoundedResult {
                x: x.as_slice().to_vec(),
                value: fx,
                iterations: it + 1,
                converged: false,
            };
        };
        if gn.iter().any(|v| !v.is_finite()) {
            return BoundedResult {
                x: xn.as_slice().to_vec(),
                value: fn_,
                iterations: it + 1,
                converged: false,
            };
        }

        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        let decrease = fx - fn_;
        x = xn;
        g = gn;
        let scale = fx.abs().max(fn_.abs()).max(1.0);
        fx = fn_;
        if decrease <= opts.ftol * scale {
            let pg = projected_gradient(&x, &g, lower, upper);
            return BoundedResult {
                x: x.as_slice().to_vec(),
                value: fx,
                iterations: it + 1,
                converged: pg.amax() <= opts.gtol.max(1e-5),
            };
        }
    }
    BoundedResult {
        x: x.as_slice().to_vec(),
        value: fx,
        iterations: opts.max_iterations,
        converged: false,
    }
}
