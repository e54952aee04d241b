//! Fed-batch baker's yeast fermentation over 20 h with piecewise-constant
//! controls on five 4 h segments.
//!
//! Design input `x = (y1_0, u1_0..u1_4, u2_0..u2_4)`; outputs are biomass
//! `y1` and substrate `y2` sampled every 2 h from t = 2 h to t = 20 h.

use serde::{Deserialize, Serialize};

use super::{Bounds, Model};
use crate::error::{OedError, Result};

pub const T_END: f64 = 20.0;
pub const SEGMENTS: usize = 5;
pub const SEGMENT_HOURS: f64 = 4.0;
pub const SAMPLE_HOURS: f64 = 2.0;
pub const DEFAULT_STEP: f64 = 0.01;

/// Which substrate equation to integrate. `AsPrinted` uses
/// `dy2/dt = -r u1 / theta3 + u1 (u2 - y2)`, `Classical` replaces `u1` in the
/// consumption term by `y1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstrateForm {
    #[default]
    AsPrinted,
    Classical,
}

impl std::fmt::Display for SubstrateForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SubstrateForm::AsPrinted => "as-printed",
            SubstrateForm::Classical => "classical",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YeastParams {
    pub theta: [f64; 4],
    pub y2_0: f64,
}

impl Default for YeastParams {
    fn default() -> Self {
        YeastParams {
            theta: [0.5; 4],
            y2_0: 0.1,
        }
    }
}

/// The control value at time `t` for pieces `[4j, 4(j + 1))`, closed at 20 h.
pub fn control_at(u: &[f64], t: f64) -> Result<f64> {
    if u.len() != SEGMENTS {
        return Err(OedError::InvalidInput(format!(
            "expected {SEGMENTS} control steps, got {}",
            u.len()
        )));
    }
    if !(0.0..=T_END).contains(&t) {
        return Err(OedError::Domain(format!("time {t} h outside [0, {T_END}]")));
    }
    let j = ((t / SEGMENT_HOURS).floor() as usize).min(SEGMENTS - 1);
    Ok(u[j])
}

#[inline]
fn rhs(y: [f64; 2], u1: f64, u2: f64, th: &[f64; 4], form: SubstrateForm) -> [f64; 2] {
    let r = th[0] * y[1] / (th[1] + y[1]);
    let consumption = match form {
        SubstrateForm::AsPrinted => r * u1 / th[2],
        SubstrateForm::Classical => r * y[0] / th[2],
    };
    [(r - u1 - th[3]) * y[0], -consumption + u1 * (u2 - y[1])]
}

#[inline]
fn rk4_step<F: Fn([f64; 2]) -> [f64; 2]>(f: &F, y: [f64; 2], h: f64) -> [f64; 2] {
    let k1 = f(y);
    let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// One classical RK4 step for a scalar ODE `y' = f(y)`.
pub fn rk4_scalar<F: Fn(f64) -> f64>(f: F, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

pub fn yeast_simulate(x: &[f64], p: &YeastParams, form: SubstrateForm) -> Result<Vec<f64>> {
    simulate_with_step(x, p, form, DEFAULT_STEP)
}

/// Integrates with fixed step `h`, which must divide 2 h evenly.
pub fn simulate_with_step(x: &[f64], p: &YeastParams, form: SubstrateForm, h: f64) -> Result<Vec<f64>> {
    if x.len() != 1 + 2 * SEGMENTS {
        return Err(OedError::InvalidInput(format!(
            "yeast input has {} entries, expected 11",
            x.len()
        )));
    }
    let per_sample = (SAMPLE_HOURS / h).round() as usize;
    if per_sample == 0 || ((per_sample as f64) * h - SAMPLE_HOURS).abs() > 1e-12 {
        return Err(OedError::InvalidInput(format!(
            "step {h} does not divide the sampling interval"
        )));
    }
    let (u1, u2) = (&x[1..1 + SEGMENTS], &x[1 + SEGMENTS..]);
    let samples_per_segment = (SEGMENT_HOURS / SAMPLE_HOURS) as usize;
    let n_samples = (T_END / SAMPLE_HOURS) as usize;
    let mut y = [x[0], p.y2_0];
    let mut out = vec![0.0; 2 * n_samples];
    for s in 0..n_samples {
        let j = s / samples_per_segment;
        let f = |y: [f64; 2]| rhs(y, u1[j], u2[j], &p.theta, form);
        for _ in 0..per_sample {
            y = rk4_step(&f, y, h);
        }
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(OedError::NonFiniteModel(format!(
                "yeast state diverged before t = {} h",
                (s + 1) as f64 * SAMPLE_HOURS
            )));
        }
        out[s] = y[0];
        out[n_samples + s] = y[1];
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct YeastModel {
    params: YeastParams,
    form: SubstrateForm,
    theta: Vec<f64>,
    bounds: Bounds,
}

impl YeastModel {
    pub fn new(params: YeastParams, form: SubstrateForm) -> Self {
        let mut lower = vec![1.0];
        let mut upper = vec![10.0];
        lower.extend([0.05; SEGMENTS]);
        upper.extend([0.2; SEGMENTS]);
        lower.extend([5.0; SEGMENTS]);
        upper.extend([35.0; SEGMENTS]);
        YeastModel {
            params,
            form,
            theta: params.theta.to_vec(),
            bounds: Bounds::new(lower, upper).expect("static bounds"),
        }
    }

    pub fn form(&self) -> SubstrateForm {
        self.form
    }
}

impl Model for YeastModel {
    fn name(&self) -> &str {
        "yeast"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn output_dim(&self) -> usize {
        2 * (T_END / SAMPLE_HOURS) as usize
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn eval(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let p = YeastParams {
            theta: [theta[0], theta[1], theta[2], theta[3]],
            y2_0: self.params.y2_0,
        };
        yeast_simulate(x, &p, self.form)
    }
}

/// `{1, 10} x {0.05, 0.2}^5 x {5, 20, 35}^5`, last coordinate fastest.
pub fn yeast_grid() -> Vec<Vec<f64>> {
    let mut levels: Vec<Vec<f64>> = vec![vec![1.0, 10.0]];
    levels.extend(std::iter::repeat_n(vec![0.05, 0.2], SEGMENTS));
    levels.extend(std::iter::repeat_n(vec![5.0, 20.0, 35.0], SEGMENTS));
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for lv in &levels {
        out = out
            .into_iter()
            .flat_map(|p| {
                lv.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fd_jacobian, ModelHandle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = YeastModel::new(YeastParams::default(), SubstrateForm::AsPrinted)
            .bounds()
            .clone();
        (0..11).map(|k| rng.random_range(b.lower()[k]..=b.upper()[k])).collect()
    }

    #[test]
    fn control_pieces() {
        let u = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(control_at(&u, 0.0).unwrap(), 1.0);
        assert_eq!(control_at(&u, 4.0).unwrap(), 2.0);
        assert_eq!(control_at(&u, 3.999).unwrap(), 1.0);
        assert_eq!(control_at(&u, 20.0).unwrap(), 5.0);
        assert!(matches!(control_at(&u, 20.5), Err(OedError::Domain(_))));
    }

    #[test]
    fn rk4_exponential_decay() {
        let y = rk4_scalar(|y| -y, 1.0, 0.1);
        assert!((y - 0.904_837_418_035_959_6).abs() < 1e-7);
    }

    #[test]
    fn decoupled_decay() {
        // theta1 = 0 kills growth, theta4 = 0 kills death: y1' = -c y1
        let p = YeastParams {
            theta: [0.0, 0.5, 0.5, 0.0],
            y2_0: 0.1,
        };
        let mut x = vec![4.0];
        x.extend([0.05; 5]);
        x.extend([20.0; 5]);
        for form in [SubstrateForm::AsPrinted, SubstrateForm::Classical] {
            let out = yeast_simulate(&x, &p, form).unwrap();
            let exact = 4.0 * (-1.0f64).exp();
            assert!((out[9] / exact - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn output_layout() {
        let mut x = vec![5.0];
        x.extend([0.1; 5]);
        x.extend([20.0; 5]);
        let out = yeast_simulate(&x, &YeastParams::default(), SubstrateForm::AsPrinted).unwrap();
        assert_eq!(out.len(), 20);
        // substrate is fed at u2 = 20 from 0.1, so it rises; biomass is the first block
        assert!(out[10] > 0.1);
        assert!(out[..10].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn biomass_positive_and_step_halving_converged() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let x = random_input(&mut rng);
            for form in [SubstrateForm::AsPrinted, SubstrateForm::Classical] {
                let coarse = yeast_simulate(&x, &YeastParams::default(), form).unwrap();
                let fine = simulate_with_step(&x, &YeastParams::default(), form, DEFAULT_STEP / 2.0).unwrap();
                for (a, b) in coarse.iter().zip(&fine) {
                    assert!((a - b).abs() / b.abs().max(1e-12) < 1e-6, "{form}: {a} vs {b}");
                }
                assert!(coarse[..10].iter().all(|v| *v > 0.0));
            }
        }
    }

    #[test]
    fn segment_split_invariance() {
        // integrating each 4 h segment separately must match the whole run
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_input(&mut rng);
        let p = YeastParams::default();
        let whole = yeast_simulate(&x, &p, SubstrateForm::Classical).unwrap();
        let mut y = [x[0], p.y2_0];
        let mut manual = Vec::new();
        for s in 0..10 {
            let j = s / 2;
            let t = 2.0 * s as f64;
            for k in 0..200 {
                let u1 = control_at(&x[1..6], t + k as f64 * DEFAULT_STEP).unwrap();
                let u2 = control_at(&x[6..11], t + k as f64 * DEFAULT_STEP).unwrap();
                y = rk4_step(&|y| rhs(y, u1, u2, &p.theta, SubstrateForm::Classical), y, DEFAULT_STEP);
                assert_eq!(u1, x[1 + j]);
            }
            manual.push(y[0]);
        }
        for (a, b) in whole[..10].iter().zip(&manual) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn jacobian_shape() {
        let h = ModelHandle::new(YeastModel::new(YeastParams::default(), SubstrateForm::AsPrinted));
        let mut x = vec![5.0];
        x.extend([0.1; 5]);
        x.extend([20.0; 5]);
        let j = fd_jacobian(&h, &x).unwrap();
        assert_eq!(j.shape(), (4, 20));
        assert!(j.iter().all(|v| v.is_finite()));
        assert_eq!(h.model_evals(), 8);
    }

    #[test]
    fn grid_shape() {
        let g = yeast_grid();
        assert_eq!(g.len(), 15_552);
        assert!(g.iter().all(|p| p.len() == 11));
        assert_eq!(g[0], vec![1.0, 0.05, 0.05, 0.05, 0.05, 0.05, 5.0, 5.0, 5.0, 5.0, 5.0]);
    }
}
