//! Binary flash with a negligible vapour draw, which reduces to a bubble-point
//! solve: given the liquid methanol fraction `x_m` and the pressure `P`, find
//! `T` with `P = x_m g_m P0_m(T) + x_w g_w P0_w(T)` and report the vapour
//! methanol fraction together with `T` in degrees Celsius.

use serde::{Deserialize, Serialize};

use super::{Bounds, Model};
use crate::error::{OedError, Result};

pub const PA_PER_BAR: f64 = 1e5;
pub const NRTL_ALPHA: f64 = 0.3;
pub const KELVIN_OFFSET: f64 = 273.15;
const T_BRACKET: (f64, f64) = (250.0, 600.0);

/// `P0(T) = exp(A + B/T + C ln T + D T^E)` in pascals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstanceParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

pub const METHANOL: SubstanceParams = SubstanceParams {
    a: 100.986,
    b: -7210.917,
    c: -12.44128,
    d: 1.307676e-2,
    e: 1.0,
};

pub const WATER: SubstanceParams = SubstanceParams {
    a: 64.36627,
    b: -6955.958,
    c: -5.802231,
    d: 3.114927e-9,
    e: 3.0,
};

pub const ACETONE: SubstanceParams = SubstanceParams {
    a: 78.89993,
    b: -5980.876,
    c: -8.636991,
    d: 7.92829e-6,
    e: 2.0,
};

pub fn vapor_pressure(s: &SubstanceParams, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(OedError::Domain(format!("temperature must be positive, got {t} K")));
    }
    Ok(pressure(s, t))
}

#[inline]
fn pressure(s: &SubstanceParams, t: f64) -> f64 {
    (s.a + s.b / t + s.c * t.ln() + s.d * t.powf(s.e)).exp()
}

/// NRTL interaction parameters; index 1 is methanol, 2 the second component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrtlParams {
    pub a12: f64,
    pub a21: f64,
    pub b12: f64,
    pub b21: f64,
}

impl NrtlParams {
    pub const METHANOL_WATER: NrtlParams = NrtlParams {
        a12: -3.8,
        a21: 6.6,
        b12: 1337.558,
        b21: -1900.0,
    };

    pub const METHANOL_ACETONE: NrtlParams = NrtlParams {
        a12: 4.1052,
        a21: -4.4461,
        b12: -1264.515,
        b21: 1582.698,
    };

    pub fn from_slice(t: &[f64]) -> Self {
        NrtlParams {
            a12: t[0],
            a21: t[1],
            b12: t[2],
            b21: t[3],
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.a12, self.a21, self.b12, self.b21]
    }
}

/// Activity coefficients `(g_m, g_w)` at liquid methanol fraction `x_m`.
pub fn nrtl_gammas(x_m: f64, t: f64, p: &NrtlParams) -> (f64, f64) {
    let x_w = 1.0 - x_m;
    let tau12 = p.a12 + p.b12 / t;
    let tau21 = p.a21 + p.b21 / t;
    let g12 = (-NRTL_ALPHA * tau12).exp();
    let g21 = (-NRTL_ALPHA * tau21).exp();
    let d1 = x_m + x_w * g21;
    let d2 = x_w + x_m * g12;
    let ln_m = x_w * x_w * (tau21 * (g21 / d1).powi(2) + tau12 * g12 / (d2 * d2));
    let ln_w = x_m * x_m * (tau12 * (g12 / d2).powi(2) + tau21 * g21 / (d1 * d1));
    (ln_m.exp(), ln_w.exp())
}

/// The two pure components of a binary system; `light` is methanol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlashSystem {
    pub light: SubstanceParams,
    pub heavy: SubstanceParams,
}

impl FlashSystem {
    pub const METHANOL_WATER: FlashSystem = FlashSystem {
        light: METHANOL,
        heavy: WATER,
    };

    pub const METHANOL_ACETONE: FlashSystem = FlashSystem {
        light: METHANOL,
        heavy: ACETONE,
    };

    /// Partial pressures `(x_m g_m P0_m, x_w g_w P0_w)` in pascals.
    fn partials(&self, x_m: f64, t: f64, p: &NrtlParams) -> (f64, f64) {
        let (gm, gw) = nrtl_gammas(x_m, t, p);
        (
            x_m * gm * pressure(&self.light, t),
            (1.0 - x_m) * gw * pressure(&self.heavy, t),
        )
    }
}

/// Bubble point at `x_m` and `p_bar`. Returns `(y_m_vap, T in Celsius)`.
pub fn flash_solve(system: &FlashSystem, x_m: f64, p_bar: f64, p: &NrtlParams) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&x_m) || !(p_bar > 0.0) {
        return Err(OedError::Domain(format!(
            "flash inputs out of range: x_m = {x_m}, P = {p_bar} bar"
        )));
    }
    let target = p_bar * PA_PER_BAR;
    let residual = |t: f64| {
        let (pm, pw) = system.partials(x_m, t, p);
        pm + pw - target
    };
    let (mut lo, mut hi) = T_BRACKET;
    let (f_lo, f_hi) = (residual(lo), residual(hi));
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(OedError::NoSolution(format!(
            "no bubble point in [{lo}, {hi}] K for x_m = {x_m}, P = {p_bar} bar"
        )));
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        let f = residual(mid);
        if !f.is_finite() {
            return Err(OedError::NonFiniteModel(format!("bubble-point residual at {mid} K")));
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton polish inside the bracket, with a difference slope
    let mut t = 0.5 * (lo + hi);
    for _ in 0..50 {
        let f = residual(t);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let h = 1e-4;
        let slope = (residual(t + h) - residual(t - h)) / (2.0 * h);
        let mut next = t - f / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 4.0 * f64::EPSILON * t {
            t = next;
            break;
        }
        t = next;
    }
    let (pm, pw) = system.partials(x_m, t, p);
    if ((pm + pw - target) / target).abs() > 1e-10 {
        return Err(OedError::NoSolution(format!(
            "bubble-point solve did not converge for x_m = {x_m}, P = {p_bar} bar"
        )));
    }
    Ok((pm / (pm + pw), t - KELVIN_OFFSET))
}

/// Flash model with inputs `(x_m, P in bar)` on `[0, 1] x [0.5, 5]` and
/// outputs `(y_m_vap, T in Celsius)`. The parameters are the four NRTL
/// coefficients `(a12, a21, b12, b21)`.
#[derive(Clone, Debug)]
pub struct FlashModel {
    name: String,
    system: FlashSystem,
    theta: Vec<f64>,
    bounds: Bounds,
}

impl FlashModel {
    pub fn new(name: impl Into<String>, system: FlashSystem, nrtl: NrtlParams) -> Self {
        FlashModel {
            name: name.into(),
            system,
            theta: nrtl.to_vec(),
            bounds: Bounds::new(vec![0.0, 0.5], vec![1.0, 5.0]).expect("static bounds"),
        }
    }

    pub fn methanol_water() -> Self {
        FlashModel::new(
            "flash-meoh-water",
            FlashSystem::METHANOL_WATER,
            NrtlParams::METHANOL_WATER,
        )
    }

    pub fn methanol_acetone() -> Self {
        FlashModel::new(
            "flash-meoh-acetone",
            FlashSystem::METHANOL_ACETONE,
            NrtlParams::METHANOL_ACETONE,
        )
    }

    pub fn system(&self) -> &FlashSystem {
        &self.system
    }
}

impl Model for FlashModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn eval(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let (y, t) = flash_solve(&self.system, x[0], x[1], &NrtlParams::from_slice(theta))?;
        Ok(vec![y, t])
    }
}

/// The 101 x 91 grid `(i / 100, (10 + j) / 20 bar)`.
pub fn flash_grid() -> Vec<Vec<f64>> {
    let mut g = Vec::with_capacity(101 * 91);
    for i in 0..=100 {
        for j in 0..=90 {
            g.push(vec![i as f64 / 100.0, (10 + j) as f64 / 20.0]);
        }
    }
    g
}
