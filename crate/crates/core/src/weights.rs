//! Optimal weights over a fixed candidate set.
//!
//! Solves `min_w Phi(sum_i w_i mu_i)` over the probability simplex with a
//! pairwise Frank-Wolfe iteration: each step moves mass from the support point
//! with the largest directional derivative to the candidate with the smallest
//! one, with an exact line search along that edge. The iteration stops once
//! the equivalence condition holds on the candidate set:
//! `phi_i >= -tol` for every candidate and `|phi_i| <= tol` on the support.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{criterion_value, Criterion, DirectionalDerivative, FisherMatrix};
use crate::error::{OedError, Result};

/// Weights above this count as support for the stopping rule.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;
/// Weights below this are zeroed in the returned solution.
const TRUNCATION: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    /// Most negative directional derivative over the candidates.
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for WeightOptions {
    fn default() -> Self {
        WeightOptions {
            tol: 1e-6,
            max_iterations: 100_000,
        }
    }
}

pub fn optimize_weights(mus: &[FisherMatrix], c: Criterion, tol: f64) -> Result<WeightSolution> {
    let opts = WeightOptions {
        tol,
        ..WeightOptions::default()
    };
    optimize_weights_from(mus, c, &opts, None)
}

/// Like [`optimize_weights`], optionally warm-started. A start whose
/// information matrix is singular is replaced by uniform weights.
pub fn optimize_weights_from(
    mus: &[FisherMatrix],
    c: Criterion,
    opts: &WeightOptions,
    start: Option<&[f64]>,
) -> Result<WeightSolution> {
    if mus.is_empty() {
        return Err(OedError::InvalidInput("no candidate Fisher matrices".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(OedError::InvalidInput(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let d = mus[0].dim();
    if mus.iter().any(|m| m.dim() != d) {
        return Err(OedError::InvalidInput(
            "candidate Fisher matrices differ in dimension".into(),
        ));
    }
    let n = mus.len();
    let flat: Vec<f64> = mus.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    let dd = d * d;
    let mu = |i: usize| &flat[i * dd..(i + 1) * dd];

    let mut w = match start {
        Some(s) if s.len() == n && s.iter().all(|v| v.is_finite() && *v >= 0.0) && s.iter().sum::<f64>() > 0.0 => {
            let total: f64 = s.iter().sum();
            let w: Vec<f64> = s.iter().map(|v| v / total).collect();
            if assemble(&w, &flat, d).is_invertible() {
                w
            } else {
                vec![1.0 / n as f64; n]
            }
        }
        Some(s) if s.len() != n => {
            return Err(OedError::InvalidInput(format!(
                "start has {} weights for {n} candidates",
                s.len()
            )));
        }
        _ => vec![1.0 / n as f64; n],
    };
    let m0 = assemble(&w, &flat, d);
    if !m0.is_invertible() {
        return Err(OedError::SingularInformation(
            "no weighting of the candidates gives an invertible information matrix".into(),
        ));
    }

    let mut phi = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let m = assemble(&w, &flat, d);
        let deriv = DirectionalDerivative::new(&m, c)?;
        for (i, p) in phi.iter_mut().enumerate() {
            *p = deriv.at_slice(mu(i));
        }
        let (toward, toward_phi) = extreme(&phi, |_| true, |a, b| a < b);
        let (away, away_phi) = extreme(&phi, |i| w[i] > 0.0, |a, b| a > b);
        let support_violation = phi
            .iter()
            .zip(&w)
            .filter(|(_, &wi)| wi > SUPPORT_THRESHOLD)
            .fold(f64::NEG_INFINITY, |acc, (&p, _)| acc.max(p.abs()));
        if toward_phi >= -opts.tol && support_violation <= opts.tol {
            break;
        }
        if iterations >= opts.max_iterations {
            let best = finish(w, &flat, d, c, iterations)?;
            return Err(OedError::Convergence {
                iterations,
                residual: toward_phi,
                best: Box::new(best),
            });
        }
        iterations += 1;
        if toward == away || !(toward_phi < away_phi) {
            // Only rounding noise separates the extremes.
            break;
        }
        let delta: Vec<f64> = mu(toward).iter().zip(mu(away)).map(|(a, b)| a - b).collect();
        let gamma = line_search(&m, &delta, w[away], c);
        w[toward] += gamma;
        w[away] -= gamma;
        if w[away] <= TRUNCATION * 1e-3 {
            w[away] = 0.0;
        }
    }
    finish(w, &flat, d, c, iterations)
}

fn extreme<F, C>(phi: &[f64], admissible: F, better: C) -> (usize, f64)
where
    F: Fn(usize) -> bool,
    C: Fn(f64, f64) -> bool,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in phi.iter().enumerate() {
        if !admissible(i) {
            continue;
        }
        match best {
            Some((_, b)) if !better(p, b) => {}
            _ => best = Some((i, p)),
        }
    }
    best.expect("at least one admissible candidate")
}

fn assemble(w: &[f64], flat: &[f64], d: usize) -> FisherMatrix {
    let dd = d * d;
    let mut acc = vec![0.0; dd];
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for (a, m) in acc.iter_mut().zip(&flat[i * dd..(i + 1) * dd]) {
            *a += wi * m;
        }
    }
    FisherMatrix::symmetrized(DMatrix::from_column_slice(d, d, &acc))
}

fn finish(mut w: Vec<f64>, flat: &[f64], d: usize, c: Criterion, iterations: usize) -> Result<WeightSolution> {
    for v in w.iter_mut() {
        if *v < TRUNCATION {
            *v = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    let m = assemble(&w, flat, d);
    let objective = criterion_value(&m, c)?;
    let deriv = DirectionalDerivative::new(&m, c)?;
    let dd = d * d;
    let kkt_residual = (0..w.len())
        .map(|i| deriv.at_slice(&flat[i * dd..(i + 1) * dd]))
        .fold(f64::INFINITY, f64::min);
    Ok(WeightSolution {
        weights: w,
        objective,
        kkt_residual,
        iterations,
    })
}

/// Step length in `[0, max_step]` minimising `Phi(M + gamma * delta)`.
fn line_search(m: &FisherMatrix, delta: &[f64], max_step: f64, c: Criterion) -> f64 {
    let d = m.dim();
    let delta = DMatrix::from_column_slice(d, d, delta);
    let at = |gamma: f64| m.matrix() + &delta * gamma;
    match c {
        Criterion::D | Criterion::LogD => newton_bisect(max_step, |g| {
            // h = -ln det(M_g): h' = -tr(M_g^-1 D), h'' = tr((M_g^-1 D)^2)
            let chol = at(g).cholesky()?;
            let x = chol.solve(&delta);
            Some((-x.trace(), (&x * &x).trace()))
        }),
        Criterion::A => newton_bisect(max_step, |g| {
            // h = tr(M_g^-1): h' = -tr(M^-1 D M^-1), h'' = 2 tr(M^-1 D M^-1 D M^-1)
            let inv = at(g).cholesky()?.inverse();
            let x = &inv * &delta;
            let xi = &x * &inv;
            Some((-xi.trace(), 2.0 * (&x * &xi).trace()))
        }),
        Criterion::E => golden_section(max_step, |g| {
            // minimise -lambda_min(M_g), convex in g
            let ev = at(g).symmetric_eigenvalues();
            -ev.iter().copied().fold(f64::INFINITY, f64::min)
        }),
    }
}

/// Root of a convex function's derivative on `[0, hi]`. `deriv` returns
/// `(h', h'')`, or `None` where `M` stops being positive definite (treated as
/// `h' = +inf`).
fn newton_bisect<F>(hi: f64, deriv: F) -> f64
where
    F: Fn(f64) -> Option<(f64, f64)>,
{
    if hi <= 0.0 {
        return 0.0;
    }
    match deriv(hi) {
        Some((g, _)) if g <= 0.0 => return hi,
        _ => {}
    }
    let (mut lo, mut up) = (0.0, hi);
    let mut x = 0.0;
    let Some((mut g, mut h)) = deriv(0.0) else {
        return 0.0;
    };
    if g >= 0.0 {
        return 0.0;
    }
    for _ in 0..100 {
        let newton = if h > 0.0 { x - g / h } else { f64::NAN };
        x = if newton > lo && newton < up {
            newton
        } else {
            0.5 * (lo + up)
        };
        match deriv(x) {
            Some((gx, hx)) => {
                g = gx;
                h = hx;
                if g < 0.0 {
                    lo = x;
                } else {
                    up = x;
                }
                if g.abs() <= 1e-15 * (1.0 + hx.abs() * hi) {
                    break;
                }
            }
            None => {
                up = x;
                g = f64::INFINITY;
                h = f64::NAN;
            }
        }
        if up - lo <= 1e-15 * hi {
            break;
        }
    }
    // x sits inside the bracket unless the last trial left the PD region
    if g.is_finite() {
        x
    } else {
        lo
    }
}

fn golden_section<F: Fn(f64) -> f64>(hi: f64, f: F) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // compare against the endpoints so boundary optima are reachable
    [(0.0, f(0.0)), (mid, f(mid)), (hi, f(hi))]
        .into_iter()
        .fold(
            (0.0, f64::INFINITY),
            |best, (x, v)| if v < best.1 { (x, v) } else { best },
        )
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{fisher_at_point, weighted_information, SigmaEps};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn quad_mu(x: f64) -> FisherMatrix {
        let j = DMatrix::from_column_slice(3, 1, &[1.0, x, x * x]);
        fisher_at_point(&j, &SigmaEps::identity(1)).unwrap()
    }

    fn check_equivalence(mus: &[FisherMatrix], sol: &WeightSolution, c: Criterion, tol: f64) {
        let m = weighted_information(&sol.weights, mus).unwrap();
        let deriv = DirectionalDerivative::new(&m, c).unwrap();
        for (mu, w) in mus.iter().zip(&sol.weights) {
            let p = deriv.at(mu);
            assert!(p >= -tol, "phi {p} below -tol");
            if *w > SUPPORT_THRESHOLD {
                assert!(p.abs() <= tol, "support phi {p} (weight {w})");
            }
        }
        assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(sol.weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn symmetric_pair() {
        let mus = vec![
            FisherMatrix::from_diagonal(&[1.0, 0.0]),
            FisherMatrix::from_diagonal(&[0.0, 1.0]),
        ];
        let sol = optimize_weights(&mus, Criterion::D, 1e-6).unwrap();
        assert_abs_diff_eq!(sol.weights[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.weights[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn dominated_candidate_dropped() {
        let mus = vec![FisherMatrix::identity(2), FisherMatrix::identity(2).scaled(0.5)];
        for c in [Criterion::D, Criterion::LogD, Criterion::A, Criterion::E] {
            let sol = optimize_weights(&mus, c, 1e-6).unwrap();
            assert_abs_diff_eq!(sol.weights[0], 1.0, epsilon = 1e-12);
            assert_eq!(sol.weights[1], 0.0);
        }
    }

    /// Brute-force oracle: scan the 2-simplex at resolution 1e-3.
    fn simplex_scan(mus: &[FisherMatrix]) -> (f64, [f64; 3]) {
        let mut best = (f64::INFINITY, [0.0; 3]);
        let steps = 1000;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let w = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    (steps - i - j) as f64 / steps as f64,
                ];
                let m = weighted_information(&w, mus).unwrap();
                if let Ok(v) = criterion_value(&m, Criterion::LogD) {
                    if v < best.0 {
                        best = (v, w);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn quadratic_three_point_optimum() {
        let mus: Vec<_> = [-1.0, 0.0, 1.0].iter().map(|&x| quad_mu(x)).collect();
        let (_, oracle) = simplex_scan(&mus);
        for w in oracle {
            assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-3);
        }
        let sol = optimize_weights(&mus, Criterion::D, 1e-6).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(sol.weights[k], 1.0 / 3.0, epsilon = 1e-4);
        }
        check_equivalence(&mus, &sol, Criterion::D, 1e-6);
    }

    #[test]
    fn quadratic_dense_candidates() {
        let mus: Vec<_> = (0..=200).map(|i| quad_mu(-1.0 + 0.01 * i as f64)).collect();
        for c in [Criterion::LogD, Criterion::A] {
            let sol = optimize_weights(&mus, c, 1e-6).unwrap();
            check_equivalence(&mus, &sol, c, 1e-6);
        }
        let sol = optimize_weights(&mus, Criterion::LogD, 1e-6).unwrap();
        for idx in [0, 100, 200] {
            assert_abs_diff_eq!(sol.weights[idx], 1.0 / 3.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn singular_candidates_rejected() {
        let mus = vec![
            FisherMatrix::from_diagonal(&[1.0, 0.0]),
            FisherMatrix::from_diagonal(&[2.0, 0.0]),
        ];
        assert!(matches!(
            optimize_weights(&mus, Criterion::D, 1e-6),
            Err(OedError::SingularInformation(_))
        ));
        assert!(optimize_weights(&[], Criterion::D, 1e-6).is_err());
        assert!(optimize_weights(&mus, Criterion::D, 0.0).is_err());
    }

    #[test]
    fn iteration_cap_returns_best_iterate() {
        let mus: Vec<_> = (0..=50).map(|i| quad_mu(-1.0 + 0.04 * i as f64)).collect();
        let opts = WeightOptions {
            tol: 1e-12,
            max_iterations: 3,
        };
        match optimize_weights_from(&mus, Criterion::LogD, &opts, None) {
            Err(OedError::Convergence { iterations, best, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best.weights.len(), 51);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let mus: Vec<_> = (0..=40).map(|i| quad_mu(-1.0 + 0.05 * i as f64)).collect();
        let cold = optimize_weights(&mus, Criterion::LogD, 1e-8).unwrap();
        let mut start = vec![0.0; 41];
        start[3] = 0.5;
        start[20] = 0.25;
        start[38] = 0.25;
        let opts = WeightOptions {
            tol: 1e-8,
            ..Default::default()
        };
        let warm = optimize_weights_from(&mus, Criterion::LogD, &opts, Some(&start)).unwrap();
        assert_abs_diff_eq!(cold.objective, warm.objective, epsilon = 1e-9);
    }

    fn random_mus(k: usize) -> impl Strategy<Value = Vec<FisherMatrix>> {
        proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 6), k).prop_map(|js| {
            js.iter()
                .map(|v| fisher_at_point(&DMatrix::from_column_slice(3, 2, v), &SigmaEps::identity(2)).unwrap())
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solution_satisfies_equivalence_and_beats_uniform(mus in random_mus(8)) {
            let uniform = vec![1.0 / 8.0; 8];
            let m0 = weighted_information(&uniform, &mus).unwrap();
            prop_assume!(m0.is_invertible());
            let u_obj = criterion_value(&m0, Criterion::LogD).unwrap();
            let sol = optimize_weights(&mus, Criterion::LogD, 1e-6).unwrap();
            check_equivalence(&mus, &sol, Criterion::LogD, 1e-6);
            prop_assert!(sol.objective <= u_obj + 1e-12);
        }

        #[test]
        fn extra_candidate_never_hurts(mus in random_mus(7)) {
            let head = &mus[..6];
            prop_assume!(weighted_information(&[1.0 / 6.0; 6], head).unwrap().is_invertible());
            let small = optimize_weights(head, Criterion::LogD, 1e-8).unwrap();
            let large = optimize_weights(&mus, Criterion::LogD, 1e-8).unwrap();
            prop_assert!(large.objective <= small.objective + 1e-9);
        }
    }
}
