//! Zeros of binary forms on the Riemann sphere.
//!
//! A binary form of degree `n` is given by its dehomogenized coefficients
//! `a_0 .. a_n` (so `H(z0, z1) = sum a_i z0^i z1^(n-i)`). Exact zeros among the
//! extreme coefficients become roots at `0` and `infinity`; the remaining core
//! polynomial is solved by Aberth-Ehrlich simultaneous iteration in whichever
//! chart keeps the leading coefficient dominant, followed by one Newton
//! refinement pass per root in the chart where the root has modulus at most 1.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

use crate::poly;
use crate::proj_maps::ProjPoint;

/// Homogeneous residual accepted after refinement.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-15;

/// Roots of the binary form with multiplicity, or the residuals of the best
/// attempt when the residual target is missed.
pub(crate) fn binary_form_roots(coeffs: &[C64]) -> Result<Vec<ProjPoint>, Vec<f64>> {
    let n = coeffs.len().saturating_sub(1);
    let scale = poly::l1_norm(coeffs);
    if n == 0 || !(scale > 0.0) || !scale.is_finite() {
        return Err(vec![f64::INFINITY]);
    }
    let zero = C64::new(0.0, 0.0);
    let at_zero = coeffs.iter().take_while(|&&c| c == zero).count();
    let at_infinity = coeffs.iter().rev().take_while(|&&c| c == zero).count();

    let mut roots = Vec::with_capacity(n);
    roots.extend(std::iter::repeat_n(ProjPoint::from_affine(zero), at_zero));
    roots.extend(std::iter::repeat_n(ProjPoint::infinity(), at_infinity));

    if at_zero + at_infinity < n {
        let core = &coeffs[at_zero..=n - at_infinity];
        let flip = core[core.len() - 1].norm() < core[0].norm();
        let solved = if flip {
            aberth(&poly::reversed(core))
        } else {
            aberth(core)
        };
        roots.extend(solved.into_iter().map(|z| {
            if flip {
                ProjPoint::from_coords_unchecked(C64::new(1.0, 0.0), z)
            } else {
                ProjPoint::from_affine(z)
            }
        }));
    }

    let forward = coeffs.to_vec();
    let backward = poly::reversed(coeffs);
    let mut residuals = Vec::with_capacity(n);
    for root in roots.iter_mut() {
        let (refined, residual) = refine(*root, &forward, &backward, scale);
        *root = refined;
        residuals.push(residual);
    }
    if residuals.iter().all(|r| *r <= RESIDUAL_TOLERANCE) {
        Ok(roots)
    } else {
        Err(residuals)
    }
}

/// Homogeneous residual `|H(x)| / ||a||_1` at the max-normalized lift of `x`.
pub(crate) fn residual(x: ProjPoint, forward: &[C64], backward: &[C64], scale: f64) -> f64 {
    let (t, reciprocal) = x.chart_value();
    let value = if reciprocal {
        poly::eval(backward, t)
    } else {
        poly::eval(forward, t)
    };
    value.norm() / scale
}

fn refine(x: ProjPoint, forward: &[C64], backward: &[C64], scale: f64) -> (ProjPoint, f64) {
    let mut best = x;
    let mut best_residual = residual(x, forward, backward, scale);
    for _ in 0..2 {
        if best_residual == 0.0 {
            break;
        }
        let (t, reciprocal) = best.chart_value();
        let coeffs = if reciprocal { backward } else { forward };
        let (p, dp) = poly::eval_with_derivative(coeffs, t);
        if dp.norm() == 0.0 {
            break;
        }
        let t_new = t - p / dp;
        let candidate = if reciprocal {
            ProjPoint::from_coords_unchecked(C64::new(1.0, 0.0), t_new)
        } else {
            ProjPoint::from_affine(t_new)
        };
        let r = residual(candidate, forward, backward, scale);
        if r < best_residual {
            best = candidate;
            best_residual = r;
        } else {
            break;
        }
    }
    (best, best_residual)
}

/// All roots of a polynomial with nonzero constant and leading coefficients.
fn aberth(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    if n == 1 {
        return vec![-coeffs[0] / coeffs[1]];
    }
    let deriv = poly::derivative(coeffs);
    let mut z = initial_guesses(coeffs);
    for _ in 0..MAX_ITERATIONS {
        let mut max_step: f64 = 0.0;
        for i in 0..n {
            let p = poly::eval(coeffs, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let dp = poly::eval(&deriv, z[i]);
            let ratio = p / dp;
            let repulsion: C64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let step = ratio / (C64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
                max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
            } else if dp.norm() == 0.0 {
                // stuck on a critical point of p: nudge off it
                let bump = C64::new(1e-8, 1e-8) * (1.0 + z[i].norm());
                z[i] += bump;
                max_step = f64::INFINITY;
            }
        }
        if max_step <= STEP_TOLERANCE {
            break;
        }
    }
    z
}

/// Starting points on circles whose radii come from the Newton polygon of the
/// coefficient moduli (Bini's choice), with a rotation that breaks symmetry.
fn initial_guesses(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    let logs: Vec<f64> = coeffs
        .iter()
        .map(|c| if c.norm() > 0.0 { c.norm().ln() } else { f64::NEG_INFINITY })
        .collect();
    // upper convex hull of (i, log|a_i|)
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..=n {
        if logs[i] == f64::NEG_INFINITY {
            continue;
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b - a) as f64 * (logs[i] - logs[a]) - (i - a) as f64 * (logs[b] - logs[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut guesses = Vec::with_capacity(n);
    let sigma = 0.7;
    for w in hull.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let m = hi - lo;
        let radius = ((logs[lo] - logs[hi]) / m as f64).exp();
        for k in 0..m {
            let angle = 2.0 * PI * k as f64 / m as f64 + 2.0 * PI * lo as f64 / n as f64 + sigma;
            guesses.push(C64::from_polar(radius, angle));
        }
    }
    guesses
}
