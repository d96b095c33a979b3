//! Dense complex polynomials stored lowest degree first.

use num_complex::Complex64 as C64;

pub(crate) fn eval(coeffs: &[C64], z: C64) -> C64 {
    coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Value and first derivative by Horner's scheme.
pub(crate) fn eval_with_derivative(coeffs: &[C64], z: C64) -> (C64, C64) {
    let zero = C64::new(0.0, 0.0);
    let mut p = zero;
    let mut dp = zero;
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

pub(crate) fn derivative(coeffs: &[C64]) -> Vec<C64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * i as f64)
        .collect()
}

pub(crate) fn mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `a - b`, padded to the longer length.
pub(crate) fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            a.get(i).copied().unwrap_or_default() - b.get(i).copied().unwrap_or_default()
        })
        .collect()
}

pub(crate) fn reversed(coeffs: &[C64]) -> Vec<C64> {
    coeffs.iter().rev().copied().collect()
}

pub(crate) fn l1_norm(coeffs: &[C64]) -> f64 {
    coeffs.iter().map(|c| c.norm()).sum()
}

/// Wronskian `P'Q - PQ'` padded to formal degree `2d - 2`.
pub(crate) fn wronskian(p: &[C64], q: &[C64], degree: usize) -> Vec<C64> {
    let w = sub(&mul(&derivative(p), q), &mul(p, &derivative(q)));
    let mut out = vec![C64::new(0.0, 0.0); 2 * degree - 1];
    for (i, c) in w.into_iter().enumerate().take(2 * degree - 1) {
        out[i] = c;
    }
    out
}
