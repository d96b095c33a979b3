//! Rational self-maps of the Riemann sphere in homogeneous coordinates.
//!
//! A map of degree `d` is stored as the pair `(P, Q)` of affine coefficient
//! vectors of formal degree `d`; its homogeneous lift is
//! `F(z0, z1) = (sum p_i z0^i z1^(d-i), sum q_i z0^i z1^(d-i))` and the point
//! `(z0, z1)` stands for `z = z0 / z1`. Every evaluation happens in the chart
//! where the normalized point has modulus at most one, so nothing ever divides
//! by a vanishing coordinate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

/// Relative resultant below which a map is rejected as degenerate.
pub const RESULTANT_FLOOR: f64 = 1e-12;

/// `|f'|` below this counts as a critical point.
const CRITICAL_FLOOR: f64 = 1e-300;

/// Which affine chart a coordinate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    /// `z = z0 / z1`
    Affine,
    /// `w = z1 / z0 = 1 / z`
    Reciprocal,
}

/// A point of the Riemann sphere, normalized so that the coordinate of largest
/// modulus equals exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjPoint {
    z0: C64,
    z1: C64,
}

impl ProjPoint {
    pub fn new(z0: C64, z1: C64) -> Result<Self> {
        if !(z0.is_finite() && z1.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        if z0.norm() == 0.0 && z1.norm() == 0.0 {
            return Err(Error::InvalidPoint("(0, 0) is not a point of P^1".into()));
        }
        Ok(Self::from_coords_unchecked(z0, z1))
    }

    /// Normalizes a pair known to be finite and nonzero.
    pub(crate) fn from_coords_unchecked(z0: C64, z1: C64) -> Self {
        let one = C64::new(1.0, 0.0);
        if z1.norm() >= z0.norm() {
            Self { z0: z0 / z1, z1: one }
        } else {
            Self { z0: one, z1: z1 / z0 }
        }
    }

    pub fn from_affine(z: C64) -> Self {
        Self::from_coords_unchecked(z, C64::new(1.0, 0.0))
    }

    pub fn infinity() -> Self {
        Self {
            z0: C64::new(1.0, 0.0),
            z1: C64::new(0.0, 0.0),
        }
    }

    pub fn coords(&self) -> (C64, C64) {
        (self.z0, self.z1)
    }

    pub fn is_infinity(&self) -> bool {
        self.z1.norm() == 0.0
    }

    /// The affine coordinate `z0 / z1`, or `None` at infinity.
    pub fn affine(&self) -> Option<C64> {
        if self.is_infinity() {
            None
        } else {
            Some(self.z0 / self.z1)
        }
    }

    /// Coordinate of modulus at most one together with its chart.
    pub fn chart(&self) -> (C64, Chart) {
        let (t, reciprocal) = self.chart_value();
        (t, if reciprocal { Chart::Reciprocal } else { Chart::Affine })
    }

    pub(crate) fn chart_value(&self) -> (C64, bool) {
        if self.z1 == C64::new(1.0, 0.0) {
            (self.z0, false)
        } else {
            (self.z1, true)
        }
    }

    /// Lift of Euclidean norm one.
    pub fn unit_lift(&self) -> (C64, C64) {
        let n = (self.z0.norm_sqr() + self.z1.norm_sqr()).sqrt();
        (self.z0 / n, self.z1 / n)
    }

    /// Image on the unit sphere under inverse stereographic projection.
    pub fn to_sphere(&self) -> [f64; 3] {
        let n = self.z0.norm_sqr() + self.z1.norm_sqr();
        let cross = self.z0 * self.z1.conj();
        [
            2.0 * cross.re / n,
            2.0 * cross.im / n,
            (self.z0.norm_sqr() - self.z1.norm_sqr()) / n,
        ]
    }

    /// Chordal distance on the unit sphere (diameter 2).
    pub fn chordal_distance(&self, other: &ProjPoint) -> f64 {
        let num = (self.z0 * other.z1 - self.z1 * other.z0).norm();
        let den = ((self.z0.norm_sqr() + self.z1.norm_sqr())
            * (other.z0.norm_sqr() + other.z1.norm_sqr()))
        .sqrt();
        2.0 * num / den
    }
}

/// A holomorphic endomorphism of the Riemann sphere of degree at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMap {
    degree: usize,
    p: Vec<C64>,
    q: Vec<C64>,
    p_rev: Vec<C64>,
    q_rev: Vec<C64>,
    wronskian: Vec<C64>,
    wronskian_rev: Vec<C64>,
    resultant: f64,
    green_constant: f64,
}

/// Builds and validates the map `z -> P(z) / Q(z)`.
///
/// Coefficients are listed lowest degree first; the degree is the larger of
/// the two polynomial degrees. Fails with [`Error::DegenerateMap`] when `P` and
/// `Q` share a root on the sphere (including a common root at infinity).
pub fn make_rational_map(p_coeffs: &[C64], q_coeffs: &[C64]) -> Result<RationalMap> {
    make_rational_map_with_floor(p_coeffs, q_coeffs, RESULTANT_FLOOR)
}

pub fn make_rational_map_with_floor(
    p_coeffs: &[C64],
    q_coeffs: &[C64],
    floor: f64,
) -> Result<RationalMap> {
    if p_coeffs.iter().chain(q_coeffs).any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite coefficient".into()));
    }
    let deg = |c: &[C64]| c.iter().rposition(|x| x.norm() != 0.0);
    let degree = match (deg(p_coeffs), deg(q_coeffs)) {
        (None, None) => return Err(Error::InvalidDegree(0)),
        (Some(a), None) | (None, Some(a)) => a,
        (Some(a), Some(b)) => a.max(b),
    };
    if degree < 2 {
        return Err(Error::InvalidDegree(degree));
    }
    let pad = |c: &[C64]| {
        let mut v = vec![C64::new(0.0, 0.0); degree + 1];
        v[..c.len().min(degree + 1)].copy_from_slice(&c[..c.len().min(degree + 1)]);
        v
    };
    let p = pad(p_coeffs);
    let q = pad(q_coeffs);

    let (resultant, green_constant) = resultant_and_green_constant(&p, &q, degree);
    if !(resultant > floor) {
        return Err(Error::DegenerateMap { resultant, floor });
    }
    let p_rev = poly::reversed(&p);
    let q_rev = poly::reversed(&q);
    Ok(RationalMap {
        degree,
        wronskian: poly::wronskian(&p, &q, degree),
        wronskian_rev: poly::wronskian(&p_rev, &q_rev, degree),
        p,
        q,
        p_rev,
        q_rev,
        resultant,
        green_constant,
    })
}

/// Relative resultant `|Res(P, Q)| / (|p|^d |q|^d)` (in `[0, 1]` by Hadamard's
/// inequality) and the constant `M` with `|log ||F(Z)|| - d log ||Z||| <= M`
/// in the max norm.
///
/// The Sylvester system `A P + B Q = z^k` is solved for `k = 0` and
/// `k = 2d - 1`; on the unit polydisk this gives
/// `max(|P|, |Q|) >= 1 / (|a|_1 + |b|_1)`.
fn resultant_and_green_constant(p: &[C64], q: &[C64], d: usize) -> (f64, f64) {
    let n = 2 * d;
    let mut m = DMatrix::<C64>::zeros(n, n);
    for j in 0..d {
        for i in 0..=d {
            m[(i + j, j)] = p[i];
            m[(i + j, d + j)] = q[i];
        }
    }
    let norm2 = |c: &[C64]| c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let scale = norm2(p).powi(d as i32) * norm2(q).powi(d as i32);
    let lu = m.lu();
    let det = lu.determinant().norm();
    let relative = if scale > 0.0 { det / scale } else { 0.0 };
    if !(relative > 0.0) {
        return (relative, f64::INFINITY);
    }
    let mut k_max: f64 = 0.0;
    for target in [0, n - 1] {
        let mut rhs = DVector::<C64>::zeros(n);
        rhs[target] = C64::new(1.0, 0.0);
        match lu.solve(&rhs) {
            Some(x) => k_max = k_max.max(x.iter().map(|c| c.norm()).sum()),
            None => return (relative, f64::INFINITY),
        }
    }
    let upper = poly::l1_norm(p).max(poly::l1_norm(q)).ln();
    let lower = -k_max.ln();
    (relative, upper.abs().max(lower.abs()))
}

impl RationalMap {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Numerator coefficients, lowest degree first, padded to length `d + 1`.
    pub fn numerator(&self) -> &[C64] {
        &self.p
    }

    pub fn denominator(&self) -> &[C64] {
        &self.q
    }

    /// Relative resultant magnitude of the homogeneous lift.
    pub fn resultant(&self) -> f64 {
        self.resultant
    }

    /// Bound on `|log ||F(Z)||_max - d log ||Z||_max|`.
    pub fn green_constant(&self) -> f64 {
        self.green_constant
    }

    /// Wronskian `P'Q - PQ'` at formal degree `2d - 2`; its zeros on the
    /// sphere are the critical points.
    pub fn wronskian(&self) -> &[C64] {
        &self.wronskian
    }

    /// `F` applied to the max-normalized lift of `x`, without renormalizing.
    pub fn lift_image(&self, x: &ProjPoint) -> (C64, C64) {
        let (t, reciprocal) = x.chart_value();
        if reciprocal {
            (poly::eval(&self.p_rev, t), poly::eval(&self.q_rev, t))
        } else {
            (poly::eval(&self.p, t), poly::eval(&self.q, t))
        }
    }

    /// `F(z0, z1)` for an arbitrary (unnormalized) lift.
    pub fn homogeneous_eval(&self, z0: C64, z1: C64) -> (C64, C64) {
        let d = self.degree as i32;
        if z1.norm() >= z0.norm() {
            let t = z0 / z1;
            let s = z1.powi(d);
            (poly::eval(&self.p, t) * s, poly::eval(&self.q, t) * s)
        } else {
            let t = z1 / z0;
            let s = z0.powi(d);
            (poly::eval(&self.p_rev, t) * s, poly::eval(&self.q_rev, t) * s)
        }
    }

    pub fn eval(&self, x: &ProjPoint) -> ProjPoint {
        let (a, b) = self.lift_image(x);
        ProjPoint::from_coords_unchecked(a, b)
    }

    /// `log ||d_x f||` in the Fubini-Study metric.
    pub fn fs_derivative_log(&self, x: &ProjPoint) -> Result<f64> {
        let (t, reciprocal) = x.chart_value();
        self.fs_log_at(t, reciprocal)
    }

    /// Same quantity computed in a prescribed chart (the coordinate may then
    /// exceed 1 in modulus). Fails with [`Error::InvalidPoint`] when `x` is
    /// the pole of that chart.
    pub fn fs_derivative_log_in_chart(&self, x: &ProjPoint, chart: Chart) -> Result<f64> {
        let (z0, z1) = x.coords();
        match chart {
            Chart::Affine if z1.norm() > 0.0 => self.fs_log_at(z0 / z1, false),
            Chart::Reciprocal if z0.norm() > 0.0 => self.fs_log_at(z1 / z0, true),
            _ => Err(Error::InvalidPoint("point is the pole of the requested chart".into())),
        }
    }

    fn fs_log_at(&self, t: C64, reciprocal: bool) -> Result<f64> {
        let (p, q, w) = if reciprocal {
            (&self.p_rev, &self.q_rev, &self.wronskian_rev)
        } else {
            (&self.p, &self.q, &self.wronskian)
        };
        let wv = poly::eval(w, t).norm();
        if wv < CRITICAL_FLOOR {
            return Err(Error::CriticalPoint);
        }
        let pv = poly::eval(p, t);
        let qv = poly::eval(q, t);
        Ok(wv.ln() + t.norm_sqr().ln_1p() - (pv.norm_sqr() + qv.norm_sqr()).ln())
    }

    /// Forward orbit of length `n + 1` with per-step derivative logs.
    pub fn iterate(&self, x: &ProjPoint, n: usize) -> OrbitRecord {
        let mut points = Vec::with_capacity(n + 1);
        let mut logs = Vec::with_capacity(n);
        let mut current = *x;
        points.push(current);
        for _ in 0..n {
            logs.push(self.fs_derivative_log(&current).unwrap_or(f64::NEG_INFINITY));
            current = self.eval(&current);
            points.push(current);
        }
        OrbitRecord {
            points,
            log_fs_derivatives: logs,
        }
    }

    /// Stable textual form of the coefficients, used for hashing.
    pub fn canonical_text(&self) -> String {
        let fmt = |c: &[C64]| {
            c.iter()
                .map(|z| format!("{:e} {:e}", z.re, z.im))
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!("d={}; p={}; q={}", self.degree, fmt(&self.p), fmt(&self.q))
    }
}

/// A forward orbit `x, f(x), ..., f^n(x)` with `log ||d f||` at each step.
///
/// Critical points along the orbit are recorded as `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    pub points: Vec<ProjPoint>,
    pub log_fs_derivatives: Vec<f64>,
}

impl OrbitRecord {
    pub fn len(&self) -> usize {
        self.log_fs_derivatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_fs_derivatives.is_empty()
    }

    /// `log ||d f^n||` by the chain rule.
    pub fn log_derivative_sum(&self) -> f64 {
        self.log_fs_derivatives.iter().sum()
    }

    pub fn critical_steps(&self) -> Vec<usize> {
        self.log_fs_derivatives
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == f64::NEG_INFINITY)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn square() -> RationalMap {
        make_rational_map(&[c(0.0), c(0.0), c(1.0)], &[c(1.0)]).unwrap()
    }

    #[test]
    fn monomial_is_valid() {
        let f = square();
        assert_eq!(f.degree(), 2);
        assert!((f.resultant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_quadratic_is_valid() {
        let f = make_rational_map(&[c(-2.0), c(0.0), c(1.0)], &[c(1.0)]).unwrap();
        assert_eq!(f.degree(), 2);
        assert!(f.resultant() > RESULTANT_FLOOR);
    }

    #[test]
    fn shared_root_is_degenerate() {
        let err = make_rational_map(&[c(0.0), c(0.0), c(1.0)], &[c(0.0), c(1.0)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateMap { .. }));
    }

    #[test]
    fn degree_one_is_rejected() {
        let err = make_rational_map(&[c(0.0), c(1.0)], &[c(1.0)]).unwrap_err();
        assert_eq!(err, Error::InvalidDegree(1));
    }

    #[test]
    fn eval_examples() {
        let f = square();
        let y = f.eval(&ProjPoint::new(c(2.0), c(1.0)).unwrap());
        assert_eq!(y.coords(), (c(1.0), c(0.25)));
        assert!(f.eval(&ProjPoint::infinity()).is_infinity());

        // (z^2 + 1)^2 / (4 z (z^2 - 1)) sends 0 to infinity
        let lattes = make_rational_map(
            &[c(1.0), c(0.0), c(2.0), c(0.0), c(1.0)],
            &[c(0.0), c(-4.0), c(0.0), c(4.0)],
        )
        .unwrap();
        let y = lattes.eval(&ProjPoint::from_affine(c(0.0)));
        assert_eq!(y.coords(), (c(1.0), c(0.0)));
    }

    #[test]
    fn fs_derivative_examples() {
        let f = square();
        let v = f.fs_derivative_log(&ProjPoint::from_affine(c(1.0))).unwrap();
        assert!((v - LN_2).abs() < 1e-14);
        assert_eq!(
            f.fs_derivative_log(&ProjPoint::from_affine(c(0.0))),
            Err(Error::CriticalPoint)
        );
        for k in 0..32 {
            let z = C64::from_polar(1.0, 0.2 * k as f64);
            let v = f.fs_derivative_log(&ProjPoint::from_affine(z)).unwrap();
            assert!((v - LN_2).abs() < 1e-14);
        }
        // infinity is critical for z^2
        assert!(f.fs_derivative_log(&ProjPoint::infinity()).is_err());
    }

    #[test]
    fn iterate_examples() {
        let f = square();
        let orbit = f.iterate(&ProjPoint::from_affine(c(1.0)), 3);
        assert_eq!(orbit.points.len(), 4);
        assert!(orbit.points.iter().all(|p| p.coords() == (c(1.0), c(1.0))));
        assert!((orbit.log_derivative_sum() - 3.0 * LN_2).abs() < 1e-13);

        let empty = f.iterate(&ProjPoint::from_affine(c(0.3)), 0);
        assert_eq!(empty.points.len(), 1);
        assert!(empty.is_empty());

        let cheb = make_rational_map(&[c(-2.0), c(0.0), c(1.0)], &[c(1.0)]).unwrap();
        let orbit = cheb.iterate(&ProjPoint::from_affine(c(2.0)), 5);
        for p in &orbit.points {
            assert!((p.affine().unwrap() - c(2.0)).norm() < 1e-14);
        }
        assert!((orbit.log_derivative_sum() - 5.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn critical_orbits_are_flagged() {
        let f = square();
        let orbit = f.iterate(&ProjPoint::from_affine(c(0.0)), 2);
        assert_eq!(orbit.critical_steps(), vec![0, 1]);
    }

    #[test]
    fn chordal_distance_antipodes() {
        let d = ProjPoint::from_affine(c(0.0)).chordal_distance(&ProjPoint::infinity());
        assert!((d - 2.0).abs() < 1e-15);
        let s = ProjPoint::from_affine(C64::new(0.3, -0.7)).to_sphere();
        assert!((s.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
