//! Named map families, Lattès maps from the duplication formula, and the
//! Weierstrass `p` function.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proj_maps::{make_rational_map, ProjPoint, RationalMap};
use crate::roots;

/// Relative discriminant below which a curve counts as singular.
pub const DISCRIMINANT_FLOOR: f64 = 1e-12;

/// Distance below which a critical orbit must stay away from its earlier
/// cycle image before a return counts as a landing.
const LANDING_SEPARATION: f64 = 1e-3;

const LAURENT_TERMS: usize = 80;
/// Largest argument, on the unit-scale lattice, where the series is summed.
const LAURENT_RADIUS: f64 = 2.0;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `z^d`.
pub fn power_map(d: usize) -> Result<RationalMap> {
    if d < 2 {
        return Err(Error::InvalidDegree(d));
    }
    let mut p = vec![c(0.0); d + 1];
    p[d] = c(1.0);
    make_rational_map(&p, &[c(1.0)])
}

/// The monic Chebyshev polynomial `T` with `T(z + 1/z) = z^d + z^-d`.
pub fn chebyshev_map(d: usize) -> Result<RationalMap> {
    if d < 2 {
        return Err(Error::InvalidDegree(d));
    }
    // Dickson recurrence D_{n+1} = z D_n - D_{n-1}
    let mut prev = vec![c(2.0)];
    let mut cur = vec![c(0.0), c(1.0)];
    for _ in 1..d {
        let mut next = vec![c(0.0); cur.len() + 1];
        for (i, a) in cur.iter().enumerate() {
            next[i + 1] += a;
        }
        for (i, a) in prev.iter().enumerate() {
            next[i] -= a;
        }
        prev = cur;
        cur = next;
    }
    make_rational_map(&cur, &[c(1.0)])
}

/// `z^2 + c`.
pub fn quadratic_map(cst: C64) -> Result<RationalMap> {
    make_rational_map(&[cst, c(0.0), c(1.0)], &[c(1.0)])
}

/// Weierstrass invariants of a nonsingular curve `y^2 = 4x^3 - g2 x - g3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeInvariants {
    pub g2: C64,
    pub g3: C64,
}

impl LatticeInvariants {
    pub fn new(g2: C64, g3: C64) -> Result<Self> {
        let inv = Self { g2, g3 };
        let rel = inv.relative_discriminant();
        if !(rel >= DISCRIMINANT_FLOOR) {
            return Err(Error::DegenerateMap {
                resultant: rel,
                floor: DISCRIMINANT_FLOOR,
            });
        }
        Ok(inv)
    }

    /// `g2^3 - 27 g3^2`.
    pub fn discriminant(&self) -> C64 {
        self.g2.powi(3) - 27.0 * self.g3 * self.g3
    }

    pub fn relative_discriminant(&self) -> f64 {
        let scale = self.g2.norm().powi(3) + 27.0 * self.g3.norm_sqr();
        if scale > 0.0 {
            self.discriminant().norm() / scale
        } else {
            0.0
        }
    }

    /// Length scale of the lattice, `max(|g2|^(1/4), |g3|^(1/6))`.
    fn scale(&self) -> f64 {
        self.g2.norm().powf(0.25).max(self.g3.norm().powf(1.0 / 6.0))
    }
}

/// The degree-4 map `L` with `L(p(u)) = p(2u)`, from the duplication formula
/// `p(2u) = -2p + (6p^2 - g2/2)^2 / (4(4p^3 - g2 p - g3))`.
pub fn lattes_from_duplication(inv: &LatticeInvariants) -> Result<RationalMap> {
    let LatticeInvariants { g2, g3 } = *inv;
    if !(inv.relative_discriminant() >= DISCRIMINANT_FLOOR) {
        return Err(Error::DegenerateMap {
            resultant: inv.relative_discriminant(),
            floor: DISCRIMINANT_FLOOR,
        });
    }
    let num = [g2 * g2 / 4.0, 8.0 * g3, 2.0 * g2, c(0.0), c(4.0)];
    let den = [-4.0 * g3, -4.0 * g2, c(0.0), c(16.0), c(0.0)];
    make_rational_map(&num, &den)
}

/// `(p(u), p'(u))` for the lattice with invariants `inv`.
///
/// Works on the rescaled lattice with `max(|g2|^(1/4), |g3|^(1/6)) = 1` and
/// uses `p(u; g2, g3) = s^2 p(su; g2/s^4, g3/s^6)`. The Laurent series is
/// summed at `w / 2^m` with `m` chosen so the argument has modulus at most
/// `LAURENT_RADIUS`, then the duplication formulas
/// `p(2v) = m^2/4 - 2p(v)` and `p'(2v) = -p'(v) - m (p(2v) - p(v))`, with
/// `m = p''/p'` and `p'' = 6p^2 - g2/2`, are applied `m` times.
pub fn weierstrass_p(u: C64, inv: &LatticeInvariants) -> Result<(C64, C64)> {
    if !u.is_finite() {
        return Err(Error::InvalidPoint("non-finite argument".into()));
    }
    if u.norm() == 0.0 {
        return Err(Error::PoleAtLattice);
    }
    let s = inv.scale();
    let unit = LatticeInvariants {
        g2: inv.g2 / s.powi(4),
        g3: inv.g3 / s.powi(6),
    };
    let mut v = u * s;
    let mut halvings = 0;
    while v.norm() > LAURENT_RADIUS {
        v /= 2.0;
        halvings += 1;
    }
    let coeffs = laurent_coefficients(&unit);
    let v2 = v * v;
    let mut p = v2.inv();
    let mut dp = -2.0 / (v2 * v);
    let mut power = c(1.0); // v^(2k - 4)
    for (k, ck) in coeffs.iter().enumerate().skip(2) {
        // term c_k v^(2k-2), derivative (2k-2) c_k v^(2k-3)
        let term = ck * power * v2;
        p += term;
        dp += (2 * k - 2) as f64 * ck * power * v;
        power *= v2;
    }
    for _ in 0..halvings {
        let second = 6.0 * p * p - unit.g2 / 2.0;
        let m = second / dp;
        let p2 = m * m / 4.0 - 2.0 * p;
        let dp2 = -dp - m * (p2 - p);
        p = p2;
        dp = dp2;
        if !(p.is_finite() && dp.is_finite()) {
            return Err(Error::PoleAtLattice);
        }
    }
    if halvings > 0 && p.norm() > 1e16 {
        return Err(Error::PoleAtLattice);
    }
    Ok((p * s * s, dp * s * s * s))
}

/// `c_k` for `k < LAURENT_TERMS` (entries 0 and 1 unused), with `c_2 = g2/20`,
/// `c_3 = g3/28` and `c_k = 3 / ((2k + 1)(k - 3)) sum_{m=2}^{k-2} c_m c_{k-m}`.
fn laurent_coefficients(inv: &LatticeInvariants) -> Vec<C64> {
    let mut cs = vec![c(0.0); LAURENT_TERMS];
    cs[2] = inv.g2 / 20.0;
    cs[3] = inv.g3 / 28.0;
    for k in 4..LAURENT_TERMS {
        let sum: C64 = (2..=k - 2).map(|m| cs[m] * cs[k - m]).sum();
        cs[k] = sum * 3.0 / ((2 * k + 1) as f64 * (k - 3) as f64);
    }
    cs
}

/// Map description used by the command line and config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FamilySpec {
    Power { d: usize },
    Chebyshev { d: usize },
    Quadratic { c: C64 },
    Lattes { g2: C64, g3: C64 },
    Explicit { p: Vec<C64>, q: Vec<C64> },
}

impl FamilySpec {
    pub fn build(&self) -> Result<RationalMap> {
        match self {
            FamilySpec::Power { d } => power_map(*d),
            FamilySpec::Chebyshev { d } => chebyshev_map(*d),
            FamilySpec::Quadratic { c } => quadratic_map(*c),
            FamilySpec::Lattes { g2, g3 } => lattes_from_duplication(&LatticeInvariants::new(*g2, *g3)?),
            FamilySpec::Explicit { p, q } => make_rational_map(p, q),
        }
    }

    pub fn is_lattes(&self) -> bool {
        matches!(self, FamilySpec::Lattes { .. })
    }
}

/// How the forward orbit of a critical point ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "fate", rename_all = "lowercase")]
pub enum OrbitFate {
    /// `x_{preperiod + period} = x_preperiod` within tolerance.
    Landed { preperiod: usize, period: usize },
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalOrbit {
    pub critical_point: ProjPoint,
    pub orbit: Vec<ProjPoint>,
    pub fate: OrbitFate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostcriticalReport {
    pub orbits: Vec<CriticalOrbit>,
    /// Distinct forward images of critical points, merged within tolerance.
    pub postcritical_set: Vec<ProjPoint>,
    /// Every critical orbit landed on a cycle.
    pub finite: bool,
}

/// Follows every critical point (with multiplicity merged) for up to `steps`
/// iterates and reports whether each orbit lands on a cycle.
///
/// A return `dist(x_j, x_i) <= tol` counts as a landing only when it is not a
/// slow approach: either `i < j - i`, or the earlier point `x_{2i - j}` is at
/// least `1e-3` away from `x_i`. Orbits converging to an attracting cycle thus
/// stay unresolved.
pub fn postcritical_check(map: &RationalMap, steps: usize, tol: f64) -> Result<PostcriticalReport> {
    if steps < 4 {
        return Err(Error::InvalidParameter("postcritical check needs at least 4 steps".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let mut critical: Vec<ProjPoint> = Vec::new();
    let found = roots::binary_form_roots(map.wronskian())
        .map_err(|residuals| Error::RootFindingFailure {
            residuals,
            chain: None,
            step: None,
        })?;
    for x in found {
        if critical.iter().all(|y| y.chordal_distance(&x) > tol) {
            critical.push(x);
        }
    }

    let mut orbits = Vec::with_capacity(critical.len());
    let mut postcritical: Vec<ProjPoint> = Vec::new();
    for cp in critical {
        let mut orbit = vec![cp];
        let mut fate = OrbitFate::Unresolved;
        for j in 1..=steps {
            let next = map.eval(&orbit[j - 1]);
            orbit.push(next);
            let hit = (0..j).rev().find(|&i| orbit[i].chordal_distance(&next) <= tol);
            if let Some(i) = hit {
                let period = j - i;
                if i < period || orbit[i - period].chordal_distance(&orbit[i]) >= LANDING_SEPARATION {
                    fate = OrbitFate::Landed { preperiod: i, period };
                    break;
                }
            }
        }
        if matches!(fate, OrbitFate::Landed { .. }) {
            for x in &orbit[1..] {
                if postcritical.iter().all(|y| y.chordal_distance(x) > tol) {
                    postcritical.push(*x);
                }
            }
        }
        orbits.push(CriticalOrbit {
            critical_point: cp,
            orbit,
            fate,
        });
    }
    let finite = orbits.iter().all(|o| matches!(o.fate, OrbitFate::Landed { .. }));
    Ok(PostcriticalReport {
        orbits,
        postcritical_set: if finite { postcritical } else { Vec::new() },
        finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_families() {
        let f = power_map(2).unwrap();
        assert_eq!(f.numerator(), &[c(0.0), c(0.0), c(1.0)]);
        let t = chebyshev_map(2).unwrap();
        assert_eq!(t.numerator(), &[c(-2.0), c(0.0), c(1.0)]);
        let t3 = chebyshev_map(3).unwrap();
        assert_eq!(t3.numerator(), &[c(0.0), c(-3.0), c(0.0), c(1.0)]);
        assert_eq!(quadratic_map(c(0.0)).unwrap(), f);
        assert!(power_map(1).is_err());
    }

    #[test]
    fn lattes_four_zero_closed_form() {
        let inv = LatticeInvariants::new(c(4.0), c(0.0)).unwrap();
        let l = lattes_from_duplication(&inv).unwrap();
        assert_eq!(l.degree(), 4);
        for k in 0..20 {
            let w = C64::new(0.3 + 0.1 * k as f64, 0.7 - 0.05 * k as f64);
            let expected = (w * w + 1.0).powi(2) / (4.0 * w * (w * w - 1.0));
            let got = l.eval(&ProjPoint::from_affine(w)).affine().unwrap();
            assert!((got - expected).norm() <= 1e-13 * expected.norm().max(1.0));
        }
    }

    #[test]
    fn singular_curve_is_rejected() {
        // g2^3 = 27 g3^2 with g2 = 3, g3 = 1
        let err = LatticeInvariants::new(c(3.0), c(1.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateMap { .. }));
    }

    #[test]
    fn laurent_leading_term() {
        let inv = LatticeInvariants::new(c(4.0), c(1.0)).unwrap();
        let u = C64::from_polar(1e-3, 0.4);
        let (p, _) = weierstrass_p(u, &inv).unwrap();
        assert!((u * u * p - 1.0).norm() <= 1e-6);
        assert_eq!(weierstrass_p(c(0.0), &inv), Err(Error::PoleAtLattice));
    }

    #[test]
    fn p_satisfies_its_differential_equation() {
        let inv = LatticeInvariants::new(C64::new(2.0, 1.0), C64::new(-0.5, 0.3)).unwrap();
        for k in 0..50 {
            let u = C64::from_polar(0.2 + 0.03 * k as f64, 1.3 * k as f64);
            let (p, dp) = weierstrass_p(u, &inv).unwrap();
            let rhs = 4.0 * p * p * p - inv.g2 * p - inv.g3;
            let scale = p.norm().powi(3).max(1.0);
            assert!((dp * dp - rhs).norm() <= 1e-8 * scale);
        }
    }

    #[test]
    fn power_postcritical_set() {
        let report = postcritical_check(&power_map(2).unwrap(), 10, 1e-8).unwrap();
        assert!(report.finite);
        assert_eq!(report.postcritical_set.len(), 2);
        assert!(report.postcritical_set.iter().any(|x| x.is_infinity()));
        assert!(report.postcritical_set.iter().any(|x| x.affine() == Some(c(0.0))));
    }

    #[test]
    fn lattes_is_postcritically_finite() {
        let inv = LatticeInvariants::new(c(4.0), c(0.0)).unwrap();
        let report = postcritical_check(&lattes_from_duplication(&inv).unwrap(), 20, 1e-8).unwrap();
        assert_eq!(report.orbits.len(), 6);
        assert!(report.finite);
        // {0, 1, -1, inf}
        assert_eq!(report.postcritical_set.len(), 4);
    }

    #[test]
    fn escaping_quadratic_is_unresolved() {
        let report = postcritical_check(&quadratic_map(c(0.3)).unwrap(), 20, 1e-8).unwrap();
        assert!(!report.finite);
        let zero = report
            .orbits
            .iter()
            .find(|o| o.critical_point.affine().is_some_and(|z| z.norm() < 1e-12))
            .unwrap();
        assert_eq!(zero.fate, OrbitFate::Unresolved);
    }

    #[test]
    fn attracting_cycle_is_not_a_landing() {
        // z^2 - 0.5 has an attracting fixed point the critical orbit converges to
        let report = postcritical_check(&quadratic_map(c(-0.5)).unwrap(), 60, 1e-8).unwrap();
        assert!(!report.finite);
    }

    #[test]
    fn family_spec_round_trips_through_json() {
        let spec = FamilySpec::Lattes {
            g2: c(4.0),
            g3: c(0.0),
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: FamilySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.build().unwrap().degree(), 4);
    }
}
