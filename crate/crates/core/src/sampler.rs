//! Backward-iteration sampling of the equilibrium measure.
//!
//! Each chain starts from a random anchor and repeatedly replaces the current
//! point by one of its `d` preimages, chosen uniformly with multiplicity. The
//! chain's random stream is the ChaCha stream `chain` under the run seed, so a
//! chain's output does not depend on how chains are scheduled.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::proj_maps::{ProjPoint, RationalMap};
use crate::roots;
use crate::stats;

pub const DEFAULT_BURN_IN: usize = 50;

/// Preimage sets closer than this collapse to a single point.
const COLLAPSE_DISTANCE: f64 = 1e-8;
const ANCHOR_CHECK_STEPS: usize = 5;
const MAX_ANCHOR_DRAWS: usize = 1000;
const MIN_BATCHES: usize = 20;
/// Absolute discrepancy attributed to rounding alone.
const ROUNDING_FLOOR: f64 = 1e-12;

/// The `d` preimages of `w` with multiplicity.
pub fn preimages(map: &RationalMap, w: &ProjPoint) -> Result<Vec<ProjPoint>> {
    let (w0, w1) = w.coords();
    let coeffs: Vec<C64> = map
        .numerator()
        .iter()
        .zip(map.denominator())
        .map(|(p, q)| w1 * p - w0 * q)
        .collect();
    roots::binary_form_roots(&coeffs).map_err(|residuals| Error::RootFindingFailure {
        residuals,
        chain: None,
        step: None,
    })
}

/// Homogeneous residual of `f(y) = w`, scaled like the root finder's.
pub fn preimage_residual(map: &RationalMap, y: &ProjPoint, w: &ProjPoint) -> f64 {
    let (w0, w1) = w.coords();
    let (a, b) = map.lift_image(y);
    let scale: f64 = map
        .numerator()
        .iter()
        .zip(map.denominator())
        .map(|(p, q)| (w1 * p - w0 * q).norm())
        .sum();
    (w1 * a - w0 * b).norm() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleParams {
    pub chains: usize,
    pub burn_in: usize,
    /// Points recorded per chain.
    pub count: usize,
    pub seed: u64,
}

/// A truncated backward orbit `x_0, x_-1, x_-2, ...` with its branch choices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackwardOrbit {
    pub anchor: ProjPoint,
    pub branches: Vec<usize>,
    pub points: Vec<ProjPoint>,
    pub seed: u64,
    pub chain: usize,
}

/// Equal-weight point cloud from backward chains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub points: Vec<ProjPoint>,
    pub weights: Vec<f64>,
    /// Chain of each point.
    pub chain_ids: Vec<usize>,
    /// Backward step of each point within its chain.
    pub steps: Vec<usize>,
    pub burn_in: usize,
    pub seed: u64,
    pub chains: usize,
}

impl EmpiricalMeasure {
    /// Cloud of given points, each treated as its own chain.
    pub fn from_points(points: Vec<ProjPoint>) -> Self {
        let n = points.len();
        Self {
            weights: vec![1.0 / n as f64; n],
            chain_ids: (0..n).collect(),
            steps: vec![0; n],
            points,
            burn_in: 0,
            seed: 0,
            chains: n,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-point values grouped for batch-means error estimates: by chain when
    /// there are enough chains, otherwise into contiguous batches. NaN entries
    /// mark dropped points and are skipped.
    pub fn batches(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let mut groups = if self.chains >= MIN_BATCHES {
            let mut groups = vec![Vec::new(); self.chains];
            for (v, &c) in values.iter().zip(&self.chain_ids) {
                groups[c].push(*v);
            }
            groups
        } else {
            let n = values.len();
            let k = MIN_BATCHES.min(n.max(2));
            (0..k)
                .map(|b| values[b * n / k..(b + 1) * n / k].to_vec())
                .collect()
        };
        for g in groups.iter_mut() {
            g.retain(|v| !v.is_nan());
        }
        groups.retain(|g| !g.is_empty());
        groups
    }

    /// Weighted mean with its batch-means standard error.
    pub fn mean_stderr(&self, values: &[f64]) -> (f64, f64) {
        stats::grouped_mean_stderr(&self.batches(values))
    }

    /// For each point, the indices of its `n` forward images when they were
    /// all recorded in the same chain (`f` of the point at backward step `s`
    /// is the point at step `s - 1`).
    pub fn recorded_forward_orbits(&self, n: usize) -> Vec<Option<Vec<usize>>> {
        let mut index = std::collections::HashMap::with_capacity(self.len());
        for (i, (&c, &s)) in self.chain_ids.iter().zip(&self.steps).enumerate() {
            index.insert((c, s), i);
        }
        self.chain_ids
            .iter()
            .zip(&self.steps)
            .enumerate()
            .map(|(i, (&c, &s))| {
                let mut orbit = vec![i];
                for k in 1..=n {
                    orbit.push(*index.get(&(c, s.checked_sub(k)?))?);
                }
                Some(orbit)
            })
            .collect()
    }

    /// Polar angle `2 atan |z|` of every point, in `[0, pi]`.
    pub fn polar_angles(&self) -> Vec<f64> {
        self.points.iter().map(polar_angle).collect()
    }
}

pub fn polar_angle(x: &ProjPoint) -> f64 {
    let (z0, z1) = x.coords();
    2.0 * z0.norm().atan2(z1.norm())
}

/// Uniformly distributed point of the sphere.
fn random_point(rng: &mut ChaCha8Rng) -> ProjPoint {
    let u: f64 = rng.random();
    let theta: f64 = rng.random::<f64>() * 2.0 * PI;
    let z0 = C64::from_polar(u.sqrt(), theta);
    let z1 = C64::new((1.0 - u).sqrt(), 0.0);
    ProjPoint::new(z0, z1).unwrap_or_else(|_| ProjPoint::infinity())
}

fn collapsed(points: &[ProjPoint]) -> bool {
    points
        .iter()
        .all(|y| y.chordal_distance(&points[0]) < COLLAPSE_DISTANCE)
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn tag(err: Error, chain: usize, step: usize) -> Error {
    match err {
        Error::RootFindingFailure { residuals, .. } => Error::RootFindingFailure {
            residuals,
            chain: Some(chain),
            step: Some(step),
        },
        other => other,
    }
}

/// One backward chain of `steps` preimage choices from a fresh random anchor.
///
/// Anchors whose first few preimage sets collapse to a point (the exceptional
/// set) are redrawn.
pub fn backward_orbit(map: &RationalMap, steps: usize, seed: u64, chain: usize) -> Result<BackwardOrbit> {
    let mut rng = chain_rng(seed, chain);
    let d = map.degree();
    'draw: for _ in 0..MAX_ANCHOR_DRAWS {
        let anchor = random_point(&mut rng);
        let mut points = Vec::with_capacity(steps);
        let mut branches = Vec::with_capacity(steps);
        let mut x = anchor;
        for step in 0..steps.max(ANCHOR_CHECK_STEPS) {
            let pre = preimages(map, &x).map_err(|e| tag(e, chain, step + 1))?;
            if step < ANCHOR_CHECK_STEPS && collapsed(&pre) {
                continue 'draw;
            }
            let k = rng.random_range(0..d);
            x = pre[k];
            if step < steps {
                branches.push(k);
                points.push(x);
            }
        }
        return Ok(BackwardOrbit {
            anchor,
            branches,
            points,
            seed,
            chain,
        });
    }
    Err(Error::InvalidParameter("no admissible anchor found".into()))
}

/// `chains x count` points: each chain discards `burn_in` backward steps and
/// then records the next `count`.
pub fn backward_sample(map: &RationalMap, params: &SampleParams) -> Result<EmpiricalMeasure> {
    let SampleParams {
        chains,
        burn_in,
        count,
        seed,
    } = *params;
    if burn_in < 1 || count < 1 || chains < 1 {
        return Err(Error::InvalidParameter("chains, burn-in and count must be positive".into()));
    }
    let orbits: Vec<BackwardOrbit> = (0..chains)
        .into_par_iter()
        .map(|chain| backward_orbit(map, burn_in + count, seed, chain))
        .collect::<Result<_>>()?;
    let n = chains * count;
    let mut points = Vec::with_capacity(n);
    let mut chain_ids = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    for orbit in orbits {
        for (k, x) in orbit.points.into_iter().enumerate().skip(burn_in) {
            points.push(x);
            chain_ids.push(orbit.chain);
            steps.push(k + 1);
        }
    }
    Ok(EmpiricalMeasure {
        weights: vec![1.0 / n as f64; n],
        points,
        chain_ids,
        steps,
        burn_in,
        seed,
        chains,
    })
}

/// Bounded test functions on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TestFunction {
    /// `Re z / (1 + |z|^2)`
    ReProjection,
    /// `Im z / (1 + |z|^2)`
    ImProjection,
    /// `1 / (1 + |z|^2)`
    Height,
    /// `(1 - (dist / radius)^2)^2` inside the chordal ball, zero outside.
    Bump { center: ProjPoint, radius: f64 },
    Constant,
}

impl TestFunction {
    pub fn builtins() -> Vec<TestFunction> {
        vec![
            TestFunction::ReProjection,
            TestFunction::ImProjection,
            TestFunction::Height,
            TestFunction::Bump {
                center: ProjPoint::from_affine(C64::new(1.0, 0.0)),
                radius: 0.8,
            },
            TestFunction::Bump {
                center: ProjPoint::from_affine(C64::new(0.0, 0.5)),
                radius: 1.0,
            },
            TestFunction::Constant,
        ]
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::ReProjection => "re_projection".into(),
            TestFunction::ImProjection => "im_projection".into(),
            TestFunction::Height => "height".into(),
            TestFunction::Bump { center, radius } => {
                let (z0, z1) = center.coords();
                format!("bump({},{};{},{};r={})", z0.re, z0.im, z1.re, z1.im, radius)
            }
            TestFunction::Constant => "constant".into(),
        }
    }

    pub fn eval(&self, x: &ProjPoint) -> f64 {
        let (a, b) = x.coords();
        let n = a.norm_sqr() + b.norm_sqr();
        match self {
            TestFunction::ReProjection => (a * b.conj()).re / n,
            TestFunction::ImProjection => (a * b.conj()).im / n,
            TestFunction::Height => b.norm_sqr() / n,
            TestFunction::Bump { center, radius } => {
                let t = x.chordal_distance(center) / radius;
                if t < 1.0 {
                    (1.0 - t * t).powi(2)
                } else {
                    0.0
                }
            }
            TestFunction::Constant => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub function: String,
    pub discrepancy: f64,
    pub stderr: f64,
    pub within_three_sigma: bool,
}

fn discrepancy_report(
    m: &EmpiricalMeasure,
    functions: &[TestFunction],
    differences: impl Fn(&TestFunction) -> Result<Vec<f64>>,
) -> Result<Vec<Discrepancy>> {
    if m.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m.len() });
    }
    functions
        .iter()
        .map(|phi| {
            let values = differences(phi)?;
            let (discrepancy, stderr) = m.mean_stderr(&values);
            Ok(Discrepancy {
                function: phi.name(),
                discrepancy,
                stderr,
                within_three_sigma: discrepancy.abs() <= 3.0 * stderr + ROUNDING_FLOOR,
            })
        })
        .collect()
}

/// Cloud averages of `(1/d) sum_{f(y) = x} phi(y) - phi(x)`.
pub fn pullback_balance_test(
    map: &RationalMap,
    m: &EmpiricalMeasure,
    functions: &[TestFunction],
) -> Result<Vec<Discrepancy>> {
    let pre: Vec<Vec<ProjPoint>> = m
        .points
        .par_iter()
        .map(|x| preimages(map, x))
        .collect::<Result<_>>()?;
    let d = map.degree() as f64;
    discrepancy_report(m, functions, |phi| {
        Ok(m.points
            .iter()
            .zip(&pre)
            .map(|(x, ys)| ys.iter().map(|y| phi.eval(y)).sum::<f64>() / d - phi.eval(x))
            .collect())
    })
}

/// Cloud averages of `phi(f(x)) - phi(x)`.
pub fn pushforward_test(
    map: &RationalMap,
    m: &EmpiricalMeasure,
    functions: &[TestFunction],
) -> Result<Vec<Discrepancy>> {
    let images: Vec<ProjPoint> = m.points.iter().map(|x| map.eval(x)).collect();
    discrepancy_report(m, functions, |phi| {
        Ok(m.points
            .iter()
            .zip(&images)
            .map(|(x, y)| phi.eval(y) - phi.eval(x))
            .collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn sorted_affine(points: &[ProjPoint]) -> Vec<C64> {
        let mut v: Vec<C64> = points.iter().map(|p| p.affine().unwrap()).collect();
        v.sort_by(|a, b| a.re.total_cmp(&b.re));
        v
    }

    #[test]
    fn preimage_examples() {
        let f = families::power_map(2).unwrap();
        let r = sorted_affine(&preimages(&f, &ProjPoint::from_affine(c(1.0))).unwrap());
        assert!((r[0] + 1.0).norm() < 1e-14 && (r[1] - 1.0).norm() < 1e-14);
        let r = preimages(&f, &ProjPoint::from_affine(c(0.0))).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|p| p.affine() == Some(c(0.0))));
        let t = families::chebyshev_map(2).unwrap();
        let r = sorted_affine(&preimages(&t, &ProjPoint::from_affine(c(2.0))).unwrap());
        assert!((r[0] + 2.0).norm() < 1e-14 && (r[1] - 2.0).norm() < 1e-14);
        // infinity pulls back to infinity twice under a polynomial
        let r = preimages(&t, &ProjPoint::infinity()).unwrap();
        assert!(r.iter().all(|p| p.is_infinity()));
    }

    #[test]
    fn same_seed_same_cloud() {
        let f = families::quadratic_map(c(-0.5)).unwrap();
        let params = SampleParams {
            chains: 7,
            burn_in: 10,
            count: 20,
            seed: 42,
        };
        let a = backward_sample(&f, &params).unwrap();
        let b = backward_sample(&f, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 140);
        let other = backward_sample(&f, &SampleParams { seed: 43, ..params }).unwrap();
        assert_ne!(a.points, other.points);
    }

    #[test]
    fn chains_are_schedule_independent() {
        let f = families::power_map(3).unwrap();
        let params = SampleParams {
            chains: 5,
            burn_in: 5,
            count: 3,
            seed: 9,
        };
        let cloud = backward_sample(&f, &params).unwrap();
        let third = backward_orbit(&f, 8, 9, 3).unwrap();
        assert_eq!(&cloud.points[9..12], &third.points[5..8]);
        assert_eq!(cloud.steps[9..12], [6, 7, 8]);
    }

    #[test]
    fn backward_orbit_residuals() {
        let inv = families::LatticeInvariants::new(c(4.0), c(1.0)).unwrap();
        let f = families::lattes_from_duplication(&inv).unwrap();
        let orbit = backward_orbit(&f, 100, 5, 0).unwrap();
        let mut prev = orbit.anchor;
        for x in &orbit.points {
            assert!(preimage_residual(&f, x, &prev) <= 1e-9);
            prev = *x;
        }
    }

    #[test]
    fn constant_function_balances_exactly() {
        let f = families::power_map(3).unwrap();
        let params = SampleParams {
            chains: 30,
            burn_in: 10,
            count: 10,
            seed: 1,
        };
        let m = backward_sample(&f, &params).unwrap();
        let pull = pullback_balance_test(&f, &m, &[TestFunction::Constant]).unwrap();
        assert_eq!(pull[0].discrepancy, 0.0);
        let push = pushforward_test(&f, &m, &[TestFunction::Constant]).unwrap();
        assert_eq!(push[0].discrepancy, 0.0);
        assert!(push[0].within_three_sigma);
    }

    #[test]
    fn test_functions_at_special_points() {
        let inf = ProjPoint::infinity();
        assert_eq!(TestFunction::Height.eval(&inf), 0.0);
        assert_eq!(TestFunction::ReProjection.eval(&inf), 0.0);
        let one = ProjPoint::from_affine(c(1.0));
        assert!((TestFunction::ReProjection.eval(&one) - 0.5).abs() < 1e-15);
        let bump = TestFunction::Bump { center: one, radius: 0.5 };
        assert_eq!(bump.eval(&one), 1.0);
        assert_eq!(bump.eval(&inf), 0.0);
    }

    #[test]
    fn invalid_parameters() {
        let f = families::power_map(2).unwrap();
        let bad = SampleParams {
            chains: 1,
            burn_in: 0,
            count: 1,
            seed: 0,
        };
        assert!(backward_sample(&f, &bad).is_err());
    }
}
