//! Linearization diagnostics along forward orbits.
//!
//! Along an orbit `x_0, x_1, ...` each step is written in unitary charts,
//! `g_j = U_{j+1}^* F U_j`, where `U_j` is the rotation of the sphere taking
//! `0` to `x_j`. Each `g_j` fixes `0` exactly and `|g_j'(0)|` is the
//! Fubini-Study derivative of `f` at `x_j`. The rescaled iterate
//! `h_n(u) = g_{n-1} o ... o g_0(u / Lambda_n)`, with `Lambda_n` the product
//! of the `g_j'(0)`, is then tested for injectivity on disks. Working with the
//! conjugated maps keeps tiny disks accurate: no step ever subtracts two
//! nearly equal chart coordinates.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::green::Window;
use crate::poly;
use crate::proj_maps::{ProjPoint, RationalMap};
use crate::sampler::EmpiricalMeasure;
use crate::stats;

pub const MAX_RATIO_STEPS: usize = 60;
pub const BOUNDARY_POINTS: usize = 64;
const MAX_BOUNDARY_POINTS: usize = 4096;
/// Smallest ring radius examined by the injectivity test.
const RING_FLOOR: f64 = 1e-3;
const DISTINCT_MARGIN: f64 = 1e-9;
const DERIVATIVE_FLOOR: f64 = 1e-300;

/// `g = U_y^* F U_x` as a binary form of degree `d`, with `N(0) = 0`.
#[derive(Debug, Clone)]
struct LocalMap {
    num: Vec<C64>,
    den: Vec<C64>,
    num_rev: Vec<C64>,
    den_rev: Vec<C64>,
    derivative: C64,
}

impl LocalMap {
    fn new(map: &RationalMap, x: (C64, C64), y: (C64, C64)) -> Self {
        let d = map.degree();
        let (x0, x1) = x;
        let (y0, y1) = y;
        // U_x (v, 1) = (conj(x1) v + x0, -conj(x0) v + x1)
        let first = [x0, x1.conj()];
        let second = [x1, -x0.conj()];
        let mut pow_first = vec![vec![C64::new(1.0, 0.0)]];
        let mut pow_second = vec![vec![C64::new(1.0, 0.0)]];
        for _ in 0..d {
            let a = poly::mul(pow_first.last().unwrap(), &first);
            let b = poly::mul(pow_second.last().unwrap(), &second);
            pow_first.push(a);
            pow_second.push(b);
        }
        let mut a = vec![C64::new(0.0, 0.0); d + 1];
        let mut b = vec![C64::new(0.0, 0.0); d + 1];
        for i in 0..=d {
            let term = poly::mul(&pow_first[i], &pow_second[d - i]);
            for (k, t) in term.iter().enumerate() {
                a[k] += map.numerator()[i] * t;
                b[k] += map.denominator()[i] * t;
            }
        }
        // U_y^* = [[y1, -y0], [conj(y0), conj(y1)]]
        let mut num: Vec<C64> = a.iter().zip(&b).map(|(a, b)| y1 * a - y0 * b).collect();
        let den: Vec<C64> = a.iter().zip(&b).map(|(a, b)| y0.conj() * a + y1.conj() * b).collect();
        num[0] = C64::new(0.0, 0.0);
        Self {
            derivative: num[1] / den[0],
            num_rev: poly::reversed(&num),
            den_rev: poly::reversed(&den),
            num,
            den,
        }
    }

    /// Homogeneous image of `(v0, v1)`, renormalized by the larger coordinate.
    fn apply(&self, v: (C64, C64)) -> (C64, C64) {
        let (v0, v1) = v;
        let (a, b) = if v1.norm() >= v0.norm() {
            let t = v0 / v1;
            (poly::eval(&self.num, t), poly::eval(&self.den, t))
        } else {
            let t = v1 / v0;
            (poly::eval(&self.num_rev, t), poly::eval(&self.den_rev, t))
        };
        let s = a.norm().max(b.norm());
        (a / s, b / s)
    }
}

/// Local maps along the orbit of `x`, up to the first critical step.
#[derive(Debug, Clone)]
pub struct LocalOrbit {
    maps: Vec<LocalMap>,
    /// `log |g_j'(0)|` for the noncritical prefix.
    pub log_derivatives: Vec<f64>,
    /// `true` when the orbit hits a critical point within the requested steps.
    pub critical: bool,
    /// `f^j(x)` for `j = 0..=n` (the full orbit, even past a critical step).
    pub points: Vec<ProjPoint>,
}

impl LocalOrbit {
    pub fn new(map: &RationalMap, x: &ProjPoint, n: usize) -> Self {
        let mut points = Vec::with_capacity(n + 1);
        points.push(*x);
        for j in 0..n {
            points.push(map.eval(&points[j]));
        }
        let mut maps = Vec::with_capacity(n);
        let mut log_derivatives = Vec::with_capacity(n);
        let mut critical = false;
        for j in 0..n {
            let g = LocalMap::new(map, points[j].unit_lift(), points[j + 1].unit_lift());
            let norm = g.derivative.norm();
            if !(norm > DERIVATIVE_FLOOR) || !norm.is_finite() {
                critical = true;
                break;
            }
            log_derivatives.push(norm.ln());
            maps.push(g);
        }
        Self {
            maps,
            log_derivatives,
            critical,
            points,
        }
    }

    /// Steps available before a critical point.
    pub fn usable(&self) -> usize {
        self.maps.len()
    }

    /// `log |(f^n)'(x)|` in the Fubini-Study metric, or `None` past a critical step.
    pub fn log_derivative(&self, n: usize) -> Option<f64> {
        (n <= self.usable()).then(|| self.log_derivatives[..n].iter().sum())
    }

    /// `h_n(u)`, or `None` when the image is the point at infinity.
    fn rescaled(&self, n: usize, scale: C64, u: C64) -> Option<C64> {
        let mut v = (u / scale, C64::new(1.0, 0.0));
        for g in &self.maps[..n] {
            v = g.apply(v);
        }
        let h = v.0 / v.1;
        h.is_finite().then_some(h)
    }

    fn lambda(&self, n: usize) -> C64 {
        self.maps[..n].iter().map(|g| g.derivative).product()
    }

    /// Whether `h_n` is injective on the circle of radius `r` with image in
    /// `B(0, r0)`: all samples inside, the first 64 pairwise separated, and
    /// winding number one about `0` (with the sampling refined until
    /// consecutive arguments differ by less than `pi/2`).
    fn ring_ok(&self, n: usize, lambda: C64, r: f64, r0: f64) -> bool {
        let sample = |m: usize| -> Option<Vec<C64>> {
            (0..m)
                .map(|k| self.rescaled(n, lambda, C64::from_polar(r, 2.0 * PI * k as f64 / m as f64)))
                .collect()
        };
        let Some(mut values) = sample(BOUNDARY_POINTS) else {
            return false;
        };
        for (i, a) in values.iter().enumerate() {
            if values[..i].iter().any(|b| (a - b).norm() <= DISTINCT_MARGIN) {
                return false;
            }
        }
        let mut m = BOUNDARY_POINTS;
        loop {
            if values.iter().any(|h| !(h.norm() <= r0) || h.norm() == 0.0) {
                return false;
            }
            let steps: Vec<f64> = (0..m).map(|k| (values[(k + 1) % m] / values[k]).arg()).collect();
            if steps.iter().all(|s| s.abs() <= PI / 2.0) {
                let winding = steps.iter().sum::<f64>() / (2.0 * PI);
                return (winding - 1.0).abs() < 0.5;
            }
            if m >= MAX_BOUNDARY_POINTS {
                return false;
            }
            m *= 2;
            match sample(m) {
                Some(v) => values = v,
                None => return false,
            }
        }
    }
}

/// Ring radii `rho 2^-k` down to the floor.
fn ring_radii(rho: f64) -> Vec<f64> {
    let mut radii = vec![rho];
    let mut r = rho / 2.0;
    while r >= RING_FLOOR {
        radii.push(r);
        r /= 2.0;
    }
    radii
}

/// Membership tests at one base point, with ring results cached by radius.
struct MembershipCache<'a> {
    orbit: &'a LocalOrbit,
    rings: HashMap<(usize, u64), bool>,
}

impl<'a> MembershipCache<'a> {
    fn new(orbit: &'a LocalOrbit) -> Self {
        Self {
            orbit,
            rings: HashMap::new(),
        }
    }

    fn bn(&mut self, n: usize, rho: f64, r0: f64) -> bool {
        if n == 0 {
            return rho <= r0;
        }
        if n > self.orbit.usable() {
            return false;
        }
        let lambda = self.orbit.lambda(n);
        ring_radii(rho).into_iter().all(|r| {
            let orbit = self.orbit;
            *self
                .rings
                .entry((n, r.to_bits()))
                .or_insert_with(|| orbit.ring_ok(n, lambda, r, r0))
        })
    }
}

fn check_params(rho: f64, r0: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0 && r0 > 0.0) {
        return Err(Error::InvalidParameter(format!("need 0 < rho <= 1 and R0 > 0, got {rho}, {r0}")));
    }
    Ok(())
}

/// Whether the rescaled iterate `h_n` maps `B(0, rho)` injectively into
/// `B(0, r0)`. Critical orbits are never members.
///
/// The test is run on the circles of radius `rho 2^-k` down to `1e-3`, so
/// membership at `rho` implies membership at every `rho 2^-k`.
pub fn bn_membership(map: &RationalMap, x: &ProjPoint, n: usize, rho: f64, r0: f64) -> Result<bool> {
    check_params(rho, r0)?;
    let orbit = LocalOrbit::new(map, x, n);
    Ok(MembershipCache::new(&orbit).bn(n, rho, r0))
}

/// `log r_n = (n/2) log d - log |(f^n)'(x)|`.
fn log_ratio(orbit: &LocalOrbit, n: usize, d: usize) -> Option<f64> {
    orbit.log_derivative(n).map(|s| 0.5 * n as f64 * (d as f64).ln() - s)
}

/// `B_n(rho)` membership together with `r_n <= tau`.
pub fn dn_membership(map: &RationalMap, x: &ProjPoint, n: usize, rho: f64, tau: f64, r0: f64) -> Result<bool> {
    check_params(rho, r0)?;
    let orbit = LocalOrbit::new(map, x, n);
    let small = log_ratio(&orbit, n, map.degree()).is_some_and(|l| l <= tau.ln());
    Ok(small && MembershipCache::new(&orbit).bn(n, rho, r0))
}

fn vn_test(orbit: &LocalOrbit, n: usize, d: usize, nu: f64) -> bool {
    match orbit.log_derivative(n) {
        Some(s) => {
            let target = n as f64 * (d as f64).ln();
            let slack = -2.0 * nu.ln();
            (2.0 * s - target).abs() <= slack
        }
        None => false,
    }
}

/// `nu^2 d^n <= |(f^n)'(x)|^2 <= d^n / nu^2`.
pub fn vn_membership(map: &RationalMap, x: &ProjPoint, n: usize, nu: f64) -> Result<bool> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < nu <= 1, got {nu}")));
    }
    let orbit = LocalOrbit::new(map, x, n);
    Ok(vn_test(&orbit, n, map.degree(), nu))
}

/// Per-point `log r_n` for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSeries {
    pub n_max: usize,
    /// Whether orbits were read off the recorded backward chains (`true`) or
    /// obtained by forward iteration.
    pub recorded_orbits: bool,
    /// `log r_n` per point used; `None` for points whose orbit hits a
    /// critical point.
    pub log_ratios: Vec<Option<Vec<f64>>>,
    /// Cloud mean of `log r_n` over the noncritical points.
    pub mean_log_ratio: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub flagged: usize,
}

impl RatioSeries {
    /// Share of noncritical points with `max_{n <= N} r_n <= tau`.
    pub fn bounded_fraction(&self, tau: f64) -> f64 {
        let valid: Vec<&Vec<f64>> = self.log_ratios.iter().flatten().collect();
        let hits = valid
            .iter()
            .filter(|s| s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) <= tau.ln())
            .count();
        hits as f64 / valid.len() as f64
    }
}

fn ratio_from_logs(logs: impl Iterator<Item = f64>, half_log_d: f64) -> Option<Vec<f64>> {
    let mut acc = 0.0;
    let mut series = vec![0.0];
    for (j, l) in logs.enumerate() {
        if !l.is_finite() {
            return None;
        }
        acc += l;
        series.push((j + 1) as f64 * half_log_d - acc);
    }
    Some(series)
}

/// `log r_n = log((sqrt d)^n / |(f^n)'(x)|)` along each cloud point and the
/// least-squares slope of its cloud mean against `n`.
///
/// When the cloud comes from backward chains, the forward orbit of a point is
/// already recorded in its chain and is used as is; only points with all `N`
/// images recorded take part. This keeps long orbits on the Julia set, which
/// forward iteration in double precision cannot do once `d^N` rounding
/// amplification exceeds one. Other clouds are iterated forward.
pub fn derivative_ratio_series(map: &RationalMap, cloud: &EmpiricalMeasure, n_max: usize) -> Result<RatioSeries> {
    if n_max > MAX_RATIO_STEPS {
        return Err(Error::InvalidParameter(format!("N must be at most {MAX_RATIO_STEPS}")));
    }
    if cloud.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let half_log_d = 0.5 * (map.degree() as f64).ln();
    let recorded: Vec<Vec<usize>> = cloud.recorded_forward_orbits(n_max).into_iter().flatten().collect();
    let recorded_orbits = n_max > 0 && !recorded.is_empty();
    let log_ratios: Vec<Option<Vec<f64>>> = if recorded_orbits {
        recorded
            .par_iter()
            .map(|orbit| {
                let logs = orbit[..n_max]
                    .iter()
                    .map(|&i| map.fs_derivative_log(&cloud.points[i]).unwrap_or(f64::NEG_INFINITY));
                ratio_from_logs(logs, half_log_d)
            })
            .collect()
    } else {
        cloud
            .points
            .par_iter()
            .map(|x| ratio_from_logs(map.iterate(x, n_max).log_fs_derivatives.into_iter(), half_log_d))
            .collect()
    };
    let valid: Vec<&Vec<f64>> = log_ratios.iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::TooManyCritical {
            flagged: log_ratios.len(),
            total: log_ratios.len(),
        });
    }
    let mean_log_ratio: Vec<f64> = (0..=n_max)
        .map(|n| valid.iter().map(|s| s[n]).sum::<f64>() / valid.len() as f64)
        .collect();
    let (slope, slope_stderr) = if n_max >= 1 {
        let xs: Vec<f64> = (0..=n_max).map(|n| n as f64).collect();
        let fit = stats::least_squares(&xs, &mean_log_ratio);
        (fit.slope, fit.slope_stderr)
    } else {
        (0.0, 0.0)
    };
    Ok(RatioSeries {
        n_max,
        recorded_orbits,
        flagged: log_ratios.len() - valid.len(),
        log_ratios,
        mean_log_ratio,
        slope,
        slope_stderr,
    })
}

/// Membership fractions of one set family at one parameter choice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticSeries {
    /// `"B"`, `"D"`, `"V"`, or `"B_recurrent"`.
    pub family: String,
    pub n_values: Vec<usize>,
    pub fractions: Vec<f64>,
    /// Wilson 95% half-widths.
    pub half_widths: Vec<f64>,
    /// Points behind each fraction.
    pub trials: Vec<usize>,
    pub rho: Option<f64>,
    pub r0: Option<f64>,
    pub tau: Option<f64>,
    pub nu: Option<f64>,
    pub sample_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepParams {
    pub r0: f64,
    pub rhos: Vec<f64>,
    pub taus: Vec<f64>,
    pub nus: Vec<f64>,
    /// Cloud points used (strided subsample).
    pub max_points: usize,
    /// Chart box for the recurrence variant of `B_n`.
    pub recurrence_box: Option<Window>,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            r0: 0.5,
            rhos: vec![0.4, 0.2, 0.1, 0.05],
            taus: vec![1.0, 2.0, 5.0, 10.0],
            nus: vec![0.5, 0.2, 0.1],
            max_points: 2000,
            recurrence_box: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub series: Vec<DiagnosticSeries>,
    pub sample_size: usize,
}

#[derive(Default, Clone)]
struct PointOutcome {
    /// Indexed `[n][rho]`.
    b: Vec<Vec<bool>>,
    /// Indexed `[n][tau]`.
    ratio_ok: Vec<Vec<bool>>,
    /// Indexed `[n][nu]`.
    v: Vec<Vec<bool>>,
    /// Indexed `[n]`.
    recurrent: Vec<bool>,
}

fn in_box(window: &Window, x: &ProjPoint) -> bool {
    x.affine().is_some_and(|z| window.contains(z))
}

/// Membership fractions of `B_n(rho)`, `D_n(rho, tau)` and `V_n(nu)` over the
/// cloud for every `n` in `n_values` and every parameter in `params`.
pub fn diagnostic_sweep(
    map: &RationalMap,
    cloud: &EmpiricalMeasure,
    n_values: &[usize],
    params: &SweepParams,
) -> Result<SweepResult> {
    for &rho in &params.rhos {
        check_params(rho, params.r0)?;
    }
    if params.nus.iter().any(|&nu| !(nu > 0.0 && nu <= 1.0)) {
        return Err(Error::InvalidParameter("need 0 < nu <= 1".into()));
    }
    if n_values.iter().any(|&n| n > MAX_RATIO_STEPS) {
        return Err(Error::InvalidParameter(format!("n must be at most {MAX_RATIO_STEPS}")));
    }
    if n_values.is_empty() {
        return Ok(SweepResult {
            series: Vec::new(),
            sample_size: 0,
        });
    }
    let stride = cloud.len().div_ceil(params.max_points.max(1)).max(1);
    let points: Vec<ProjPoint> = cloud.points.iter().step_by(stride).copied().collect();
    let n_max = *n_values.iter().max().unwrap();
    let d = map.degree();

    let outcomes: Vec<PointOutcome> = points
        .par_iter()
        .map(|x| {
            let orbit = LocalOrbit::new(map, x, n_max);
            let mut cache = MembershipCache::new(&orbit);
            let mut out = PointOutcome::default();
            for &n in n_values {
                out.b.push(params.rhos.iter().map(|&rho| cache.bn(n, rho, params.r0)).collect());
                let lr = log_ratio(&orbit, n, d);
                out.ratio_ok
                    .push(params.taus.iter().map(|&tau| lr.is_some_and(|l| l <= tau.ln())).collect());
                out.v.push(params.nus.iter().map(|&nu| vn_test(&orbit, n, d, nu)).collect());
                out.recurrent.push(
                    params
                        .recurrence_box
                        .is_some_and(|w| in_box(&w, x) && in_box(&w, &orbit.points[n])),
                );
            }
            out
        })
        .collect();

    let total = points.len();
    let series_from = |family: &str,
                       select: &dyn Fn(&PointOutcome, usize) -> Option<bool>,
                       rho: Option<f64>,
                       tau: Option<f64>,
                       nu: Option<f64>| {
        let mut fractions = Vec::new();
        let mut half_widths = Vec::new();
        let mut trials = Vec::new();
        for i in 0..n_values.len() {
            let votes: Vec<bool> = outcomes.iter().filter_map(|o| select(o, i)).collect();
            let hits = votes.iter().filter(|&&b| b).count();
            let (_, half) = stats::wilson_interval(hits, votes.len());
            fractions.push(if votes.is_empty() { 0.0 } else { hits as f64 / votes.len() as f64 });
            half_widths.push(half);
            trials.push(votes.len());
        }
        DiagnosticSeries {
            family: family.into(),
            n_values: n_values.to_vec(),
            fractions,
            half_widths,
            trials,
            rho,
            r0: rho.map(|_| params.r0),
            tau,
            nu,
            sample_size: total,
            seed: cloud.seed,
        }
    };

    let mut series = Vec::new();
    for (k, &rho) in params.rhos.iter().enumerate() {
        series.push(series_from("B", &|o, i| Some(o.b[i][k]), Some(rho), None, None));
    }
    for (k, &rho) in params.rhos.iter().enumerate() {
        for (t, &tau) in params.taus.iter().enumerate() {
            series.push(series_from(
                "D",
                &|o, i| Some(o.b[i][k] && o.ratio_ok[i][t]),
                Some(rho),
                Some(tau),
                None,
            ));
        }
    }
    for (k, &nu) in params.nus.iter().enumerate() {
        series.push(series_from("V", &|o, i| Some(o.v[i][k]), None, None, Some(nu)));
    }
    if params.recurrence_box.is_some() {
        for (k, &rho) in params.rhos.iter().enumerate() {
            series.push(series_from(
                "B_recurrent",
                &|o, i| o.recurrent[i].then_some(o.b[i][k]),
                Some(rho),
                None,
                None,
            ));
        }
    }
    Ok(SweepResult {
        series,
        sample_size: total,
    })
}
