//! Lyapunov exponent, Jacobian growth and dimension of the sampled measure.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::proj_maps::RationalMap;
use crate::sampler::EmpiricalMeasure;
use crate::stats;

pub const MIN_LYAPUNOV_SAMPLES: usize = 1000;
pub const MIN_JACOBIAN_STEPS: usize = 5;
pub const MIN_DIMENSION_SAMPLES: usize = 10_000;
/// Allowed share of critical hits, in units of 1/1000.
const CRITICAL_PER_MILLE: usize = 1;
const DIMENSION_GROUPS: usize = 10;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// An estimate with its standard error and everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub quantity: String,
    pub value: f64,
    pub stderr: f64,
    pub sample_size: usize,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub verdicts: Vec<Verdict>,
}

impl EstimateReport {
    fn new(quantity: &str, value: f64, stderr: f64, sample_size: usize, seed: u64) -> Self {
        Self {
            quantity: quantity.into(),
            value,
            stderr,
            sample_size,
            params: BTreeMap::new(),
            seed,
            verdicts: Vec::new(),
        }
    }

    fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }
}

/// Per-point values with critical hits replaced by NaN, failing when more
/// than 0.1% of the points were critical.
fn drop_critical(values: Vec<Option<f64>>) -> Result<(Vec<f64>, usize)> {
    let total = values.len();
    let flagged = values.iter().filter(|v| v.is_none()).count();
    if flagged * 1000 > CRITICAL_PER_MILLE * total {
        return Err(Error::TooManyCritical { flagged, total });
    }
    Ok((values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(), flagged))
}

fn lower_bound_verdict(lambda: f64, stderr: f64, d: usize) -> Verdict {
    let bound = 0.5 * (d as f64).ln();
    Verdict {
        name: "exponent_lower_bound".into(),
        passed: lambda >= bound - 3.0 * stderr,
        detail: format!("lambda {lambda:.6} vs log sqrt(d) {bound:.6} (3 sigma {:.2e})", 3.0 * stderr),
    }
}

/// Cloud average of `log ||df||`.
pub fn lyapunov(map: &RationalMap, m: &EmpiricalMeasure) -> Result<EstimateReport> {
    if m.len() < MIN_LYAPUNOV_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_LYAPUNOV_SAMPLES,
            got: m.len(),
        });
    }
    let raw: Vec<Option<f64>> = m
        .points
        .par_iter()
        .map(|x| map.fs_derivative_log(x).ok())
        .collect();
    let (values, dropped) = drop_critical(raw)?;
    let (value, stderr) = m.mean_stderr(&values);
    let d = map.degree();
    let mut report = EstimateReport::new("lyapunov", value, stderr, m.len() - dropped, m.seed)
        .param("degree", d as f64)
        .param("log_sqrt_d", 0.5 * (d as f64).ln())
        .param("dropped_critical", dropped as f64)
        .param("burn_in", m.burn_in as f64)
        .param("chains", m.chains as f64);
    report.verdicts.push(lower_bound_verdict(value, stderr, d));
    Ok(report)
}

/// Cloud average of `(2/n) log |(f^n)'|`, an estimate of `2 lambda`.
pub fn jacobian_exponent(map: &RationalMap, m: &EmpiricalMeasure, n: usize) -> Result<EstimateReport> {
    if n < MIN_JACOBIAN_STEPS {
        return Err(Error::InsufficientSamples {
            needed: MIN_JACOBIAN_STEPS,
            got: n,
        });
    }
    if m.len() < MIN_LYAPUNOV_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_LYAPUNOV_SAMPLES,
            got: m.len(),
        });
    }
    let raw: Vec<Option<f64>> = m
        .points
        .par_iter()
        .map(|x| {
            let sum = map.iterate(x, n).log_derivative_sum();
            sum.is_finite().then(|| 2.0 * sum / n as f64)
        })
        .collect();
    let (values, dropped) = drop_critical(raw)?;
    let (value, stderr) = m.mean_stderr(&values);
    let d = map.degree();
    let mut report = EstimateReport::new("jacobian_exponent", value, stderr, m.len() - dropped, m.seed)
        .param("n", n as f64)
        .param("degree", d as f64)
        .param("dropped_critical", dropped as f64);
    report.verdicts.push(lower_bound_verdict(value / 2.0, stderr / 2.0, d));
    Ok(report)
}

/// Settings of the dimension estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionParams {
    /// Subsample size for the quadratic pass.
    pub max_points: usize,
    pub k_min: usize,
    pub k_max: usize,
    /// Number of log-spaced neighbor ranks.
    pub ranks: usize,
    /// Pair-distance quantile at the top of the correlation-integral fit.
    pub upper_quantile: f64,
    /// Width of the correlation-integral fit in decades.
    pub decades: f64,
}

impl Default for DimensionParams {
    fn default() -> Self {
        Self {
            max_points: 10_000,
            k_min: 2,
            k_max: 200,
            ranks: 16,
            upper_quantile: 0.02,
            decades: 2.0,
        }
    }
}

/// `psi(k)` for a positive integer `k`.
fn digamma(k: usize) -> f64 {
    -EULER_GAMMA + (1..k).map(|j| 1.0 / j as f64).sum::<f64>()
}

fn log_spaced_ranks(k_min: usize, k_max: usize, count: usize) -> Vec<usize> {
    let (a, b) = ((k_min as f64).ln(), (k_max as f64).ln());
    let mut ks: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .collect();
    ks.dedup();
    ks
}

const HIST_BINS_PER_DECADE: usize = 200;
const HIST_DECADES: usize = 16;

/// Log-binned histogram of chordal distances: bin `b` covers
/// `[10^(b/200 - 16), 10^((b+1)/200 - 16))`; zeros fall in bin 0.
fn hist_bin(r: f64) -> usize {
    let total = HIST_BINS_PER_DECADE * HIST_DECADES;
    if r <= 0.0 {
        return 0;
    }
    let x = (r.log10() + HIST_DECADES as f64) * HIST_BINS_PER_DECADE as f64;
    (x.max(0.0) as usize).min(total)
}

fn hist_edge(b: usize) -> f64 {
    10f64.powf(b as f64 / HIST_BINS_PER_DECADE as f64 - HIST_DECADES as f64)
}

/// Fit of the correlation integral `C(r)` against `r` on the decades below
/// the `upper_quantile` pair distance.
fn pair_slope(hist: &[u64], params: &DimensionParams) -> Option<(f64, f64)> {
    let total: u64 = hist.iter().sum();
    let cumulative: Vec<u64> = hist
        .iter()
        .scan(0u64, |acc, &h| {
            *acc += h;
            Some(*acc)
        })
        .collect();
    let target = (params.upper_quantile * total as f64).ceil() as u64;
    let hi_bin = cumulative.iter().position(|&c| c >= target)? + 1;
    let width = (params.decades * HIST_BINS_PER_DECADE as f64).round() as usize;
    let lo_bin = hi_bin.checked_sub(width)?;
    // C(r) at bin edge b counts the pairs in bins below b
    if lo_bin == 0 || cumulative[lo_bin - 1] < 100 {
        return None;
    }
    let n_r = 16;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n_r)
        .map(|i| {
            let b = lo_bin + (hi_bin - lo_bin) * i / (n_r - 1);
            (hist_edge(b).ln(), (cumulative[b - 1] as f64 / total as f64).ln())
        })
        .unzip();
    let fit = stats::least_squares(&xs, &ys);
    Some((fit.slope, fit.slope_stderr))
}

/// Dimension of the cloud in the chordal metric.
///
/// The primary estimate is the fixed-mass (nearest-neighbor) estimator: with
/// `r_k(x)` the distance from `x` to its `k`-th neighbor, `psi(k)` is
/// regressed on the cloud mean of `log r_k`, whose slope is the dimension
/// without the logarithmic bias of the raw correlation-integral slope. The
/// standard error comes from the spread over ten interleaved point groups.
/// The classical correlation-integral slope is reported as `pair_slope`.
pub fn correlation_dimension(m: &EmpiricalMeasure, params: &DimensionParams) -> Result<EstimateReport> {
    if m.len() < MIN_DIMENSION_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_DIMENSION_SAMPLES,
            got: m.len(),
        });
    }
    let stride = m.len().div_ceil(params.max_points);
    let pts: Vec<[f64; 3]> = m.points.iter().step_by(stride).map(|p| p.to_sphere()).collect();
    let n = pts.len();
    let k_max = params.k_max.min(n - 1);
    let ks = log_spaced_ranks(params.k_min, k_max, params.ranks);
    if ks.len() < 12 || (k_max as f64 / params.k_min as f64) < 100.0 {
        return Err(Error::DegenerateRange(format!(
            "need 12 ranks over two decades, have {} ranks up to {k_max}",
            ks.len()
        )));
    }

    let dist = |a: &[f64; 3], b: &[f64; 3]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };
    let hist_len = HIST_BINS_PER_DECADE * HIST_DECADES + 1;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(&pts[i], &pts[j])).collect();
            row.select_nth_unstable_by(k_max - 1, f64::total_cmp);
            let near = &mut row[..k_max];
            near.sort_by(f64::total_cmp);
            ks.iter().map(|&k| near[k - 1]).collect()
        })
        .collect();
    // integer counts, so the reduction order cannot change the result
    let hist = (0..n)
        .into_par_iter()
        .fold(
            || vec![0u64; hist_len],
            |mut hist, i| {
                for j in i + 1..n {
                    hist[hist_bin(dist(&pts[i], &pts[j]))] += 1;
                }
                hist
            },
        )
        .reduce(
            || vec![0u64; hist_len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let base = EstimateReport::new("dimension", 0.0, 0.0, n, m.seed)
        .param("subsample", n as f64)
        .param("k_min", ks[0] as f64)
        .param("k_max", *ks.last().unwrap() as f64)
        .param("ranks", ks.len() as f64);

    if rows.iter().all(|r| r.iter().all(|&x| x == 0.0)) {
        return Ok(base);
    }
    if rows.iter().any(|r| r[0] == 0.0) {
        return Err(Error::DegenerateRange("repeated points in the cloud".into()));
    }

    let psi: Vec<f64> = ks.iter().map(|&k| digamma(k)).collect();
    let slope_over = |keep: &dyn Fn(usize) -> bool| {
        let mut sums = vec![0.0; ks.len()];
        let mut count = 0usize;
        for (i, r) in rows.iter().enumerate() {
            if keep(i) {
                for (s, x) in sums.iter_mut().zip(r) {
                    *s += x.ln();
                }
                count += 1;
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
        stats::least_squares(&means, &psi).slope
    };
    let value = slope_over(&|_| true);
    let group_slopes: Vec<f64> = (0..DIMENSION_GROUPS)
        .map(|g| slope_over(&|i| i % DIMENSION_GROUPS == g))
        .collect();
    let gm = stats::mean(&group_slopes);
    let var = group_slopes.iter().map(|s| (s - gm).powi(2)).sum::<f64>()
        / ((DIMENSION_GROUPS - 1) * DIMENSION_GROUPS) as f64;

    let mut report = EstimateReport {
        value,
        stderr: var.sqrt(),
        ..base
    };
    if let Some((slope, err)) = pair_slope(&hist, params) {
        report = report.param("pair_slope", slope).param("pair_slope_stderr", err);
    }
    Ok(report)
}

/// Slack in `dim <= log d / lambda` with propagated error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub slack: f64,
    pub stderr: f64,
    pub bound: f64,
    pub passed: bool,
}

pub fn dimension_bound_check(dim: &EstimateReport, lyap: &EstimateReport, d: usize) -> BoundCheck {
    let log_d = (d as f64).ln();
    let bound = log_d / lyap.value;
    let slack = bound - dim.value;
    let d_bound = log_d / (lyap.value * lyap.value) * lyap.stderr;
    let stderr = (d_bound * d_bound + dim.stderr * dim.stderr).sqrt();
    BoundCheck {
        slack,
        stderr,
        bound,
        passed: slack >= -(3.0 * stderr + 0.05),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families;
    use crate::proj_maps::ProjPoint;
    use crate::sampler::{backward_sample, SampleParams};
    use num_complex::Complex64 as C64;
    use std::f64::consts::LN_2;

    fn sample(map: &RationalMap, chains: usize, count: usize) -> EmpiricalMeasure {
        let params = SampleParams {
            chains,
            burn_in: 50,
            count,
            seed: 17,
        };
        backward_sample(map, &params).unwrap()
    }

    #[test]
    fn digamma_values() {
        assert!((digamma(1) + EULER_GAMMA).abs() < 1e-15);
        assert!((digamma(2) - (1.0 - EULER_GAMMA)).abs() < 1e-15);
        // psi(k) ~ log k - 1/(2k)
        assert!((digamma(1000) - (1000f64.ln() - 0.0005 - 1.0 / 12e6)).abs() < 1e-9);
    }

    #[test]
    fn square_lyapunov_is_log_two() {
        let f = families::power_map(2).unwrap();
        let m = sample(&f, 100, 20);
        let r = lyapunov(&f, &m).unwrap();
        assert!((r.value - LN_2).abs() < 1e-9);
        assert!(r.verdicts[0].passed);
        let j = jacobian_exponent(&f, &m, 10).unwrap();
        assert!((j.value - 2.0 * LN_2).abs() < 1e-6);
    }

    #[test]
    fn small_inputs_are_rejected() {
        let f = families::power_map(2).unwrap();
        let m = sample(&f, 10, 10);
        assert!(matches!(lyapunov(&f, &m), Err(Error::InsufficientSamples { .. })));
        let m = sample(&f, 100, 10);
        assert!(matches!(
            jacobian_exponent(&f, &m, 0),
            Err(Error::InsufficientSamples { needed: 5, got: 0 })
        ));
    }

    #[test]
    fn critical_points_are_counted() {
        let f = families::power_map(2).unwrap();
        let mut points = vec![ProjPoint::from_affine(C64::new(1.0, 0.0)); 2000];
        points[0] = ProjPoint::from_affine(C64::new(0.0, 0.0));
        let m = EmpiricalMeasure::from_points(points.clone());
        let r = lyapunov(&f, &m).unwrap();
        assert_eq!(r.params["dropped_critical"], 1.0);
        points[1] = ProjPoint::infinity();
        points[2] = ProjPoint::infinity();
        let m = EmpiricalMeasure::from_points(points);
        assert!(matches!(lyapunov(&f, &m), Err(Error::TooManyCritical { flagged: 3, .. })));
    }

    #[test]
    fn circle_dimension_is_one() {
        let f = families::power_map(2).unwrap();
        let m = sample(&f, 500, 20);
        let r = correlation_dimension(&m, &DimensionParams::default()).unwrap();
        assert!((r.value - 1.0).abs() < 0.05, "dimension {} +- {}", r.value, r.stderr);
        assert!(r.stderr > 0.0 && r.stderr < 0.05);
        assert!((r.params["pair_slope"] - 1.0).abs() < 0.1);
    }

    #[test]
    fn repeated_point_has_dimension_zero() {
        let m = EmpiricalMeasure::from_points(vec![ProjPoint::from_affine(C64::new(0.3, 0.1)); 10_000]);
        let r = correlation_dimension(&m, &DimensionParams::default()).unwrap();
        assert_eq!((r.value, r.stderr), (0.0, 0.0));
    }

    #[test]
    fn too_few_ranks_is_degenerate() {
        let f = families::power_map(2).unwrap();
        let m = sample(&f, 500, 20);
        let params = DimensionParams {
            k_max: 50,
            ..Default::default()
        };
        assert!(matches!(correlation_dimension(&m, &params), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn bound_check_verdicts() {
        let mk = |value, stderr| EstimateReport::new("x", value, stderr, 1, 0);
        let pass = dimension_bound_check(&mk(1.0, 0.01), &mk(LN_2, 0.001), 2);
        assert!(pass.passed && pass.slack.abs() < 1e-12);
        let fail = dimension_bound_check(&mk(2.5, 0.0), &mk(LN_2, 0.0), 2);
        assert!(!fail.passed);
        assert!((fail.slack + 1.5).abs() < 1e-12);
    }
}
