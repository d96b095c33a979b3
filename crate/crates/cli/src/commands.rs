//! The subcommands. Each computes with `lattes-core` and writes stamped files.

use crate::config::{Invocation, RunConfig};
use crate::output::{self, join, map_hash, stamped_csv, stamped_json};
use crate::{CliError, VerifyArgs};
use lattes_core::estimators::{
    correlation_dimension, dimension_bound_check, lyapunov, BoundCheck, DimensionParams, EstimateReport,
};
use lattes_core::families::{postcritical_check, LatticeInvariants, PostcriticalReport};
use lattes_core::green::{green_density_grid, DEFAULT_TOLERANCE};
use lattes_core::lindiag::{derivative_ratio_series, diagnostic_sweep, RatioSeries, SweepParams};
use lattes_core::sampler::{backward_sample, EmpiricalMeasure, SampleParams};
use lattes_core::stats::least_squares;
use lattes_core::{Chart, Complex64 as C64, RationalMap};
use serde::Serialize;
use std::path::PathBuf;

/// `n` values of the membership sweep, cut at `--nmax`.
const SWEEP_N: [usize; 6] = [1, 2, 5, 10, 20, 40];
const POSTCRITICAL_STEPS: usize = 24;
const POSTCRITICAL_TOL: f64 = 1e-8;
/// Floor on the dimension for a LATTES-LIKE verdict.
pub const LATTES_MIN_DIMENSION: f64 = 1.85;
/// Floor on the ratio-series slope for a LATTES-LIKE verdict.
pub const LATTES_MIN_RATIO_SLOPE: f64 = -0.02;

/// Runs a resolved invocation, on a pool of `threads` workers when given.
pub fn execute(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    match inv.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(|| execute_here(inv)),
        None => execute_here(inv),
    }
}

fn execute_here(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &inv.config;
    let files = match cfg.command.as_str() {
        "sample" => sample(cfg)?,
        "green" => green(cfg)?,
        "lyapunov" => vec![("lyapunov.json", stamped_json(cfg, &lyapunov_report(cfg)?))],
        "dimension" => vec![("dimension.json", stamped_json(cfg, &dimension_report(cfg)?))],
        "lindiag" => lindiag(cfg)?,
        "lattes-make" => vec![("lattes_map.json", stamped_json(cfg, &lattes_make(cfg)?))],
        "report" => vec![("report.json", stamped_json(cfg, &report(cfg)?))],
        other => return Err(CliError::Usage(format!("unknown command {other:?}"))),
    };
    files
        .into_iter()
        .map(|(name, text)| output::write(&inv.out, name, &text))
        .collect()
}

fn cloud(cfg: &RunConfig, map: &RationalMap) -> Result<EmpiricalMeasure, CliError> {
    Ok(backward_sample(
        map,
        &SampleParams {
            chains: cfg.chains,
            burn_in: cfg.burn_in,
            count: cfg.samples_per_chain(),
            seed: cfg.seed,
        },
    )?)
}

#[derive(Serialize)]
struct SampleSummary {
    seed: u64,
    map_hash: String,
    count: usize,
    chains: usize,
    burn_in: usize,
    mass: f64,
}

fn sample(cfg: &RunConfig) -> Result<Vec<(&'static str, String)>, CliError> {
    let map = cfg.map.build()?;
    let m = cloud(cfg, &map)?;
    let hash = map_hash(&map);
    let rows: Vec<String> = m
        .points
        .iter()
        .zip(m.chain_ids.iter().zip(&m.steps))
        .map(|(p, (chain, step))| {
            let (z, chart) = p.chart();
            let flag = u8::from(chart == Chart::Reciprocal);
            format!("{},{},{flag},{chain},{step}", z.re, z.im)
        })
        .collect();
    let header = [format!("map_hash={hash} seed={} burn_in={}", cfg.seed, cfg.burn_in)];
    let summary = SampleSummary {
        seed: cfg.seed,
        map_hash: hash,
        count: m.len(),
        chains: m.chains,
        burn_in: m.burn_in,
        mass: compensated_sum(&m.weights),
    };
    Ok(vec![
        ("samples.csv", stamped_csv(cfg, &header, "re,im,chart,chain,step", &rows)),
        ("sample_summary.json", stamped_json(cfg, &summary)),
    ])
}

/// Neumaier summation; a plain sum of 10^5 equal weights drifts in the 12th digit.
fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + carry
}

#[derive(Serialize)]
struct GreenSummary {
    seed: u64,
    map_hash: String,
    nx: usize,
    ny: usize,
    mass: f64,
    negative_percent: f64,
    clipped_mass: f64,
}

fn green(cfg: &RunConfig) -> Result<Vec<(&'static str, String)>, CliError> {
    let map = cfg.map.build()?;
    let grid = green_density_grid(&map, cfg.window, cfg.res, cfg.res, DEFAULT_TOLERANCE)?;
    let w = &grid.window;
    let header = [format!(
        "window={} resolution={}x{} map_hash={} mass={}",
        join([w.x_lo(), w.x_lo() + w.width, w.y_lo(), w.y_lo() + w.height]),
        grid.nx,
        grid.ny,
        map_hash(&map),
        grid.mass
    )];
    let rows: Vec<String> = grid.values.chunks(grid.nx).map(|r| join(r.iter().copied())).collect();
    let summary = GreenSummary {
        seed: cfg.seed,
        map_hash: map_hash(&map),
        nx: grid.nx,
        ny: grid.ny,
        mass: grid.mass,
        negative_percent: grid.negative_percent,
        clipped_mass: grid.clipped_mass,
    };
    Ok(vec![
        ("green_grid.csv", stamped_csv(cfg, &header, "", &rows)),
        ("green_summary.json", stamped_json(cfg, &summary)),
    ])
}

fn lyapunov_report(cfg: &RunConfig) -> Result<EstimateReport, CliError> {
    let map = cfg.map.build()?;
    Ok(lyapunov(&map, &cloud(cfg, &map)?)?)
}

#[derive(Serialize)]
struct DimensionOutput {
    #[serde(flatten)]
    dimension: EstimateReport,
    lyapunov: EstimateReport,
    bound_check: BoundCheck,
}

fn dimension_report(cfg: &RunConfig) -> Result<DimensionOutput, CliError> {
    let map = cfg.map.build()?;
    let m = cloud(cfg, &map)?;
    let dimension = correlation_dimension(&m, &DimensionParams::default())?;
    let lyap = lyapunov(&map, &m)?;
    let bound_check = dimension_bound_check(&dimension, &lyap, map.degree());
    Ok(DimensionOutput {
        dimension,
        lyapunov: lyap,
        bound_check,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSummary {
    pub n_max: usize,
    pub slope: f64,
    pub slope_stderr: f64,
    pub tau: f64,
    /// Share of points with `r_n <= tau` for every `n <= n_max`.
    pub bounded_fraction: f64,
    pub flagged: usize,
    pub points: usize,
    pub recorded_orbits: bool,
    pub mean_log_ratio: Vec<f64>,
}

impl RatioSummary {
    fn new(series: &RatioSeries, tau: f64) -> Self {
        Self {
            n_max: series.n_max,
            slope: series.slope,
            slope_stderr: series.slope_stderr,
            tau,
            bounded_fraction: series.bounded_fraction(tau),
            flagged: series.flagged,
            points: series.log_ratios.len(),
            recorded_orbits: series.recorded_orbits,
            mean_log_ratio: series.mean_log_ratio.clone(),
        }
    }
}

#[derive(Serialize)]
struct SeriesSummary {
    family: String,
    rho: Option<f64>,
    tau: Option<f64>,
    nu: Option<f64>,
    /// Least-squares slope of the fraction against `n`.
    fraction_slope: Option<f64>,
}

#[derive(Serialize)]
struct LindiagSummary {
    seed: u64,
    sample_size: usize,
    ratio: RatioSummary,
    series: Vec<SeriesSummary>,
}

fn lindiag(cfg: &RunConfig) -> Result<Vec<(&'static str, String)>, CliError> {
    let map = cfg.map.build()?;
    let m = cloud(cfg, &map)?;
    let ratio = derivative_ratio_series(&map, &m, cfg.nmax)?;
    let n_values: Vec<usize> = SWEEP_N.iter().copied().filter(|&n| n <= cfg.nmax).collect();
    let params = SweepParams {
        rhos: vec![cfg.rho],
        taus: vec![cfg.tau],
        nus: vec![cfg.nu],
        ..SweepParams::default()
    };
    let sweep = diagnostic_sweep(&map, &m, &n_values, &params)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for s in &sweep.series {
        for i in 0..s.n_values.len() {
            rows.push(format!(
                "{},{},{},{},{},{},{},{}",
                s.family,
                opt(s.rho),
                opt(s.tau),
                opt(s.nu),
                s.n_values[i],
                s.fractions[i],
                s.half_widths[i],
                s.trials[i]
            ));
        }
        let xs: Vec<f64> = s.n_values.iter().map(|&n| n as f64).collect();
        series.push(SeriesSummary {
            family: s.family.clone(),
            rho: s.rho,
            tau: s.tau,
            nu: s.nu,
            fraction_slope: (xs.len() >= 2).then(|| least_squares(&xs, &s.fractions).slope),
        });
    }
    let ratio_rows: Vec<String> = ratio
        .mean_log_ratio
        .iter()
        .enumerate()
        .map(|(n, v)| format!("{n},{v}"))
        .collect();
    let header = [format!("map_hash={} seed={} sample_size={}", map_hash(&map), cfg.seed, sweep.sample_size)];
    let summary = LindiagSummary {
        seed: cfg.seed,
        sample_size: sweep.sample_size,
        ratio: RatioSummary::new(&ratio, cfg.tau),
        series,
    };
    Ok(vec![
        (
            "lindiag_series.csv",
            stamped_csv(cfg, &header, "family,rho,tau,nu,n,fraction,ci_half_width,trials", &rows),
        ),
        ("ratio_series.csv", stamped_csv(cfg, &header, "n,mean_log_ratio", &ratio_rows)),
        ("lindiag.json", stamped_json(cfg, &summary)),
    ])
}

#[derive(Serialize)]
struct LattesOutput {
    seed: u64,
    map_hash: String,
    degree: usize,
    /// Coefficients `[re, im]`, lowest degree first.
    numerator: Vec<C64>,
    denominator: Vec<C64>,
    resultant: f64,
    relative_discriminant: f64,
    postcritical: PostcriticalReport,
}

fn lattes_make(cfg: &RunConfig) -> Result<LattesOutput, CliError> {
    let lattes_core::families::FamilySpec::Lattes { g2, g3 } = cfg.map else {
        return Err(CliError::Usage("lattes-make needs --family lattes".into()));
    };
    let inv = LatticeInvariants::new(g2, g3)?;
    let map = cfg.map.build()?;
    Ok(LattesOutput {
        seed: cfg.seed,
        map_hash: map_hash(&map),
        degree: map.degree(),
        numerator: map.numerator().to_vec(),
        denominator: map.denominator().to_vec(),
        resultant: map.resultant(),
        relative_discriminant: inv.relative_discriminant(),
        postcritical: postcritical_check(&map, POSTCRITICAL_STEPS, POSTCRITICAL_TOL)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReportVerdict {
    #[serde(rename = "LATTES-LIKE")]
    LattesLike,
    #[serde(rename = "GENERIC")]
    Generic,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

/// The three conditions behind a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: ReportVerdict,
    /// `|lambda - log sqrt d| <= 3 sigma`
    pub exponent_at_bound: bool,
    /// `lambda - log sqrt d >= 3 sigma`
    pub exponent_above_bound: bool,
    pub dimension_maximal: bool,
    pub ratio_bounded: bool,
}

/// LATTES-LIKE needs the exponent at `log sqrt d` within 3 sigma, dimension
/// at least 1.85 and ratio slope at least -0.02; GENERIC needs the exponent
/// 3 sigma above it; anything else is INCONCLUSIVE.
pub fn classify(lambda: f64, sigma: f64, d: usize, dimension: f64, ratio_slope: f64) -> Classification {
    let gap = lambda - 0.5 * (d as f64).ln();
    let exponent_at_bound = gap.abs() <= 3.0 * sigma;
    let exponent_above_bound = gap >= 3.0 * sigma;
    let dimension_maximal = dimension >= LATTES_MIN_DIMENSION;
    let ratio_bounded = ratio_slope >= LATTES_MIN_RATIO_SLOPE;
    let verdict = if exponent_at_bound && dimension_maximal && ratio_bounded {
        ReportVerdict::LattesLike
    } else if exponent_above_bound {
        ReportVerdict::Generic
    } else {
        ReportVerdict::Inconclusive
    };
    Classification {
        verdict,
        exponent_at_bound,
        exponent_above_bound,
        dimension_maximal,
        ratio_bounded,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub verdict: ReportVerdict,
    pub seed: u64,
    pub degree: usize,
    pub log_sqrt_d: f64,
    pub conditions: Option<Classification>,
    pub lyapunov: Option<EstimateReport>,
    pub dimension: Option<EstimateReport>,
    pub bound_check: Option<BoundCheck>,
    pub ratio: Option<RatioSummary>,
    /// Why an estimate is missing.
    pub notes: Vec<String>,
}

fn or_note<T>(r: lattes_core::Result<T>, notes: &mut Vec<String>) -> Result<Option<T>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e @ lattes_core::Error::InsufficientSamples { .. }) => {
            notes.push(e.to_string());
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Exponent, dimension and ratio series on one cloud, and the verdict.
pub fn report(cfg: &RunConfig) -> Result<Report, CliError> {
    let map = cfg.map.build()?;
    let d = map.degree();
    let m = cloud(cfg, &map)?;
    let mut notes = Vec::new();
    let lyap = or_note(lyapunov(&map, &m), &mut notes)?;
    let dim = or_note(correlation_dimension(&m, &DimensionParams::default()), &mut notes)?;
    let ratio = derivative_ratio_series(&map, &m, cfg.nmax)?;
    let conditions = match (&lyap, &dim) {
        (Some(l), Some(k)) => Some(classify(l.value, l.stderr, d, k.value, ratio.slope)),
        _ => None,
    };
    let bound_check = match (&lyap, &dim) {
        (Some(l), Some(k)) => Some(dimension_bound_check(k, l, d)),
        _ => None,
    };
    Ok(Report {
        verdict: conditions.map_or(ReportVerdict::Inconclusive, |c| c.verdict),
        seed: cfg.seed,
        degree: d,
        log_sqrt_d: 0.5 * (d as f64).ln(),
        conditions,
        lyapunov: lyap,
        dimension: dim,
        bound_check,
        ratio: Some(RatioSummary::new(&ratio, cfg.tau)),
        notes,
    })
}

#[derive(Serialize)]
struct VerifyOutput {
    file: String,
    stamped_hash: String,
    recomputed_hash: String,
    hash_ok: bool,
    rerun_identical: Option<bool>,
}

/// Checks the stamp of an output file, and with `--rerun` the file contents.
pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.file)?;
    let (stamped, config) = output::read_stamp(&text)?;
    let config: RunConfig = serde_json::from_value(config)
        .map_err(|e| CliError::Verification(format!("embedded config is invalid: {e}")))?;
    let recomputed = config.hash();
    let hash_ok = recomputed == stamped;
    let rerun_identical = if args.rerun && hash_ok {
        let dir = tempfile::tempdir()?;
        let inv = Invocation {
            config,
            out: dir.path().to_path_buf(),
            threads: args.threads,
        };
        let name = args
            .file
            .file_name()
            .ok_or_else(|| CliError::Usage("verify needs a file path".into()))?;
        execute(&inv)?;
        let fresh = std::fs::read(dir.path().join(name))
            .map_err(|_| CliError::Verification(format!("rerun did not produce {}", name.to_string_lossy())))?;
        Some(fresh == text.as_bytes())
    } else {
        None
    };
    let result = VerifyOutput {
        file: args.file.display().to_string(),
        stamped_hash: stamped,
        recomputed_hash: recomputed,
        hash_ok,
        rerun_identical,
    };
    println!("{}", serde_json::to_string(&result).expect("serializes"));
    if !hash_ok {
        return Err(CliError::Verification("config hash does not match the embedded config".into()));
    }
    if rerun_identical == Some(false) {
        return Err(CliError::Verification("rerun output differs".into()));
    }
    Ok(())
}
