//! Run configuration: config file, flags, defaults, and the config hash.

use crate::CliError;
use clap::Args;
use lattes_core::families::FamilySpec;
use lattes_core::green::Window;
use lattes_core::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const DEFAULT_COUNT: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_NMAX: usize = 40;
pub const DEFAULT_RHO: f64 = 0.1;
pub const DEFAULT_TAU: f64 = 10.0;
pub const DEFAULT_NU: f64 = 0.1;
pub const DEFAULT_RES: usize = 256;
pub const MAX_CHAINS: usize = 1000;

/// Flags shared by every computing subcommand. Each one mirrors a key of the
/// config file; a flag given on the command line wins over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file with `[map]` and `[run]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// power, chebyshev, quadratic, lattes or explicit.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long = "d")]
    pub d: Option<usize>,
    /// Complex constant of the quadratic family, e.g. `-0.5`, `0.1+0.2i` or `0.1,0.2`.
    #[arg(long = "c", allow_hyphen_values = true)]
    pub c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub g2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub g3: Option<String>,
    /// Coefficients of an explicit map: lines `p <re> <im>` or `q <re> <im>`,
    /// lowest degree first.
    #[arg(long)]
    pub coeffs_file: Option<PathBuf>,
    /// Total number of recorded sample points.
    #[arg(long)]
    pub count: Option<usize>,
    /// Number of backward chains; must divide `--count`.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// `lo hi` for a square window or `x_lo x_hi y_lo y_hi`.
    #[arg(long, num_args = 2..=4, allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
    /// Grid cells per axis.
    #[arg(long)]
    pub res: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexInput {
    Real(f64),
    Pair([f64; 2]),
    Text(String),
}

impl ComplexInput {
    fn value(&self) -> Result<C64, CliError> {
        match self {
            ComplexInput::Real(x) => Ok(C64::new(*x, 0.0)),
            ComplexInput::Pair([re, im]) => Ok(C64::new(*re, *im)),
            ComplexInput::Text(s) => parse_complex(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub family: Option<String>,
    pub d: Option<usize>,
    pub c: Option<ComplexInput>,
    pub g2: Option<ComplexInput>,
    pub g3: Option<ComplexInput>,
    pub coeffs_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub count: Option<usize>,
    pub chains: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub nmax: Option<usize>,
    pub rho: Option<f64>,
    pub tau: Option<f64>,
    pub nu: Option<f64>,
    pub window: Option<Vec<f64>>,
    pub res: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Contents of a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub map: MapSection,
    #[serde(default)]
    pub run: RunSection,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Overlay the flags that were given.
    fn merge(mut self, a: &RunArgs) -> Self {
        let text = |s: &Option<String>| s.clone().map(ComplexInput::Text);
        let m = &mut self.map;
        m.family = a.family.clone().or(m.family.take());
        m.d = a.d.or(m.d);
        m.c = text(&a.c).or(m.c.take());
        m.g2 = text(&a.g2).or(m.g2.take());
        m.g3 = text(&a.g3).or(m.g3.take());
        m.coeffs_file = a.coeffs_file.clone().or(m.coeffs_file.take());
        let r = &mut self.run;
        r.count = a.count.or(r.count);
        r.chains = a.chains.or(r.chains);
        r.burn_in = a.burn_in.or(r.burn_in);
        r.seed = a.seed.or(r.seed);
        r.nmax = a.nmax.or(r.nmax);
        r.rho = a.rho.or(r.rho);
        r.tau = a.tau.or(r.tau);
        r.nu = a.nu.or(r.nu);
        r.window = a.window.clone().or(r.window.take());
        r.res = a.res.or(r.res);
        r.out = a.out.clone().or(r.out.take());
        r.threads = a.threads.or(r.threads);
        self
    }
}

/// Fully resolved parameters of one run. Everything here enters the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub map: FamilySpec,
    pub count: usize,
    pub chains: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub nmax: usize,
    pub rho: f64,
    pub tau: f64,
    pub nu: f64,
    pub window: Window,
    pub res: usize,
}

impl RunConfig {
    /// Canonical JSON text: keys sorted, shortest round-trip floats.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn samples_per_chain(&self) -> usize {
        self.count / self.chains
    }
}

/// A resolved run plus the settings that do not affect its outputs.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: RunConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

/// Parses `4`, `-0.5`, `0.1+0.2i`, `2i` or `0.1,0.2`.
pub fn parse_complex(s: &str) -> Result<C64, CliError> {
    let s = s.trim();
    let bad = || CliError::Usage(format!("cannot parse complex number {s:?}"));
    if let Some((re, im)) = s.split_once(',') {
        let re: f64 = re.trim().parse().map_err(|_| bad())?;
        let im: f64 = im.trim().parse().map_err(|_| bad())?;
        return Ok(C64::new(re, im));
    }
    s.parse::<C64>().map_err(|_| bad())
}

/// Reads an explicit map file: `p <re> <im>` / `q <re> <im>` lines, lowest
/// degree first, `#` comments allowed.
pub fn read_coeffs_file(path: &Path) -> Result<(Vec<C64>, Vec<C64>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read coefficients {}: {e}", path.display())))?;
    let (mut p, mut q) = (Vec::new(), Vec::new());
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || CliError::Usage(format!("{}:{}: expected `p|q <re> <im>`", path.display(), lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [which, re, im] = fields[..] else { return Err(bad()) };
        let z = C64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?);
        match which {
            "p" => p.push(z),
            "q" => q.push(z),
            _ => return Err(bad()),
        }
    }
    Ok((p, q))
}

fn family_spec(m: &MapSection) -> Result<FamilySpec, CliError> {
    let need = |v: &Option<ComplexInput>, name: &str| -> Result<C64, CliError> {
        v.as_ref()
            .ok_or_else(|| CliError::Usage(format!("--{name} is required for this family")))?
            .value()
    };
    let degree = || m.d.ok_or_else(|| CliError::Usage("--d is required for this family".into()));
    let family = m
        .family
        .as_deref()
        .ok_or_else(|| CliError::Usage("--family is required".into()))?;
    Ok(match family {
        "power" => FamilySpec::Power { d: degree()? },
        "chebyshev" => FamilySpec::Chebyshev { d: degree()? },
        "quadratic" => FamilySpec::Quadratic { c: need(&m.c, "c")? },
        "lattes" => FamilySpec::Lattes {
            g2: need(&m.g2, "g2")?,
            g3: need(&m.g3, "g3")?,
        },
        "explicit" => {
            let path = m
                .coeffs_file
                .as_ref()
                .ok_or_else(|| CliError::Usage("--coeffs-file is required for explicit maps".into()))?;
            let (p, q) = read_coeffs_file(path)?;
            FamilySpec::Explicit { p, q }
        }
        other => return Err(CliError::Usage(format!("unknown family {other:?}"))),
    })
}

fn window(values: &[f64]) -> Result<Window, CliError> {
    let w = match *values {
        [lo, hi] => Window::square(lo, hi),
        [x_lo, x_hi, y_lo, y_hi] => Window::rect(x_lo, x_hi, y_lo, y_hi),
        _ => return Err(CliError::Usage("--window takes 2 or 4 numbers".into())),
    };
    if !(w.width > 0.0 && w.height > 0.0 && w.center.is_finite()) {
        return Err(CliError::Usage("--window must have lo < hi on each axis".into()));
    }
    Ok(w)
}

/// Largest divisor of `count` not above `MAX_CHAINS`.
pub fn default_chains(count: usize) -> usize {
    (1..=MAX_CHAINS.min(count)).rev().find(|k| count.is_multiple_of(*k)).unwrap_or(1)
}

/// Resolves flags and an optional config file into an invocation of `command`.
pub fn resolve(command: &str, args: &RunArgs) -> Result<Invocation, CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let merged = file.merge(args);
    let (m, r) = (&merged.map, &merged.run);
    let count = r.count.unwrap_or(DEFAULT_COUNT);
    if count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let chains = r.chains.unwrap_or_else(|| default_chains(count));
    if chains == 0 || count % chains != 0 {
        return Err(CliError::Usage(format!("--chains {chains} does not divide --count {count}")));
    }
    let positive = |v: f64, name: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::Usage(format!("--{name} must be positive")))
        }
    };
    let config = RunConfig {
        command: command.into(),
        map: family_spec(m)?,
        count,
        chains,
        burn_in: r.burn_in.unwrap_or(lattes_core::sampler::DEFAULT_BURN_IN),
        seed: r.seed.unwrap_or(DEFAULT_SEED),
        nmax: r.nmax.unwrap_or(DEFAULT_NMAX),
        rho: positive(r.rho.unwrap_or(DEFAULT_RHO), "rho")?,
        tau: positive(r.tau.unwrap_or(DEFAULT_TAU), "tau")?,
        nu: positive(r.nu.unwrap_or(DEFAULT_NU), "nu")?,
        window: window(r.window.as_deref().unwrap_or(&[-2.0, 2.0]))?,
        res: r.res.unwrap_or(DEFAULT_RES),
    };
    if r.threads == Some(0) {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    Ok(Invocation {
        config,
        out: r.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        threads: r.threads,
    })
}
