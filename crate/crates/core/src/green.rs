//! Green function `G = lim d^-n log ||F^n||` and its Laplacian density.
//!
//! Iterates are renormalized by their max-modulus coordinate at every step and
//! the discarded log-scales are accumulated with weight `d^-(j+1)`, so the
//! telescoping sum is exact and never overflows. The map's Green constant `M`
//! bounds every increment, which gives the tail bound `M d^-n / (d - 1)`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::proj_maps::{ProjPoint, RationalMap};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;
pub const MIN_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenValue {
    pub value: f64,
    pub iterations: usize,
    pub error_bound: f64,
}

fn checked_lift(lift: (C64, C64)) -> Result<(C64, C64, f64)> {
    let (z0, z1) = lift;
    if !(z0.is_finite() && z1.is_finite()) {
        return Err(Error::InvalidPoint("non-finite lift".into()));
    }
    let norm = z0.norm().max(z1.norm());
    if norm == 0.0 {
        return Err(Error::InvalidPoint("Green function needs a nonzero lift".into()));
    }
    Ok((z0, z1, norm))
}

/// `G(Z)` for a nonzero lift `Z = (z0, z1)` to within `tol`.
pub fn green_function(map: &RationalMap, lift: (C64, C64), tol: f64) -> Result<GreenValue> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let (z0, z1, norm) = checked_lift(lift)?;
    let d = map.degree() as f64;
    let bound = map.green_constant();
    let mut acc = norm.ln();
    let mut x = ProjPoint::new(z0, z1)?;
    let mut weight = 1.0;
    let mut tail = f64::INFINITY;
    for j in 0..=MAX_ITERATIONS {
        tail = bound * weight / (d - 1.0);
        if tail <= tol {
            return Ok(GreenValue {
                value: acc,
                iterations: j,
                error_bound: tail,
            });
        }
        let (a, b) = map.lift_image(&x);
        weight /= d;
        acc += weight * a.norm().max(b.norm()).ln();
        x = ProjPoint::new(a, b)?;
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        tail_bound: tail,
    })
}

/// Partial potentials `G_0, ..., G_n` with `G_k = d^-k log ||F^k(Z)||`.
pub fn green_partial_sums(map: &RationalMap, lift: (C64, C64), n: usize) -> Result<Vec<f64>> {
    let (z0, z1, norm) = checked_lift(lift)?;
    let d = map.degree() as f64;
    let mut acc = norm.ln();
    let mut x = ProjPoint::new(z0, z1)?;
    let mut weight = 1.0;
    let mut sums = Vec::with_capacity(n + 1);
    sums.push(acc);
    for _ in 0..n {
        let (a, b) = map.lift_image(&x);
        weight /= d;
        acc += weight * a.norm().max(b.norm()).ln();
        x = ProjPoint::new(a, b)?;
        sums.push(acc);
    }
    Ok(sums)
}

/// Fitted geometric decay of `sup_x |G_{n+1}(x) - G_n(x)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// `exp(slope)`, to be compared with `1 / d`.
    pub factor: f64,
    pub slope: f64,
    pub expected_factor: f64,
}

/// Least-squares fit of `log sup_x |G_{n+1}(x) - G_n(x)|` over `n` in
/// `n_lo..=n_hi`, with the supremum taken over `points` (unit lifts).
///
/// Returns `None` when the differences vanish exactly (the potential is then
/// reached in finitely many steps, as for `z^d` with its standard lift).
pub fn green_convergence_rate(
    map: &RationalMap,
    points: &[ProjPoint],
    n_lo: usize,
    n_hi: usize,
) -> Result<Option<DecayFit>> {
    if n_hi <= n_lo || points.is_empty() {
        return Err(Error::InvalidParameter("need n_lo < n_hi and at least one point".into()));
    }
    let mut sup = vec![0.0f64; n_hi + 1];
    for x in points {
        let sums = green_partial_sums(map, x.coords(), n_hi + 1)?;
        for n in n_lo..=n_hi {
            sup[n] = sup[n].max((sums[n + 1] - sums[n]).abs());
        }
    }
    if sup[n_lo..=n_hi].iter().any(|s| !(*s > 0.0)) {
        return Ok(None);
    }
    let xs: Vec<f64> = (n_lo..=n_hi).map(|n| n as f64).collect();
    let ys: Vec<f64> = (n_lo..=n_hi).map(|n| sup[n].ln()).collect();
    let slope = crate::stats::least_squares(&xs, &ys).slope;
    Ok(Some(DecayFit {
        factor: slope.exp(),
        slope,
        expected_factor: 1.0 / map.degree() as f64,
    }))
}

/// Axis-aligned rectangle in the affine chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: C64,
    pub width: f64,
    pub height: f64,
}

impl Window {
    pub fn square(lo: f64, hi: f64) -> Self {
        Self::rect(lo, hi, lo, hi)
    }

    pub fn rect(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Self {
            center: C64::new(0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi)),
            width: x_hi - x_lo,
            height: y_hi - y_lo,
        }
    }

    pub fn x_lo(&self) -> f64 {
        self.center.re - 0.5 * self.width
    }

    pub fn y_lo(&self) -> f64 {
        self.center.im - 0.5 * self.height
    }

    pub fn contains(&self, z: C64) -> bool {
        (z.re - self.center.re).abs() <= 0.5 * self.width
            && (z.im - self.center.im).abs() <= 0.5 * self.height
    }
}

/// Cell densities of the Green measure on a window, row-major from the
/// bottom-left cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    /// Mass per unit chart area, clipped at zero.
    pub values: Vec<f64>,
    pub mass: f64,
    /// Percentage of cells whose raw Laplacian was negative.
    pub negative_percent: f64,
    /// Mass removed by clipping (nonnegative).
    pub clipped_mass: f64,
}

impl DensityGrid {
    pub fn cell_size(&self) -> (f64, f64) {
        (self.window.width / self.nx as f64, self.window.height / self.ny as f64)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> C64 {
        let (hx, hy) = self.cell_size();
        C64::new(
            self.window.x_lo() + (i as f64 + 0.5) * hx,
            self.window.y_lo() + (j as f64 + 0.5) * hy,
        )
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Mass of the cells whose centers satisfy `keep`.
    pub fn mass_where(&self, keep: impl Fn(C64) -> bool) -> f64 {
        let (hx, hy) = self.cell_size();
        let mut total = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if keep(self.cell_center(i, j)) {
                    total += self.value(i, j) * hx * hy;
                }
            }
        }
        total
    }

    /// Smallest density over the cells whose centers lie in `sub`.
    pub fn min_over(&self, sub: &Window) -> f64 {
        let mut min = f64::INFINITY;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if sub.contains(self.cell_center(i, j)) {
                    min = min.min(self.value(i, j));
                }
            }
        }
        min
    }
}

/// Green-measure density `(1/2pi) Laplacian g` with `g(z) = G(z, 1)`, by the
/// five-point stencil.
///
/// The stencil reads one ring of halo values computed from `G` itself outside
/// the window, so the grid mass equals the discrete boundary flux of `g`.
pub fn green_density_grid(
    map: &RationalMap,
    window: Window,
    nx: usize,
    ny: usize,
    tol: f64,
) -> Result<DensityGrid> {
    if nx < MIN_RESOLUTION || ny < MIN_RESOLUTION {
        return Err(Error::InvalidParameter(format!(
            "resolution must be at least {MIN_RESOLUTION} per axis"
        )));
    }
    if !(window.width > 0.0 && window.height > 0.0) {
        return Err(Error::InvalidParameter("window must have positive size".into()));
    }
    let hx = window.width / nx as f64;
    let hy = window.height / ny as f64;
    let x0 = window.x_lo() - 0.5 * hx;
    let y0 = window.y_lo() - 0.5 * hy;
    let wx = nx + 2;
    let one = C64::new(1.0, 0.0);

    // halo grid, index (j, i) -> point x0 + i hx, y0 + j hy
    let rows: Vec<Vec<f64>> = (0..ny + 2)
        .into_par_iter()
        .map(|j| {
            (0..wx)
                .map(|i| {
                    let z = C64::new(x0 + i as f64 * hx, y0 + j as f64 * hy);
                    green_function(map, (z, one), tol).map(|g| g.value)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = Vec::with_capacity(nx * ny);
    let mut negative = 0usize;
    let mut clipped_mass = 0.0;
    for j in 1..=ny {
        for i in 1..=nx {
            let c = rows[j][i];
            let lap = (rows[j][i - 1] + rows[j][i + 1] - 2.0 * c) / (hx * hx)
                + (rows[j - 1][i] + rows[j + 1][i] - 2.0 * c) / (hy * hy);
            let density = lap / (2.0 * PI);
            if density < 0.0 {
                negative += 1;
                clipped_mass -= density * hx * hy;
                values.push(0.0);
            } else {
                values.push(density);
            }
        }
    }
    let mass = values.iter().sum::<f64>() * hx * hy;
    Ok(DensityGrid {
        window,
        nx,
        ny,
        values,
        mass,
        negative_percent: 100.0 * negative as f64 / (nx * ny) as f64,
        clipped_mass,
    })
}
