//! Small statistics helpers shared by the estimators.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Ordinary least-squares standard error of the slope.
    pub slope_stderr: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if xs.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        slope_stderr,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and standard error from the spread of group means. The error is
/// infinite with fewer than two nonempty groups.
pub fn grouped_mean_stderr(groups: &[Vec<f64>]) -> (f64, f64) {
    let total: usize = groups.iter().map(Vec::len).sum();
    let overall = groups.iter().flatten().sum::<f64>() / total as f64;
    if groups.iter().filter(|g| !g.is_empty()).count() < 2 {
        return (overall, f64::INFINITY);
    }
    let k = groups.len() as f64;
    // weighted by group size so unequal groups do not bias the variance
    let var: f64 = groups
        .iter()
        .map(|g| {
            let w = g.len() as f64 / total as f64;
            w * w * (mean(g) - overall).powi(2)
        })
        .sum::<f64>()
        * k
        / (k - 1.0);
    (overall, var.sqrt())
}

/// Batch-means estimate over `batches` contiguous batches of `values`.
pub fn batch_mean_stderr(values: &[f64], batches: usize) -> (f64, f64) {
    let batches = batches.clamp(2, values.len().max(2));
    let groups: Vec<Vec<f64>> = (0..batches)
        .map(|b| {
            let lo = b * values.len() / batches;
            let hi = (b + 1) * values.len() / batches;
            values[lo..hi].to_vec()
        })
        .filter(|g| !g.is_empty())
        .collect();
    grouped_mean_stderr(&groups)
}

/// Wilson score interval at two-sided 95%: `(center, half_width)`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 0.0);
    }
    let z = 1.959963984540054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (center, half)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let fit = least_squares(&xs, &ys);
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 1.0).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn batch_stderr_of_iid_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let (m, se) = batch_mean_stderr(&xs, 100);
        let expected = (1.0f64 / 12.0 / 1e5).sqrt();
        assert!((m - 0.5).abs() < 4.0 * expected);
        assert!((se / expected - 1.0).abs() < 0.3, "se {se} vs {expected}");
    }

    #[test]
    fn wilson_is_inside_unit_interval() {
        let (c, h) = wilson_interval(0, 50);
        assert!(c - h >= -1e-15 && c + h <= 1.0);
        let (c, h) = wilson_interval(50, 50);
        assert!(c + h <= 1.0 + 1e-15 && c - h > 0.9);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&a, &[4.0, 5.0]), 1.0);
        assert!((ks_distance(&[1.0, 2.0], &[1.5]) - 0.5).abs() < 1e-15);
    }
}
