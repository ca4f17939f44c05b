//! Small statistics toolkit for the Monte Carlo checks.

use rand::Rng;
use serde::Serialize;

use crate::rng::{stream, Stream};

/// Sample mean and its standard error from the i.i.d. sample variance.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs[0], 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ranks starting at 1, ties (relative gap below `tie_tol`) sharing their
/// average rank.
pub fn ranks(xs: &[f64], tie_tol: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() {
            let (a, b) = (xs[order[j - 1]], xs[order[j]]);
            if (b - a).abs() <= tie_tol * a.abs().max(b.abs()) {
                j += 1;
            } else {
                break;
            }
        }
        // positions i..j share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = avg;
        }
        i = j;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Spearman rank correlation. A constant input has no trend: 0.
pub fn spearman(x: &[f64], y: &[f64], tie_tol: f64) -> f64 {
    assert_eq!(x.len(), y.len());
    pearson(&ranks(x, tie_tol), &ranks(y, tie_tol))
}

/// Least-squares line `y = intercept + slope·x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Least-squares `C` in `y ≈ C·x`.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> Option<f64> {
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx)
}

/// Linear interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Slope of `log(mean_i rows[i][j])` against `log x[j]`, with a percentile
/// bootstrap interval from resampling the rows (Monte Carlo samples).
///
/// Returns `None` when some column mean is not positive.
pub fn log_log_slope_bootstrap(
    x: &[f64],
    rows: &[Vec<f64>],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Option<SlopeFit> {
    let m = rows.len();
    let cols = x.len();
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let slope_of = |pick: &mut dyn FnMut() -> usize| -> Option<f64> {
        let mut means = vec![0.0; cols];
        for _ in 0..m {
            let r = &rows[pick()];
            for (s, v) in means.iter_mut().zip(r) {
                *s += v;
            }
        }
        if means.iter().any(|s| !(*s > 0.0)) {
            return None;
        }
        let ly: Vec<f64> = means.iter().map(|s| (s / m as f64).ln()).collect();
        ols(&lx, &ly).map(|(slope, _)| slope)
    };
    let mut i = 0;
    let slope = slope_of(&mut || {
        i += 1;
        i - 1
    })?;
    let mut rng = stream(seed, Stream::Bootstrap);
    let mut boots: Vec<f64> = (0..resamples)
        .filter_map(|_| slope_of(&mut || rng.random_range(0..m)))
        .collect();
    if boots.is_empty() {
        return Some(SlopeFit {
            slope,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
        });
    }
    boots.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Some(SlopeFit {
        slope,
        ci_low: quantile(&boots, tail),
        ci_high: quantile(&boots, 1.0 - tail),
    })
}
