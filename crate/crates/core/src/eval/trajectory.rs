//! Fixed-length summaries of intensity trajectories.

use serde::{Deserialize, Serialize};

use super::{mean, percentile_sorted, std_dev};
use crate::nn::Matrix;

pub const STATS_PER_EMOTION: usize = 10;
pub const STAT_NAMES: [&str; STATS_PER_EMOTION] = [
    "mean",
    "median",
    "std",
    "max",
    "min",
    "iqr",
    "slope",
    "n_peaks",
    "mean_peak_prominence",
    "lag1_autocorr",
];

/// 40 values: for each emotion column the ten statistics in [`STAT_NAMES`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub values: Vec<f64>,
}

/// Least-squares slope against `0..n`.
pub fn slope(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let tm = (n - 1) as f64 / 2.0;
    let xm = mean(x);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - tm;
        num += dt * (v - xm);
        den += dt * dt;
    }
    num / den
}

/// Strict interior local maxima with their prominences. The base on each
/// side is the minimum reached before the series rises above the peak.
pub fn peaks(x: &[f64]) -> Vec<(usize, f64)> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 1..n - 1 {
        if x[i] > x[i - 1] && x[i] > x[i + 1] {
            let mut left = x[i];
            for j in (0..i).rev() {
                if x[j] > x[i] {
                    break;
                }
                left = left.min(x[j]);
            }
            let mut right = x[i];
            for &v in &x[i + 1..] {
                if v > x[i] {
                    break;
                }
                right = right.min(v);
            }
            out.push((i, x[i] - left.max(right)));
        }
    }
    out
}

/// Lag-1 autocorrelation with the mean removed; 0 for constant series.
pub fn lag1_autocorr(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if den <= 0.0 {
        return 0.0;
    }
    x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / den
}

pub fn summarize_series(x: &[f64]) -> [f64; STATS_PER_EMOTION] {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = peaks(x);
    let prominence = if p.is_empty() {
        0.0
    } else {
        p.iter().map(|q| q.1).sum::<f64>() / p.len() as f64
    };
    let (min, max) = match (sorted.first(), sorted.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 0.0),
    };
    [
        mean(x),
        percentile_sorted(&sorted, 0.5),
        std_dev(x),
        max,
        min,
        percentile_sorted(&sorted, 0.75) - percentile_sorted(&sorted, 0.25),
        slope(x),
        p.len() as f64,
        prominence,
        lag1_autocorr(x),
    ]
}

/// Summarizes a `T x 4` trajectory (word or phone intensities).
pub fn summarize_trajectory(intensities: &Matrix) -> TrajectorySummary {
    let values = (0..intensities.cols())
        .flat_map(|c| summarize_series(&intensities.column(c)))
        .collect();
    TrajectorySummary { values }
}
