//! Mutual information gap of HED codes with respect to a categorical factor.

use std::collections::BTreeMap;

use super::EvalError;
use crate::nn::Matrix;

pub const MIG_BINS: [usize; 3] = [30, 50, 100];

/// Equal-frequency bin per value: the bin of a value is set by the sorted
/// position of its first occurrence, so tied values share a bin.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut first = 0;
    for pos in 0..n {
        if pos > 0 && values[order[pos]] != values[order[pos - 1]] {
            first = pos;
        }
        out[order[pos]] = (first * bins / n).min(bins - 1);
    }
    out
}

/// Entropy in nats of a label sequence.
pub fn entropy(labels: &[usize]) -> f64 {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    -counts
        .values()
        .map(|&c| c as f64 / n)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Plug-in mutual information in nats from the joint histogram.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ma: BTreeMap<usize, usize> = BTreeMap::new();
    let mut mb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (pxy * n * n / (ma[&x] as f64 * mb[&y] as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// `(I(v, z*) - I(v, z°)) / H(v)` for the top two code dimensions.
pub fn mig(codes: &Matrix, factors: &[usize], bins: usize) -> Result<f64, EvalError> {
    let n = codes.rows();
    if factors.len() != n {
        return Err(EvalError::DimensionMismatch {
            expected: n,
            found: factors.len(),
        });
    }
    if bins == 0 || n < bins {
        return Err(EvalError::TooFewSamples {
            needed: bins,
            found: n,
        });
    }
    if codes.cols() < 2 {
        return Err(EvalError::DimensionMismatch {
            expected: 2,
            found: codes.cols(),
        });
    }
    let h = entropy(factors);
    if h <= 0.0 {
        return Err(EvalError::DegenerateFactor);
    }
    let mut mis: Vec<f64> = (0..codes.cols())
        .map(|j| mutual_information(factors, &equal_frequency_bins(&codes.column(j), bins)))
        .collect();
    mis.sort_by(|a, b| b.total_cmp(a));
    Ok(((mis[0] - mis[1]) / h).max(0.0))
}
