use serde::{Deserialize, Serialize};

use super::{intensities_from_logits, HeadLogits, IntensityError, IntensityModel};
use crate::nn::Matrix;

const HIST_BINS: usize = 10;
const PROB_FLOOR: f64 = 1e-12;

/// Head logits for a set of calibration segments (normally the training segments).
#[derive(Clone, Debug, Default)]
pub struct CalibrationSet {
    pub logits: Vec<HeadLogits>,
}

impl CalibrationSet {
    pub fn from_model<'a>(
        model: &IntensityModel,
        inputs: impl IntoIterator<Item = &'a Matrix>,
    ) -> Result<Self, IntensityError> {
        let logits = inputs
            .into_iter()
            .map(|x| model.logits(x))
            .collect::<Result<_, _>>()?;
        Ok(Self { logits })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityPick {
    pub alpha: f64,
    /// `(alpha, KL)` for every grid point.
    pub scores: Vec<(f64, f64)>,
}

/// 1.1, 1.2, ..., 3.0.
pub fn alpha_grid() -> Vec<f64> {
    (11..=30).map(|k| k as f64 / 10.0).collect()
}

/// `KL(uniform || q)` where `q` is the 10-bin histogram of `values` on [0, 1].
pub fn histogram_kl_from_uniform(values: &[f64]) -> f64 {
    let mut counts = [0usize; HIST_BINS];
    for &v in values {
        let b = ((v * HIST_BINS as f64).floor().max(0.0) as usize).min(HIST_BINS - 1);
        counts[b] += 1;
    }
    let n = values.len().max(1) as f64;
    let u = 1.0 / HIST_BINS as f64;
    counts
        .iter()
        .map(|&c| {
            let q = (c as f64 / n).max(PROB_FLOOR);
            u * (u / q).ln()
        })
        .sum()
}

/// Picks the grid `alpha` whose intensity histogram is closest to uniform.
/// Every intensity value of every segment enters the histogram.
pub fn select_alpha(set: &CalibrationSet) -> Result<IntensityPick, IntensityError> {
    if set.logits.is_empty() {
        return Err(IntensityError::EmptyCalibrationSet);
    }
    let mut scores = Vec::with_capacity(20);
    let mut best: Option<(f64, f64)> = None;
    for alpha in alpha_grid() {
        let mut values = Vec::with_capacity(set.logits.len() * 4);
        for z in &set.logits {
            values.extend(intensities_from_logits(z, alpha)?.values);
        }
        let kl = histogram_kl_from_uniform(&values);
        scores.push((alpha, kl));
        // strict comparison keeps the smaller alpha on ties
        if best.map_or(true, |(_, b)| kl < b) {
            best = Some((alpha, kl));
        }
    }
    Ok(IntensityPick {
        alpha: best.map(|b| b.0).unwrap_or(1.1),
        scores,
    })
}
