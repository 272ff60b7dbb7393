//! Probe-based controllability of per-emotion intensity.

use serde::{Deserialize, Serialize};

use super::{pearson, EvalError};
use crate::corpus::Emotion;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub positive: f64,
    pub negative: f64,
    pub score: f64,
    /// Mean correlation, `[target][predicted]` in intensity order; `None`
    /// where no case gave a defined correlation.
    pub correlation: [[Option<f64>; 4]; 4],
    /// (target, predicted, case) triples skipped because a series was constant.
    pub skipped: usize,
    pub evaluated: usize,
    /// False when every pair was skipped.
    pub defined: bool,
}

/// Sweeps every target emotion for every case, probes each synthesized
/// variant and correlates commanded intensity with the probe outputs.
///
/// `synth(case, target, value)` produces an artifact; `probe` maps it to
/// four intensities in [`Emotion::INTENSITY_ORDER`].
pub fn controllability_score<T>(
    mut probe: impl FnMut(&T) -> Result<[f64; 4], EvalError>,
    mut synth: impl FnMut(usize, Emotion, f64) -> Result<T, EvalError>,
    n_cases: usize,
    sweep: &[f64],
) -> Result<ControllabilityReport, EvalError> {
    if n_cases == 0 || sweep.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    let mut sums = [[0.0; 4]; 4];
    let mut counts = [[0usize; 4]; 4];
    let mut floored_sum = 0.0;
    let mut floored_count = 0usize;
    let mut skipped = 0;
    let mut evaluated = 0;
    for case in 0..n_cases {
        for (ti, &target) in Emotion::INTENSITY_ORDER.iter().enumerate() {
            let mut preds = vec![[0.0; 4]; sweep.len()];
            for (k, &v) in sweep.iter().enumerate() {
                let artifact = synth(case, target, v)?;
                preds[k] = probe(&artifact)?;
            }
            for pi in 0..4 {
                let series: Vec<f64> = preds.iter().map(|p| p[pi]).collect();
                match pearson(sweep, &series) {
                    Some(r) => {
                        evaluated += 1;
                        sums[ti][pi] += r;
                        counts[ti][pi] += 1;
                        if ti != pi {
                            floored_sum += r.max(0.0);
                            floored_count += 1;
                        }
                    }
                    None => skipped += 1,
                }
            }
        }
    }
    let mut correlation = [[None; 4]; 4];
    let mut diag = Vec::new();
    for t in 0..4 {
        for p in 0..4 {
            if counts[t][p] > 0 {
                let m = sums[t][p] / counts[t][p] as f64;
                correlation[t][p] = Some(m);
                if t == p {
                    diag.push((m, counts[t][p]));
                }
            }
        }
    }
    let diag_count: usize = diag.iter().map(|d| d.1).sum();
    let positive = if diag_count > 0 {
        diag.iter().map(|(m, c)| m * *c as f64).sum::<f64>() / diag_count as f64
    } else {
        0.0
    };
    let negative = if floored_count > 0 {
        floored_sum / floored_count as f64
    } else {
        0.0
    };
    Ok(ControllabilityReport {
        positive,
        negative,
        score: positive - negative,
        correlation,
        skipped,
        evaluated,
        defined: evaluated > 0,
    })
}
