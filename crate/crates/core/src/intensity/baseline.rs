//! One-vs-rest linear SVM over segment functionals, used as a presence baseline.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmotionIntensity, IntensityError, SegmentSample, N_EMOTIONS};
use crate::dsp::NormStats;
use crate::nn::sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearSvmBaseline {
    pub norm: NormStats,
    /// One `(weights, bias)` per emotion.
    pub planes: Vec<(Vec<f64>, f64)>,
}

impl LinearSvmBaseline {
    /// Pegasos-style subgradient training. Samples must carry single-row
    /// functionals inputs; Neutral segments act as negatives for every emotion.
    pub fn train(samples: &[SegmentSample], config: &SvmConfig) -> Result<Self, IntensityError> {
        if samples.is_empty() {
            return Err(IntensityError::NoTrainingData);
        }
        let norm = NormStats::fit(samples.iter().map(|s| s.input.row(0)))?;
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| norm.apply(s.input.row(0))).collect();
        let dim = norm.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut planes = Vec::with_capacity(N_EMOTIONS);
        for e in 0..N_EMOTIONS {
            let ys: Vec<f64> = samples
                .iter()
                .map(|s| {
                    if s.label.intensity_index() == Some(e) {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            let mut w = vec![0.0; dim];
            let mut b = 0.0;
            let mut t = 0usize;
            let mut order: Vec<usize> = (0..xs.len()).collect();
            for _ in 0..config.epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    t += 1;
                    let eta = 1.0 / (config.lambda * t as f64);
                    let margin = ys[i] * (dot(&w, &xs[i]) + b);
                    w.iter_mut().for_each(|v| *v *= 1.0 - eta * config.lambda);
                    if margin < 1.0 {
                        for (v, x) in w.iter_mut().zip(&xs[i]) {
                            *v += eta * ys[i] * x;
                        }
                        b += eta * ys[i] * 0.01;
                    }
                }
            }
            planes.push((w, b));
        }
        Ok(Self { norm, planes })
    }

    pub fn decision(&self, functionals: &[f64]) -> [f64; N_EMOTIONS] {
        let x = self.norm.apply(functionals);
        let mut out = [0.0; N_EMOTIONS];
        for (o, (w, b)) in out.iter_mut().zip(&self.planes) {
            *o = dot(w, &x) + b;
        }
        out
    }

    /// Squashes margins through a logistic so that `>= 0.5` means a positive margin.
    pub fn intensity(&self, functionals: &[f64]) -> EmotionIntensity {
        EmotionIntensity {
            values: self.decision(functionals).map(sigmoid),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
