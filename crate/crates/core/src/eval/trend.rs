//! Prosodic trends of synthesized speech along an intensity sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{spearman, EvalError};
use crate::corpus::{Emotion, Waveform};
use crate::dsp::{
    compute_frame_features, MelSpectrogram, COL_F0, COL_LOG_ENERGY, COL_VOICING, FRAME_RATE,
};

pub const PROSODY_FEATURES: [&str; 4] = ["duration", "pitch_mean", "pitch_std", "energy"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProsodyFeatures {
    pub duration: f64,
    pub pitch_mean: Option<f64>,
    pub pitch_std: Option<f64>,
    /// Mean frame log-energy.
    pub energy: f64,
}

impl ProsodyFeatures {
    pub fn from_audio(audio: &Waveform) -> Result<Self, EvalError> {
        let ff = compute_frame_features(audio)?;
        let f0: Vec<f64> = (0..ff.n_frames())
            .filter(|&t| ff.matrix.get(t, COL_VOICING) > 0.5)
            .map(|t| ff.matrix.get(t, COL_F0))
            .collect();
        let energy = super::mean(&ff.matrix.column(COL_LOG_ENERGY));
        Ok(Self {
            duration: audio.samples.len() as f64 / audio.sample_rate as f64,
            pitch_mean: (!f0.is_empty()).then(|| super::mean(&f0)),
            pitch_std: (!f0.is_empty()).then(|| super::std_dev(&f0)),
            energy,
        })
    }

    /// Duration and energy straight from a log-mel; no pitch.
    pub fn from_mel(mel: &MelSpectrogram) -> Self {
        Self {
            duration: mel.n_frames() as f64 / FRAME_RATE,
            pitch_mean: None,
            pitch_std: None,
            energy: mel.mean_log_energy(),
        }
    }

    pub fn get(&self, feature: usize) -> Option<f64> {
        match feature {
            0 => Some(self.duration),
            1 => self.pitch_mean,
            2 => self.pitch_std,
            3 => Some(self.energy),
            _ => None,
        }
    }
}

/// Sign (+1 / -1 / 0) of the Spearman correlation between each emotion's
/// intensity and each prosodic feature, keyed `(emotion, feature)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTrends {
    pub signs: BTreeMap<String, BTreeMap<String, i8>>,
}

impl ExpectedTrends {
    pub fn get(&self, emotion: Emotion, feature: &str) -> Option<i8> {
        self.signs.get(emotion.name())?.get(feature).copied()
    }

    pub fn set(&mut self, emotion: Emotion, feature: &str, sign: i8) {
        self.signs
            .entry(emotion.name().to_string())
            .or_default()
            .insert(feature.to_string(), sign);
    }
}

fn sign(r: f64) -> i8 {
    if r > 0.0 {
        1
    } else if r < 0.0 {
        -1
    } else {
        0
    }
}

fn paired(rows: &[([f64; 4], ProsodyFeatures)], e: usize, f: usize) -> (Vec<f64>, Vec<f64>) {
    rows.iter()
        .filter_map(|(i, p)| p.get(f).map(|v| (i[e], v)))
        .unzip()
}

/// Expected trend signs from training data (intensities with prosody).
pub fn expected_trends(samples: &[([f64; 4], ProsodyFeatures)]) -> ExpectedTrends {
    let mut out = ExpectedTrends::default();
    for (e, &emotion) in Emotion::INTENSITY_ORDER.iter().enumerate() {
        for (f, name) in PROSODY_FEATURES.iter().enumerate() {
            let (x, y) = paired(samples, e, f);
            if let Some(r) = spearman(&x, &y) {
                out.set(emotion, name, sign(r));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub emotion: Emotion,
    pub feature: String,
    /// Spearman correlation with commanded intensity; `None` when undefined.
    pub correlation: Option<f64>,
    pub expected_sign: Option<i8>,
    pub matches: Option<bool>,
}

/// Synthesizes the sweep for every emotion and correlates each prosodic
/// feature with the commanded intensity.
pub fn prosody_trend_analysis(
    mut synth: impl FnMut(Emotion, f64) -> Result<ProsodyFeatures, EvalError>,
    sweep: &[f64],
    expected: &ExpectedTrends,
) -> Result<Vec<TrendRow>, EvalError> {
    if sweep.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    let mut rows = Vec::new();
    for &emotion in &Emotion::INTENSITY_ORDER {
        let variants = sweep
            .iter()
            .map(|&v| synth(emotion, v))
            .collect::<Result<Vec<_>, _>>()?;
        for (f, name) in PROSODY_FEATURES.iter().enumerate() {
            let (x, y): (Vec<f64>, Vec<f64>) = sweep
                .iter()
                .zip(&variants)
                .filter_map(|(&s, p)| p.get(f).map(|v| (s, v)))
                .unzip();
            let correlation = spearman(&x, &y);
            let expected_sign = expected.get(emotion, name);
            let matches = match (correlation, expected_sign) {
                (Some(r), Some(s)) if s != 0 => Some(sign(r) == s),
                _ => None,
            };
            rows.push(TrendRow {
                emotion,
                feature: name.to_string(),
                correlation,
                expected_sign,
                matches,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hed::DEFAULT_SWEEP;

    fn feats(duration: f64, energy: f64) -> ProsodyFeatures {
        ProsodyFeatures {
            duration,
            pitch_mean: Some(150.0),
            pitch_std: Some(10.0),
            energy,
        }
    }

    #[test]
    fn constant_synth_is_flagged() {
        let rows = prosody_trend_analysis(
            |_, _| Ok(feats(1.0, -3.0)),
            &DEFAULT_SWEEP,
            &ExpectedTrends::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 16);
        assert!(rows
            .iter()
            .all(|r| r.correlation.is_none() && r.matches.is_none()));
    }

    #[test]
    fn injected_trend_matches() {
        // training data: Sad intensity lowers energy
        let train: Vec<([f64; 4], ProsodyFeatures)> = (0..20)
            .map(|i| {
                let s = i as f64 / 19.0;
                (
                    [0.1, 0.1, s, 0.1],
                    feats(1.0 + 0.01 * (i % 3) as f64, -2.0 - s),
                )
            })
            .collect();
        let expected = expected_trends(&train);
        assert_eq!(expected.get(Emotion::Sad, "energy"), Some(-1));
        let mut calls = 0;
        let rows = prosody_trend_analysis(
            |e, v| {
                calls += 1;
                Ok(feats(1.0, if e == Emotion::Sad { -2.0 - v } else { -2.0 }))
            },
            &DEFAULT_SWEEP,
            &expected,
        )
        .unwrap();
        assert_eq!(calls, 4 * 6);
        let sad = rows
            .iter()
            .find(|r| r.emotion == Emotion::Sad && r.feature == "energy")
            .unwrap();
        assert_eq!(sad.correlation, Some(-1.0));
        assert_eq!(sad.matches, Some(true));
    }
}
