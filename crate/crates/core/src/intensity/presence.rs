use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EmotionIntensity, IntensityError};
use crate::corpus::{Emotion, SegmentLevel};

/// A test segment with its ground-truth label and predicted intensities.
#[derive(Clone, Debug)]
pub struct ScoredSegment {
    pub level: SegmentLevel,
    pub label: Emotion,
    pub intensity: EmotionIntensity,
}

/// Accuracies keyed `emotion -> level -> fraction`. Cells without segments are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PresenceTable {
    /// Binary presence decision (`intensity >= 0.5`) against `label == emotion`,
    /// over every segment of the level.
    pub presence: BTreeMap<String, BTreeMap<String, f64>>,
    /// Fraction of segments labelled with the emotion whose highest intensity is that emotion.
    pub argmax: BTreeMap<String, BTreeMap<String, f64>>,
}

impl PresenceTable {
    pub fn presence_at(&self, e: Emotion, level: SegmentLevel) -> Option<f64> {
        self.presence.get(e.name())?.get(level.name()).copied()
    }

    pub fn argmax_at(&self, e: Emotion, level: SegmentLevel) -> Option<f64> {
        self.argmax.get(e.name())?.get(level.name()).copied()
    }

    /// Argmax accuracy pooled over the four emotions at one level.
    pub fn argmax_overall(&self, level: SegmentLevel, segments: &[ScoredSegment]) -> Option<f64> {
        let hits: Vec<bool> = segments
            .iter()
            .filter(|s| s.level == level)
            .filter_map(|s| s.label.intensity_index().map(|i| s.intensity.argmax() == i))
            .collect();
        (!hits.is_empty()).then(|| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
    }
}

pub fn presence_accuracy(segments: &[ScoredSegment]) -> Result<PresenceTable, IntensityError> {
    if segments.is_empty() {
        return Err(IntensityError::EmptyTestSet);
    }
    let mut table = PresenceTable::default();
    for e in Emotion::INTENSITY_ORDER {
        let k = e.intensity_index().expect("non-neutral");
        for level in SegmentLevel::ALL {
            let at_level: Vec<&ScoredSegment> =
                segments.iter().filter(|s| s.level == level).collect();
            if at_level.is_empty() {
                continue;
            }
            let correct = at_level
                .iter()
                .filter(|s| (s.intensity.values[k] >= 0.5) == (s.label == e))
                .count();
            table
                .presence
                .entry(e.name().to_string())
                .or_default()
                .insert(
                    level.name().to_string(),
                    correct as f64 / at_level.len() as f64,
                );

            let labelled: Vec<&&ScoredSegment> = at_level.iter().filter(|s| s.label == e).collect();
            if !labelled.is_empty() {
                let hits = labelled
                    .iter()
                    .filter(|s| s.intensity.argmax() == k)
                    .count();
                table
                    .argmax
                    .entry(e.name().to_string())
                    .or_default()
                    .insert(
                        level.name().to_string(),
                        hits as f64 / labelled.len() as f64,
                    );
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segments(f: impl Fn(Emotion) -> [f64; 4]) -> Vec<ScoredSegment> {
        let mut out = Vec::new();
        for level in SegmentLevel::ALL {
            for e in Emotion::INTENSITY_ORDER {
                for _ in 0..5 {
                    out.push(ScoredSegment {
                        level,
                        label: e,
                        intensity: EmotionIntensity { values: f(e) },
                    });
                }
            }
        }
        out
    }

    #[test]
    fn oracle_scores_perfectly() {
        let segs = segments(|e| {
            let mut v = [0.0; 4];
            v[e.intensity_index().unwrap()] = 1.0;
            v
        });
        let t = presence_accuracy(&segs).unwrap();
        for e in Emotion::INTENSITY_ORDER {
            for l in SegmentLevel::ALL {
                assert_eq!(t.presence_at(e, l), Some(1.0));
                assert_eq!(t.argmax_at(e, l), Some(1.0));
            }
        }
    }

    #[test]
    fn uniform_intensities_give_chance_argmax() {
        let segs = segments(|_| [0.25; 4]);
        let t = presence_accuracy(&segs).unwrap();
        let acc = t.argmax_overall(SegmentLevel::Utterance, &segs).unwrap();
        assert!((acc - 0.25).abs() < 1e-12);
        // nothing is ever "present", so presence accuracy is the negative rate
        assert_eq!(t.presence_at(Emotion::Sad, SegmentLevel::Word), Some(0.75));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(
            presence_accuracy(&[]),
            Err(IntensityError::EmptyTestSet)
        ));
    }
}
