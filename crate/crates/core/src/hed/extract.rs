use std::collections::BTreeMap;

use super::{HedError, HierarchicalED};
use crate::corpus::{slice_segments, AlignmentTrack, SegmentLevel};
use crate::dsp::FrameFeatures;
use crate::intensity::{forward_intensity, EmotionIntensity, IntensityModel};

/// Anything that can score a time span at a given level.
pub trait IntensitySource {
    fn segment_intensity(
        &self,
        level: SegmentLevel,
        start: f64,
        end: f64,
    ) -> Result<EmotionIntensity, HedError>;

    /// End time (seconds) of the material the source can score, if bounded.
    fn coverage(&self, _level: SegmentLevel) -> Option<f64> {
        None
    }
}

/// Trained models and feature streams per level. Levels may use different
/// models and feature providers.
pub struct ModelSource<'a> {
    pub models: BTreeMap<SegmentLevel, &'a IntensityModel>,
    pub features: BTreeMap<SegmentLevel, &'a FrameFeatures>,
}

impl<'a> ModelSource<'a> {
    /// One model and one feature stream for all three levels.
    pub fn uniform(model: &'a IntensityModel, features: &'a FrameFeatures) -> Self {
        Self {
            models: SegmentLevel::ALL.iter().map(|&l| (l, model)).collect(),
            features: SegmentLevel::ALL.iter().map(|&l| (l, features)).collect(),
        }
    }
}

impl IntensitySource for ModelSource<'_> {
    fn segment_intensity(
        &self,
        level: SegmentLevel,
        start: f64,
        end: f64,
    ) -> Result<EmotionIntensity, HedError> {
        let model = self
            .models
            .get(&level)
            .ok_or(HedError::MissingModel(level.name()))?;
        let ff = self
            .features
            .get(&level)
            .ok_or(HedError::MissingModel(level.name()))?;
        // very short phones still get the frame they start in
        let end = end.max(start + 0.5 / ff.frame_rate);
        let input = model.segment_input(ff, start, end)?;
        Ok(forward_intensity(model, &input)?)
    }

    fn coverage(&self, level: SegmentLevel) -> Option<f64> {
        self.features
            .get(&level)
            .map(|ff| ff.n_frames() as f64 / ff.frame_rate)
    }
}

/// Scores every phone, word and the whole utterance and stacks the results.
pub fn extract_hed(
    source: &impl IntensitySource,
    track: &AlignmentTrack,
) -> Result<HierarchicalED, HedError> {
    let segments = slice_segments(track, true)?;
    for level in SegmentLevel::ALL {
        if let Some(end) = source.coverage(level) {
            // two frames of slack at 62.5 fps
            if segments.utterance.end > end + 0.032 {
                return Err(HedError::AlignmentMismatch(format!(
                    "alignment ends at {:.3}s but {} features end at {end:.3}s",
                    segments.utterance.end,
                    level.name()
                )));
            }
        }
    }
    let utterance = source.segment_intensity(
        SegmentLevel::Utterance,
        segments.utterance.start,
        segments.utterance.end,
    )?;
    let mut words = Vec::with_capacity(segments.words.len());
    for w in &segments.words {
        if w.phones.is_empty() {
            words.push(EmotionIntensity { values: [0.0; 4] });
        } else {
            words.push(source.segment_intensity(SegmentLevel::Word, w.start, w.end)?);
        }
    }
    let phones = segments
        .phones
        .iter()
        .map(|p| source.segment_intensity(SegmentLevel::Phoneme, p.start, p.end))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HierarchicalED::from_levels(
        track, &phones, &words, &utterance,
    ))
}
