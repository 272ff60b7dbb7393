use serde::{Deserialize, Serialize};

use super::{column, HedError, HierarchicalED, Provenance};
use crate::corpus::{is_silence, Emotion, SegmentLevel};

/// 0.0, 0.2, ..., 1.0.
pub const DEFAULT_SWEEP: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditMode {
    Set,
    Scale,
}

/// Which phones or words an edit addresses. Ignored at utterance level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditTarget {
    All,
    Index(usize),
    /// Half-open `[start, end)`.
    Span(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EDEdit {
    pub level: SegmentLevel,
    pub target: EditTarget,
    pub emotion: Emotion,
    pub mode: EditMode,
    pub value: f64,
}

impl EDEdit {
    pub fn set(level: SegmentLevel, target: EditTarget, emotion: Emotion, value: f64) -> Self {
        Self {
            level,
            target,
            emotion,
            mode: EditMode::Set,
            value,
        }
    }

    pub fn scale(level: SegmentLevel, target: EditTarget, emotion: Emotion, value: f64) -> Self {
        Self {
            level,
            target,
            emotion,
            mode: EditMode::Scale,
            value,
        }
    }
}

/// Rows touched by an edit. Word edits reach every member phone; phoneme
/// spans and `All` skip silence phones, while an explicit phone index does not.
fn target_rows(hed: &HierarchicalED, edit: &EDEdit) -> Result<Vec<usize>, HedError> {
    let n = hed.n_phones();
    let n_words = hed.word_index.iter().max().map_or(0, |m| m + 1);
    let check_span = |level: &'static str, start: usize, end: usize, limit: usize| {
        if start >= end || end > limit {
            Err(HedError::IndexOutOfRange {
                level,
                index: end.max(start),
            })
        } else {
            Ok(())
        }
    };
    match edit.level {
        SegmentLevel::Utterance => Ok((0..n).collect()),
        SegmentLevel::Phoneme => {
            let voiced = |i: &usize| !is_silence(&hed.phone_symbols[*i]);
            match edit.target {
                EditTarget::Index(i) if i < n => Ok(vec![i]),
                EditTarget::Index(i) => Err(HedError::IndexOutOfRange {
                    level: "phoneme",
                    index: i,
                }),
                EditTarget::Span(a, b) => {
                    check_span("phoneme", a, b, n)?;
                    Ok((a..b).filter(voiced).collect())
                }
                EditTarget::All => Ok((0..n).filter(voiced).collect()),
            }
        }
        SegmentLevel::Word => {
            let words: Vec<usize> = match edit.target {
                EditTarget::Index(w) if hed.word_index.contains(&w) => vec![w],
                EditTarget::Index(w) => {
                    return Err(HedError::IndexOutOfRange {
                        level: "word",
                        index: w,
                    })
                }
                EditTarget::Span(a, b) => {
                    check_span("word", a, b, n_words)?;
                    (a..b).collect()
                }
                EditTarget::All => (0..n_words).collect(),
            };
            Ok((0..n)
                .filter(|&i| words.contains(&hed.word_index[i]))
                .collect())
        }
    }
}

/// Applies one edit and returns the new distribution. Only the addressed
/// `(level, emotion)` column changes; results are clamped to [0, 1].
pub fn apply_edit(hed: &HierarchicalED, edit: &EDEdit) -> Result<HierarchicalED, HedError> {
    let valid = match edit.mode {
        EditMode::Set => (0.0..=1.0).contains(&edit.value),
        EditMode::Scale => edit.value.is_finite() && edit.value >= 0.0,
    };
    if !valid {
        return Err(HedError::InvalidValue(edit.value));
    }
    let col = column(edit.level, edit.emotion).ok_or(HedError::InvalidValue(edit.value))?;
    let rows = target_rows(hed, edit)?;
    let mut out = hed.clone();
    for r in rows {
        let cell = &mut out.matrix[r][col];
        let v = match edit.mode {
            EditMode::Set => edit.value,
            EditMode::Scale => *cell as f64 * edit.value,
        };
        *cell = v.clamp(0.0, 1.0) as f32;
    }
    out.provenance = Provenance::Edited;
    Ok(out)
}

/// One edited copy per value, each setting the target entries to that value.
pub fn intensity_sweep(
    hed: &HierarchicalED,
    level: SegmentLevel,
    target: EditTarget,
    emotion: Emotion,
    values: &[f64],
) -> Result<Vec<HierarchicalED>, HedError> {
    values
        .iter()
        .map(|&v| apply_edit(hed, &EDEdit::set(level, target, emotion, v)))
        .collect()
}
