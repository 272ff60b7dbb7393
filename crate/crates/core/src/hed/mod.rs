//! Hierarchical emotion distributions: one 12-value row per phone stacking
//! phoneme-, word- and utterance-level intensities, plus editing.

mod edit;
mod extract;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AlignmentTrack, Emotion, SegmentLevel};
use crate::intensity::{EmotionIntensity, N_EMOTIONS};
use crate::nn::Matrix;

pub use edit::{apply_edit, intensity_sweep, EDEdit, EditMode, EditTarget, DEFAULT_SWEEP};
pub use extract::{extract_hed, IntensitySource, ModelSource};

pub const HED_DIM: usize = 12;
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HedError {
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt HED document: {0}")]
    CorruptPayload(String),
    #[error("{level} index {index} out of range")]
    IndexOutOfRange { level: &'static str, index: usize },
    #[error("invalid edit value {0}")]
    InvalidValue(f64),
    #[error("alignment does not match features: {0}")]
    AlignmentMismatch(String),
    #[error("no intensity model for the {0} level")]
    MissingModel(&'static str),
    #[error("block consistency violated: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Intensity(#[from] crate::intensity::IntensityError),
    #[error(transparent)]
    Alignment(#[from] crate::corpus::AlignmentError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Extracted,
    Edited,
    Manual,
}

/// Column of `emotion` inside the block for `level`.
pub fn column(level: SegmentLevel, emotion: Emotion) -> Option<usize> {
    let block = match level {
        SegmentLevel::Phoneme => 0,
        SegmentLevel::Word => 1,
        SegmentLevel::Utterance => 2,
    };
    emotion.intensity_index().map(|k| block * N_EMOTIONS + k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalED {
    pub utterance_id: String,
    pub phone_symbols: Vec<String>,
    pub word_index: Vec<usize>,
    /// `n_phones` rows of `[phoneme | word | utterance] x [A, H, S, Sur]`.
    pub matrix: Vec<[f32; HED_DIM]>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct HedDocument {
    version: u32,
    utterance_id: String,
    emotions: Vec<String>,
    levels: Vec<String>,
    phones: Vec<String>,
    word_index: Vec<usize>,
    matrix: Vec<Vec<f32>>,
    #[serde(default)]
    provenance: Provenance,
}

impl HierarchicalED {
    /// Assembles rows from per-segment intensities.
    pub fn from_levels(
        track: &AlignmentTrack,
        phones: &[EmotionIntensity],
        words: &[EmotionIntensity],
        utterance: &EmotionIntensity,
    ) -> Self {
        let matrix = track
            .phones
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut row = [0.0f32; HED_DIM];
                for k in 0..N_EMOTIONS {
                    row[k] = clamp01(phones[i].values[k]);
                    row[N_EMOTIONS + k] = clamp01(words[p.word_index].values[k]);
                    row[2 * N_EMOTIONS + k] = clamp01(utterance.values[k]);
                }
                row
            })
            .collect();
        Self {
            utterance_id: track.utterance_id.clone(),
            phone_symbols: track.phones.iter().map(|p| p.symbol.clone()).collect(),
            word_index: track.phones.iter().map(|p| p.word_index).collect(),
            matrix,
            provenance: Provenance::Extracted,
        }
    }

    pub fn n_phones(&self) -> usize {
        self.matrix.len()
    }

    pub fn get(&self, row: usize, level: SegmentLevel, emotion: Emotion) -> Option<f32> {
        let c = column(level, emotion)?;
        self.matrix.get(row).map(|r| r[c])
    }

    /// Rows as an `n x 12` f64 matrix.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.matrix.len(), HED_DIM, |r, c| self.matrix[r][c] as f64)
    }

    /// Checks ranges, the word and utterance replication rules, and shapes.
    pub fn check_consistency(&self) -> Result<(), HedError> {
        let n = self.matrix.len();
        if self.phone_symbols.len() != n || self.word_index.len() != n {
            return Err(HedError::Inconsistent(format!(
                "{n} rows, {} symbols, {} word indices",
                self.phone_symbols.len(),
                self.word_index.len()
            )));
        }
        for (i, row) in self.matrix.iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(HedError::Inconsistent(format!("row {i} holds {v}")));
            }
            let first = &self.matrix[0];
            if row[2 * N_EMOTIONS..] != first[2 * N_EMOTIONS..] {
                return Err(HedError::Inconsistent(format!(
                    "utterance block differs at row {i}"
                )));
            }
            if let Some(j) = self
                .word_index
                .iter()
                .position(|&w| w == self.word_index[i])
            {
                if row[N_EMOTIONS..2 * N_EMOTIONS] != self.matrix[j][N_EMOTIONS..2 * N_EMOTIONS] {
                    return Err(HedError::Inconsistent(format!(
                        "word {} block differs at row {i}",
                        self.word_index[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = HedDocument {
            version: SCHEMA_VERSION,
            utterance_id: self.utterance_id.clone(),
            emotions: Emotion::INTENSITY_ORDER
                .iter()
                .map(|e| e.name().to_string())
                .collect(),
            levels: SegmentLevel::ALL
                .iter()
                .map(|l| l.name().to_string())
                .collect(),
            phones: self.phone_symbols.clone(),
            word_index: self.word_index.clone(),
            matrix: self.matrix.iter().map(|r| r.to_vec()).collect(),
            provenance: self.provenance,
        };
        serde_json::to_string(&doc).expect("HED serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, HedError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| HedError::CorruptPayload(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| HedError::CorruptPayload("missing version".into()))?;
        if version != SCHEMA_VERSION as u64 {
            return Err(HedError::SchemaVersionMismatch {
                found: version as u32,
                expected: SCHEMA_VERSION,
            });
        }
        let doc: HedDocument =
            serde_json::from_value(value).map_err(|e| HedError::CorruptPayload(e.to_string()))?;
        let emotions: Vec<&str> = Emotion::INTENSITY_ORDER.iter().map(|e| e.name()).collect();
        let levels: Vec<&str> = SegmentLevel::ALL.iter().map(|l| l.name()).collect();
        if doc.emotions != emotions || doc.levels != levels {
            return Err(HedError::CorruptPayload("unexpected column layout".into()));
        }
        let mut matrix = Vec::with_capacity(doc.matrix.len());
        for (i, row) in doc.matrix.iter().enumerate() {
            let row: [f32; HED_DIM] = row.as_slice().try_into().map_err(|_| {
                HedError::CorruptPayload(format!("row {i} has {} values", row.len()))
            })?;
            matrix.push(row);
        }
        let hed = Self {
            utterance_id: doc.utterance_id,
            phone_symbols: doc.phones,
            word_index: doc.word_index,
            matrix,
            provenance: doc.provenance,
        };
        hed.check_consistency()
            .map_err(|e| HedError::CorruptPayload(e.to_string()))?;
        Ok(hed)
    }
}

fn clamp01(v: f64) -> f32 {
    (v.clamp(0.0, 1.0)) as f32
}
