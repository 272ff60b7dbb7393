//! Segment-level emotion intensity extraction.
//!
//! A shared two-layer extractor (`Linear -> ReLU -> Linear`) runs on every
//! frame of a segment (or once on its functionals), the outputs are
//! mean-pooled, and either a 4-way SER head or four binary EPR heads turn the
//! pooled vector into emotion intensities through a base-`alpha` softmax.
//! An adversarial speaker/gender classifier sits behind a gradient reversal
//! layer during training.

mod baseline;
mod calibration;
mod presence;
mod train;

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Emotion;
use crate::dsp::{functionals_of_rows, FrameFeatures, NormStats};
use crate::nn::{Graph, Linear, Matrix, ParamStore, Var};

pub use baseline::{LinearSvmBaseline, SvmConfig};
pub use calibration::{
    alpha_grid, histogram_kl_from_uniform, select_alpha, CalibrationSet, IntensityPick,
};
pub use presence::{presence_accuracy, PresenceTable, ScoredSegment};
pub use train::{
    build_segment_dataset, score_segments, stabilize_adversary, train_intensity_model,
    CandidateReport, SegmentDataset, SegmentSample, TrainConfig, TrainReport,
};

pub const N_EMOTIONS: usize = 4;
const CHECKPOINT_MAGIC: &[u8; 4] = b"HEDI";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IntensityError {
    #[error("non-finite logits or temperature")]
    NonFinite,
    #[error("segment contains no frames")]
    EmptySegment,
    #[error("dimension mismatch: model expects {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("no validation data")]
    NoValidationData,
    #[error("no training data")]
    NoTrainingData,
    #[error("training diverged (NaN loss) at epoch {0}")]
    DivergedLoss(usize),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Alignment(#[from] crate::corpus::AlignmentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadType {
    Ser,
    Epr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryTarget {
    Speaker,
    Gender,
}

/// What the extractor sees for one segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Every frame inside the segment.
    Frames,
    /// One row of per-segment functionals (mean, std, min, max).
    Functionals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub head_type: HeadType,
    pub input_mode: InputMode,
    pub alpha: f64,
    pub grl_enabled: bool,
    pub grl_scale: f64,
    pub adversary_target: AdversaryTarget,
    pub adversary_classes: usize,
}

impl IntensityModelConfig {
    pub fn new(input_dim: usize, head_type: HeadType) -> Self {
        Self {
            input_dim,
            hidden_dim: 256,
            head_type,
            input_mode: InputMode::Functionals,
            alpha: std::f64::consts::E,
            grl_enabled: true,
            grl_scale: 0.5,
            adversary_target: AdversaryTarget::Speaker,
            adversary_classes: 10,
        }
    }
}

/// Base-`alpha` softmax, `alpha^z_i / sum_j alpha^z_j`, evaluated as
/// `exp(z_i ln(alpha) - logsumexp(z ln(alpha)))`.
pub fn tempered_softmax(logits: &[f64], alpha: f64) -> Result<Vec<f64>, IntensityError> {
    if !(alpha > 0.0) || !alpha.is_finite() || logits.iter().any(|z| !z.is_finite()) {
        return Err(IntensityError::NonFinite);
    }
    let ln_a = alpha.ln();
    let scaled: Vec<f64> = logits.iter().map(|z| z * ln_a).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(scaled.iter().map(|s| (s - lse).exp()).collect())
}

/// Four calibrated intensities ordered (Angry, Happy, Sad, Surprise).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionIntensity {
    pub values: [f64; N_EMOTIONS],
}

impl EmotionIntensity {
    pub fn get(&self, e: Emotion) -> Option<f64> {
        e.intensity_index().map(|i| self.values[i])
    }

    pub fn argmax(&self) -> usize {
        (0..N_EMOTIONS)
            .max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    }
}

/// Head logits for one segment: 4 values (SER) or 4 pairs `[absent, present]` (EPR).
#[derive(Clone, Debug, PartialEq)]
pub enum HeadLogits {
    Ser([f64; N_EMOTIONS]),
    Epr([[f64; 2]; N_EMOTIONS]),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntensityModel {
    pub config: IntensityModelConfig,
    pub params: ParamStore,
    pub extractor_in: Linear,
    pub extractor_out: Linear,
    pub heads: Vec<Linear>,
    pub adversary: Linear,
    /// Standardization applied to raw inputs (frame rows or functionals).
    pub norm: Option<NormStats>,
    pub label_order: Vec<Emotion>,
}

impl IntensityModel {
    pub fn new(config: IntensityModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let h = config.hidden_dim;
        let extractor_in = Linear::new(&mut params, "extractor.0", config.input_dim, h, &mut rng);
        let extractor_out = Linear::new(&mut params, "extractor.2", h, h, &mut rng);
        let heads = match config.head_type {
            HeadType::Ser => vec![Linear::new(&mut params, "ser", h, N_EMOTIONS, &mut rng)],
            HeadType::Epr => Emotion::INTENSITY_ORDER
                .iter()
                .map(|e| Linear::new(&mut params, &format!("epr.{}", e.name()), h, 2, &mut rng))
                .collect(),
        };
        let adversary = Linear::new(
            &mut params,
            "adversary",
            h,
            config.adversary_classes.max(2),
            &mut rng,
        );
        Self {
            config,
            params,
            extractor_in,
            extractor_out,
            heads,
            adversary,
            norm: None,
            label_order: Emotion::INTENSITY_ORDER.to_vec(),
        }
    }

    /// Indices into `params` that belong to the shared extractor.
    pub fn extractor_param_indices(&self) -> Vec<usize> {
        vec![
            self.extractor_in.weight.index(),
            self.extractor_in.bias.index(),
            self.extractor_out.weight.index(),
            self.extractor_out.bias.index(),
        ]
    }

    pub fn adversary_param_indices(&self) -> Vec<usize> {
        vec![self.adversary.weight.index(), self.adversary.bias.index()]
    }

    /// Per-row extractor output on the graph.
    pub fn extract(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.extractor_in.forward(g, x);
        let h = g.relu(h);
        self.extractor_out.forward(g, h)
    }

    /// Head logits on the graph: one `B x 4` (SER) or four `B x 2` (EPR) matrices.
    pub fn head_logits(&self, g: &mut Graph, pooled: Var) -> Vec<Var> {
        self.heads.iter().map(|h| h.forward(g, pooled)).collect()
    }

    /// Mean-pooled extractor output for a normalized segment input.
    pub fn pooled(&self, input: &Matrix) -> Result<Vec<f64>, IntensityError> {
        if input.rows() == 0 {
            return Err(IntensityError::EmptySegment);
        }
        if input.cols() != self.config.input_dim {
            return Err(IntensityError::DimensionMismatch {
                expected: self.config.input_dim,
                found: input.cols(),
            });
        }
        let h = self
            .extractor_in
            .apply(&self.params, input)
            .map(|v| v.max(0.0));
        let h = self.extractor_out.apply(&self.params, &h);
        Ok(h.mean_rows().into_vec())
    }

    pub fn logits_from_pooled(&self, pooled: &[f64]) -> HeadLogits {
        let row = Matrix::row_vector(pooled);
        match self.config.head_type {
            HeadType::Ser => {
                let z = self.heads[0].apply(&self.params, &row);
                let mut out = [0.0; N_EMOTIONS];
                out.copy_from_slice(z.row(0));
                HeadLogits::Ser(out)
            }
            HeadType::Epr => {
                let mut out = [[0.0; 2]; N_EMOTIONS];
                for (e, head) in self.heads.iter().enumerate() {
                    let z = head.apply(&self.params, &row);
                    out[e] = [z.get(0, 0), z.get(0, 1)];
                }
                HeadLogits::Epr(out)
            }
        }
    }

    pub fn logits(&self, input: &Matrix) -> Result<HeadLogits, IntensityError> {
        Ok(self.logits_from_pooled(&self.pooled(input)?))
    }

    /// Builds the normalized model input for `[start, end)` of `ff`.
    pub fn segment_input(
        &self,
        ff: &FrameFeatures,
        start: f64,
        end: f64,
    ) -> Result<Matrix, IntensityError> {
        let range = ff
            .frame_range(start, end)
            .ok_or(IntensityError::EmptySegment)?;
        let frames = ff.matrix.slice_rows(range.start, range.end);
        let mut input = match self.config.input_mode {
            InputMode::Frames => frames,
            InputMode::Functionals => Matrix::row_vector(&functionals_of_rows(&frames).vector),
        };
        if input.cols() != self.config.input_dim {
            return Err(IntensityError::DimensionMismatch {
                expected: self.config.input_dim,
                found: input.cols(),
            });
        }
        self.normalize_in_place(&mut input);
        Ok(input)
    }

    /// Applies the stored input standardization, if any.
    pub fn normalize(&self, raw: &Matrix) -> Matrix {
        let mut m = raw.clone();
        self.normalize_in_place(&mut m);
        m
    }

    fn normalize_in_place(&self, m: &mut Matrix) {
        if let Some(norm) = &self.norm {
            for r in 0..m.rows() {
                norm.apply_in_place(m.row_mut(r));
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), IntensityError> {
        let body =
            serde_json::to_vec(self).map_err(|e| IntensityError::Checkpoint(e.to_string()))?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(CHECKPOINT_MAGIC)?;
        f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        f.write_all(&body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IntensityError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(IntensityError::Checkpoint(
                "not an intensity checkpoint".into(),
            ));
        }
        let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
        if version != CHECKPOINT_VERSION {
            return Err(IntensityError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let model: Self = serde_json::from_slice(&bytes[8..])
            .map_err(|e| IntensityError::Checkpoint(e.to_string()))?;
        if model.label_order != Emotion::INTENSITY_ORDER {
            return Err(IntensityError::Checkpoint("unexpected label order".into()));
        }
        Ok(model)
    }
}

/// Converts head logits to intensities with base `alpha`. EPR intensity is
/// the "present" component of each binary head.
pub fn intensities_from_logits(
    logits: &HeadLogits,
    alpha: f64,
) -> Result<EmotionIntensity, IntensityError> {
    let mut values = [0.0; N_EMOTIONS];
    match logits {
        HeadLogits::Ser(z) => values.copy_from_slice(&tempered_softmax(z, alpha)?),
        HeadLogits::Epr(pairs) => {
            for (e, pair) in pairs.iter().enumerate() {
                values[e] = tempered_softmax(pair, alpha)?[1];
            }
        }
    }
    Ok(EmotionIntensity { values })
}

/// Extractor per row, mean pool, head, tempered softmax.
pub fn forward_intensity(
    model: &IntensityModel,
    input: &Matrix,
) -> Result<EmotionIntensity, IntensityError> {
    intensities_from_logits(&model.logits(input)?, model.config.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn tempered_softmax_examples() {
        assert_eq!(tempered_softmax(&[0.0; 4], 2.0).unwrap(), vec![0.25; 4]);
        let p = tempered_softmax(&[3.0, -1.0, 0.5, 7.0], 1.0).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let p = tempered_softmax(&[1.0, 0.0], 2.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            tempered_softmax(&[f64::NAN], 2.0),
            Err(IntensityError::NonFinite)
        ));
        assert!(matches!(
            tempered_softmax(&[1.0], 0.0),
            Err(IntensityError::NonFinite)
        ));
    }

    proptest! {
        #[test]
        fn tempered_softmax_invariants(z in prop::collection::vec(-30.0f64..30.0, 2..6), alpha in 1.01f64..3.0, shift in -50.0f64..50.0) {
            let p = tempered_softmax(&z, alpha).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let zs: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let ps = tempered_softmax(&zs, alpha).unwrap();
            for (a, b) in p.iter().zip(&ps) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for i in 0..z.len() {
                for j in 0..z.len() {
                    if z[i] > z[j] {
                        prop_assert!(p[i] >= p[j]);
                    }
                }
            }
        }
    }

    fn small_model(head: HeadType) -> IntensityModel {
        let mut cfg = IntensityModelConfig::new(6, head);
        cfg.hidden_dim = 8;
        cfg.input_mode = InputMode::Frames;
        IntensityModel::new(cfg, 3)
    }

    #[test]
    fn zero_model_gives_uniform_ser() {
        let mut m = small_model(HeadType::Ser);
        let ids: Vec<_> = m.params.ids().collect();
        for id in ids {
            let (r, c) = m.params.get(id).shape();
            *m.params.get_mut(id) = Matrix::zeros(r, c);
        }
        let out = forward_intensity(&m, &Matrix::filled(3, 6, 0.7)).unwrap();
        assert_eq!(out.values, [0.25; 4]);
    }

    #[test]
    fn saturated_epr_head_gives_full_intensity() {
        let logits = HeadLogits::Epr([[0.0, 500.0], [0.0, 0.0], [0.0, -500.0], [0.0, 0.0]]);
        let out = intensities_from_logits(&logits, 2.0).unwrap();
        assert!((out.values[0] - 1.0).abs() < 1e-12);
        assert_eq!(out.values[1], 0.5);
        assert!(out.values[2] < 1e-12);
    }

    #[test]
    fn duplicated_and_permuted_frames_leave_output_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for head in [HeadType::Ser, HeadType::Epr] {
            let m = small_model(head);
            let x = Matrix::from_fn(5, 6, |_, _| rng.gen_range(-1.0..1.0));
            let a = forward_intensity(&m, &x).unwrap();
            let dup = Matrix::concat_rows(&[&x, &x]);
            let b = forward_intensity(&m, &dup).unwrap();
            let rev = x.gather_rows(&[4, 3, 2, 1, 0]);
            let c = forward_intensity(&m, &rev).unwrap();
            for k in 0..4 {
                assert!((a.values[k] - b.values[k]).abs() < 1e-6);
                assert!((a.values[k] - c.values[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn input_errors() {
        let m = small_model(HeadType::Ser);
        assert!(matches!(
            forward_intensity(&m, &Matrix::zeros(0, 6)),
            Err(IntensityError::EmptySegment)
        ));
        assert!(matches!(
            forward_intensity(&m, &Matrix::zeros(2, 5)),
            Err(IntensityError::DimensionMismatch {
                expected: 6,
                found: 5
            })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut m = small_model(HeadType::Epr);
        m.config.alpha = 1.7;
        m.save(&path).unwrap();
        let back = IntensityModel::load(&path).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.config, m.config);
        std::fs::write(&path, b"junk").unwrap();
        assert!(IntensityModel::load(&path).is_err());
    }

    #[test]
    fn argmax_is_preserved_by_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let best = (0..4).max_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap();
            let alpha = rng.gen_range(1.01..3.0);
            let p = tempered_softmax(&z, alpha).unwrap();
            let pbest = (0..4).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            assert_eq!(best, pbest);
        }
    }
}
