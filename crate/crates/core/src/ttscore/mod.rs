//! Toy-scale acoustic model: transformer text encoder, conditioning on
//! speaker and HED, duration predictor, and an OT-CFM U-Net decoder.

mod cfm;
mod decoder;
mod speaker;
mod text;
mod train;

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Waveform, SAMPLE_RATE};
use crate::dsp::{griffin_lim, MelSpectrogram, NormStats, GRIFFIN_LIM_ITERS, HOP};
use crate::hed::HED_DIM;
use crate::nn::{Conv1d, Graph, Linear, Matrix, ParamStore, Var};

pub use cfm::{cfm_loss, euler_sample, gaussian, ot_path, ot_target, SIGMA_MIN};
pub use decoder::{padded_len, DecoderConfig, UNetDecoder, TIME_MULTIPLE};
pub use speaker::{
    pseudo_speaker_embedding, pseudo_utterance_embedding, read_embedding_vector, read_embeddings,
    SpeakerTable,
};
pub use text::{normalize_word, Lexicon, PhoneInventory, TextEncoder};
pub use train::{
    alignment_durations, duration_frames, train_tts, TtsExample, TtsTrainConfig, TtsTrainReport,
};

const CHECKPOINT_MAGIC: &[u8; 4] = b"HEDT";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TtsError {
    #[error("unknown phone symbol {0:?}")]
    UnknownSymbol(String),
    #[error("word {0:?} is not in the lexicon")]
    UnknownWord(String),
    #[error("text contains no words")]
    EmptyText,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("acoustic model is not loaded")]
    ModelNotLoaded,
    #[error("loss became NaN at step {0}")]
    NaNLoss(usize),
    #[error("no training examples")]
    NoTrainingData,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtsConfig {
    pub n_mels: usize,
    /// Linguistic embedding size.
    pub d_l: usize,
    /// Speaker embedding size.
    pub d_s: usize,
    pub encoder_blocks: usize,
    pub heads: usize,
    pub duration_channels: usize,
    pub decoder_width: usize,
    pub time_dim: usize,
    pub ode_steps: usize,
}

impl Default for TtsConfig {
    fn default() -> Self {
        Self {
            n_mels: 100,
            d_l: 192,
            d_s: 256,
            encoder_blocks: 2,
            heads: 2,
            duration_channels: 128,
            decoder_width: 64,
            time_dim: 64,
            ode_steps: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisRequest {
    pub phones: Vec<String>,
    /// `n_phones x 12` HED rows.
    pub hed: Matrix,
    pub speaker_embedding: Vec<f64>,
    pub n_ode_steps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SynthesisOutput {
    pub mel: MelSpectrogram,
    pub waveform: Waveform,
    pub durations: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcousticModel {
    pub config: TtsConfig,
    pub params: ParamStore,
    pub inventory: PhoneInventory,
    pub lexicon: Lexicon,
    pub encoder: TextEncoder,
    pub cond_proj: Linear,
    pub dur_conv1: Conv1d,
    pub dur_conv2: Conv1d,
    pub dur_out: Linear,
    pub mu_proj: Linear,
    pub decoder: UNetDecoder,
    /// Per-band log-mel standardization fitted on the training mels.
    pub mel_norm: Option<NormStats>,
}

/// Row indices that expand phone rows by `durations` and pad to `total` rows
/// by repeating the last phone.
pub fn expansion_indices(durations: &[usize], total: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(total);
    for (i, &d) in durations.iter().enumerate() {
        idx.extend(std::iter::repeat(i).take(d));
    }
    let last = durations.len().saturating_sub(1);
    idx.truncate(total);
    idx.resize(total, last);
    idx
}

impl AcousticModel {
    pub fn new(config: TtsConfig, inventory: PhoneInventory, lexicon: Lexicon, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.d_l;
        let encoder = TextEncoder::new(
            &mut params,
            inventory.len(),
            d,
            config.encoder_blocks,
            config.heads,
            &mut rng,
        );
        let cond_proj = Linear::new(&mut params, "cond", d + config.d_s + HED_DIM, d, &mut rng);
        let dc = config.duration_channels;
        let dur_conv1 = Conv1d::new(&mut params, "dur.conv1", d, dc, 3, &mut rng);
        let dur_conv2 = Conv1d::new(&mut params, "dur.conv2", dc, dc, 3, &mut rng);
        let dur_out = Linear::new(&mut params, "dur.out", dc, 1, &mut rng);
        let mu_proj = Linear::new(&mut params, "mu", d, config.n_mels, &mut rng);
        let decoder = UNetDecoder::new(
            &mut params,
            DecoderConfig {
                mel_dim: config.n_mels,
                width: config.decoder_width,
                time_dim: config.time_dim,
            },
            &mut rng,
        );
        Self {
            config,
            params,
            inventory,
            lexicon,
            encoder,
            cond_proj,
            dur_conv1,
            dur_conv2,
            dur_out,
            mu_proj,
            decoder,
            mel_norm: None,
        }
    }

    /// Per-phone conditioning `n x d_l` = projection of [linguistic | speaker | HED].
    pub fn conditioning(
        &self,
        g: &mut Graph,
        ids: &[usize],
        speaker: &[f64],
        hed: &Matrix,
    ) -> Result<Var, TtsError> {
        if ids.is_empty() {
            return Err(TtsError::EmptyText);
        }
        if hed.rows() != ids.len() {
            return Err(TtsError::LengthMismatch {
                expected: ids.len(),
                found: hed.rows(),
            });
        }
        if hed.cols() != HED_DIM {
            return Err(TtsError::DimensionMismatch {
                expected: HED_DIM,
                found: hed.cols(),
            });
        }
        if speaker.len() != self.config.d_s {
            return Err(TtsError::DimensionMismatch {
                expected: self.config.d_s,
                found: speaker.len(),
            });
        }
        let ling = self.encoder.forward(g, ids);
        let spk = g.constant(Matrix::from_fn(ids.len(), speaker.len(), |_, c| speaker[c]));
        let hv = g.constant(hed.clone());
        let cat = g.concat_cols(&[ling, spk, hv]);
        Ok(self.cond_proj.forward(g, cat))
    }

    /// Log-duration predictions `n x 1` from (detached) conditioning.
    pub fn log_durations(&self, g: &mut Graph, cond: Var) -> Var {
        let x = g.detach(cond);
        let h = self.dur_conv1.forward(g, x);
        let h = g.relu(h);
        let h = self.dur_conv2.forward(g, h);
        let h = g.relu(h);
        self.dur_out.forward(g, h)
    }

    /// Duration-expanded projection to mel space, padded to `total` rows.
    pub fn mu(&self, g: &mut Graph, cond: Var, durations: &[usize], total: usize) -> Var {
        let expanded = g.gather_rows(cond, expansion_indices(durations, total));
        self.mu_proj.forward(g, expanded)
    }

    fn ids_for(&self, phones: &[String]) -> Result<Vec<usize>, TtsError> {
        if phones.is_empty() {
            return Err(TtsError::EmptyText);
        }
        self.inventory.encode(phones)
    }

    /// Frames per phone at inference: `max(1, round(exp(log d)))`.
    pub fn predict_durations(
        &self,
        phones: &[String],
        speaker: &[f64],
        hed: &Matrix,
    ) -> Result<Vec<usize>, TtsError> {
        let ids = self.ids_for(phones)?;
        let mut g = Graph::new(&self.params);
        let cond = self.conditioning(&mut g, &ids, speaker, hed)?;
        let logd = self.log_durations(&mut g, cond);
        Ok(g.value(logd)
            .data()
            .iter()
            .map(|&l| l.exp().round().max(1.0) as usize)
            .collect())
    }

    /// Normalized, padded μ for given durations, plus the unpadded frame count.
    pub fn infer_mu(
        &self,
        phones: &[String],
        speaker: &[f64],
        hed: &Matrix,
        durations: Option<&[usize]>,
    ) -> Result<(Matrix, Vec<usize>, usize), TtsError> {
        let ids = self.ids_for(phones)?;
        let mut g = Graph::new(&self.params);
        let cond = self.conditioning(&mut g, &ids, speaker, hed)?;
        let durs: Vec<usize> = match durations {
            Some(d) if d.len() != ids.len() => {
                return Err(TtsError::LengthMismatch {
                    expected: ids.len(),
                    found: d.len(),
                })
            }
            Some(d) => d.to_vec(),
            None => {
                let logd = self.log_durations(&mut g, cond);
                g.value(logd)
                    .data()
                    .iter()
                    .map(|&l| l.exp().round().max(1.0) as usize)
                    .collect()
            }
        };
        let frames: usize = durs.iter().sum::<usize>().max(1);
        let mu = self.mu(&mut g, cond, &durs, padded_len(frames));
        Ok((g.value(mu).clone(), durs, frames))
    }

    /// Samples a log-mel spectrogram (`T x n_mels`, denormalized).
    pub fn sample_mel(
        &self,
        phones: &[String],
        hed: &Matrix,
        speaker: &[f64],
        n_steps: usize,
        seed: u64,
        durations: Option<&[usize]>,
    ) -> Result<(MelSpectrogram, Vec<usize>), TtsError> {
        let (mu, durs, frames) = self.infer_mu(phones, speaker, hed, durations)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = gaussian(mu.rows(), mu.cols(), &mut rng);
        let x = euler_sample(&self.decoder, &self.params, &mu, x0, n_steps);
        let mut mel = x.slice_rows(0, frames);
        if let Some(norm) = &self.mel_norm {
            for r in 0..mel.rows() {
                let row = norm.invert(mel.row(r));
                mel.row_mut(r).copy_from_slice(&row);
            }
        }
        Ok((MelSpectrogram { frames: mel }, durs))
    }

    pub fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisOutput, TtsError> {
        let (mel, durations) = self.sample_mel(
            &req.phones,
            &req.hed,
            &req.speaker_embedding,
            req.n_ode_steps,
            req.seed,
            None,
        )?;
        let waveform = if mel.n_bands() == crate::dsp::N_MELS {
            griffin_lim(&mel, GRIFFIN_LIM_ITERS)
        } else {
            Waveform::new(vec![0.0; mel.n_frames() * HOP], SAMPLE_RATE)
        };
        Ok(SynthesisOutput {
            mel,
            waveform,
            durations,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TtsError> {
        let body = serde_json::to_vec(self).map_err(|e| TtsError::Checkpoint(e.to_string()))?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(CHECKPOINT_MAGIC)?;
        f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        f.write_all(&body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TtsError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(TtsError::Checkpoint(
                "not an acoustic model checkpoint".into(),
            ));
        }
        let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
        if version != CHECKPOINT_VERSION {
            return Err(TtsError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        serde_json::from_slice(&bytes[8..]).map_err(|e| TtsError::Checkpoint(e.to_string()))
    }
}
