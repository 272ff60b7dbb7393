use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cfm::{cfm_loss, gaussian};
use super::decoder::padded_len;
use super::speaker::SpeakerTable;
use super::{AcousticModel, TtsError};
use crate::corpus::{AlignmentTrack, SAMPLE_RATE};
use crate::dsp::{NormStats, HOP};
use crate::nn::{Adam, Graph, Matrix};

/// Seconds to (fractional) mel frames.
pub fn duration_frames(secs: f64) -> f64 {
    secs * SAMPLE_RATE as f64 / HOP as f64
}

/// Frames per phone from alignment boundaries, rounded cumulatively so the
/// total equals `n_frames`. Short phones can get zero frames.
pub fn alignment_durations(track: &AlignmentTrack, n_frames: usize) -> Vec<usize> {
    let n = track.phones.len();
    let mut out = Vec::with_capacity(n);
    let mut prev = 0usize;
    for (i, p) in track.phones.iter().enumerate() {
        let b = if i + 1 == n {
            n_frames
        } else {
            (duration_frames(p.end).round() as usize).clamp(prev, n_frames)
        };
        out.push(b - prev);
        prev = b;
    }
    out
}

#[derive(Clone, Debug)]
pub struct TtsExample {
    pub utterance_id: String,
    pub phones: Vec<String>,
    /// `n_phones x 12`.
    pub hed: Matrix,
    /// Raw log-mel, `T x n_mels`.
    pub mel: Matrix,
    pub durations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtsTrainConfig {
    pub steps: usize,
    /// Utterances per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Condition on another utterance of the same speaker.
    pub other_utterance_speaker: bool,
    pub seed: u64,
}

impl Default for TtsTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 4,
            learning_rate: 1e-3,
            other_utterance_speaker: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TtsTrainReport {
    pub total: Vec<f64>,
    pub duration: Vec<f64>,
    pub prior: Vec<f64>,
    pub cfm: Vec<f64>,
}

struct Losses {
    duration: f64,
    prior: f64,
    cfm: f64,
}

fn example_grads(
    model: &AcousticModel,
    ex: &TtsExample,
    speaker: &[f64],
    norm: &NormStats,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Matrix>, Losses), TtsError> {
    let ids = model.inventory.encode(&ex.phones)?;
    if ex.durations.len() != ids.len() {
        return Err(TtsError::LengthMismatch {
            expected: ids.len(),
            found: ex.durations.len(),
        });
    }
    let frames = ex.mel.rows();
    let total_dur: usize = ex.durations.iter().sum();
    if total_dur != frames {
        return Err(TtsError::LengthMismatch {
            expected: frames,
            found: total_dur,
        });
    }
    let padded = padded_len(frames);
    let mut x1 = Matrix::zeros(padded, ex.mel.cols());
    for r in 0..frames {
        let row = norm.apply(ex.mel.row(r));
        x1.row_mut(r).copy_from_slice(&row);
    }
    let t: f64 = rng.gen();
    let x0 = gaussian(padded, ex.mel.cols(), rng);

    let mut g = Graph::new(&model.params);
    let cond = model.conditioning(&mut g, &ids, speaker, &ex.hed)?;
    let logd = model.log_durations(&mut g, cond);
    let target = Matrix::from_fn(ids.len(), 1, |r, _| (ex.durations[r].max(1) as f64).ln());
    let dur_loss = g.mse(logd, &target);
    let mu = model.mu(&mut g, cond, &ex.durations, padded);
    let mu_valid = g.slice_rows(mu, 0, frames);
    let prior_loss = g.mse(mu_valid, &x1.slice_rows(0, frames));
    let flow_loss = cfm_loss(&mut g, &model.decoder, &x0, &x1, t, mu, frames);
    let sum = g.add(dur_loss, prior_loss);
    let total = g.add(sum, flow_loss);
    let losses = Losses {
        duration: g.scalar(dur_loss),
        prior: g.scalar(prior_loss),
        cfm: g.scalar(flow_loss),
    };
    Ok((g.backward(total), losses))
}

/// Trains the acoustic model in place; fits the mel normalization first if
/// the model has none.
pub fn train_tts(
    mut model: AcousticModel,
    examples: &[TtsExample],
    speakers: &SpeakerTable,
    cfg: &TtsTrainConfig,
) -> Result<(AcousticModel, TtsTrainReport), TtsError> {
    if examples.is_empty() {
        return Err(TtsError::NoTrainingData);
    }
    for ex in examples {
        if ex.mel.cols() != model.config.n_mels {
            return Err(TtsError::DimensionMismatch {
                expected: model.config.n_mels,
                found: ex.mel.cols(),
            });
        }
    }
    let norm = match &model.mel_norm {
        Some(n) => n.clone(),
        None => {
            let n = NormStats::fit(
                examples
                    .iter()
                    .flat_map(|e| (0..e.mel.rows()).map(move |r| e.mel.row(r))),
            )
            .map_err(|e| TtsError::Checkpoint(e.to_string()))?;
            model.mel_norm = Some(n.clone());
            n
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut report = TtsTrainReport::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let batch = cfg.batch_size.max(1);

    for step in 0..cfg.steps {
        let mut grads: Option<Vec<Matrix>> = None;
        let (mut ld, mut lp, mut lc) = (0.0, 0.0, 0.0);
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let ex = &examples[order[cursor]];
            cursor += 1;
            let speaker = speakers
                .reference(&ex.utterance_id, cfg.other_utterance_speaker, &mut rng)
                .ok_or_else(|| {
                    TtsError::Checkpoint(format!("no speaker embedding for {}", ex.utterance_id))
                })?
                .to_vec();
            let (g, l) = example_grads(&model, ex, &speaker, &norm, &mut rng)?;
            ld += l.duration;
            lp += l.prior;
            lc += l.cfm;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
            }
        }
        let inv = 1.0 / batch as f64;
        let (ld, lp, lc) = (ld * inv, lp * inv, lc * inv);
        let total = ld + lp + lc;
        if !total.is_finite() {
            return Err(TtsError::NaNLoss(step));
        }
        let grads: Vec<Matrix> = grads
            .expect("batch >= 1")
            .iter()
            .map(|m| m.scale(inv))
            .collect();
        adam.step(&mut model.params, &grads);
        report.total.push(total);
        report.duration.push(ld);
        report.prior.push(lp);
        report.cfm.push(lc);
        if (step + 1) % 100 == 0 {
            info!("tts step {} loss {:.4} (cfm {:.4})", step + 1, total, lc);
        }
    }
    Ok((model, report))
}
