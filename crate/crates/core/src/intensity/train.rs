use std::collections::BTreeMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    forward_intensity, AdversaryTarget, HeadType, InputMode, IntensityError, IntensityModel,
    IntensityModelConfig, ScoredSegment,
};
use crate::corpus::{
    is_silence, slice_segments, AlignmentTrack, CorpusIndex, DatasetSplit, Emotion, SegmentLevel,
};
use crate::dsp::{functionals_of_rows, FrameFeatures, NormStats};
use crate::nn::{Adam, Graph, Matrix, ParamStore, StepLr};

/// One labelled training segment. `input` is raw (un-normalized): a block of
/// frame rows or a single functionals row.
#[derive(Clone, Debug)]
pub struct SegmentSample {
    pub utterance_id: String,
    pub level: SegmentLevel,
    pub label: Emotion,
    /// Speaker or gender class for the adversary.
    pub nuisance: usize,
    pub input: Matrix,
}

#[derive(Clone, Debug, Default)]
pub struct SegmentDataset {
    pub train: Vec<SegmentSample>,
    pub val: Vec<SegmentSample>,
    pub test: Vec<SegmentSample>,
    /// Names of the adversary classes, indexed by `SegmentSample::nuisance`.
    pub nuisance_classes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_gamma: f64,
    pub lr_step_epochs: usize,
    /// Stop when validation accuracy has not improved for this many epochs.
    pub patience: usize,
    pub stabilize_epochs: usize,
    /// Number of best-accuracy checkpoints considered for selection.
    pub candidates: usize,
    /// Adversary accuracy counts as "near chance" within this distance.
    pub chance_tolerance: f64,
    /// Decoupled weight decay on the extractor weights, applied after each
    /// step as `w *= 1 - lr * decay`.
    pub extractor_weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 16,
            learning_rate: 1e-3,
            lr_gamma: 0.8,
            lr_step_epochs: 5,
            patience: 20,
            stabilize_epochs: 100,
            candidates: 5,
            chance_tolerance: 0.1,
            extractor_weight_decay: 5.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub epoch: usize,
    pub val_accuracy: f64,
    /// Validation adversary accuracy after the stabilization phase.
    pub adversary_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub epoch_emotion_losses: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub val_adversary_accuracy: Vec<f64>,
    pub candidates: Vec<CandidateReport>,
    /// 1-based epoch of the selected checkpoint.
    pub selected_epoch: usize,
    pub selected_val_accuracy: f64,
    pub selected_adversary_accuracy: f64,
    /// Majority-class rate of the adversary target on the validation set.
    pub adversary_chance: f64,
    pub level_weights: BTreeMap<String, f64>,
}

/// Cuts every utterance of the split into utterance, word and phone segments.
/// Silence phones and all-silence words are skipped, as are segments that
/// cover no frame.
pub fn build_segment_dataset(
    index: &CorpusIndex,
    split: &DatasetSplit,
    tracks: &BTreeMap<String, AlignmentTrack>,
    features: &BTreeMap<String, FrameFeatures>,
    mode: InputMode,
    target: AdversaryTarget,
) -> Result<SegmentDataset, IntensityError> {
    let nuisance_classes: Vec<String> = match target {
        AdversaryTarget::Speaker => index.speakers(),
        AdversaryTarget::Gender => {
            let mut g: Vec<String> = index
                .speakers()
                .iter()
                .map(|s| {
                    index
                        .genders
                        .get(s)
                        .cloned()
                        .unwrap_or_else(|| "unknown".into())
                })
                .collect();
            g.sort();
            g.dedup();
            g
        }
    };
    let class_of = |speaker: &str| -> usize {
        let key = match target {
            AdversaryTarget::Speaker => speaker.to_string(),
            AdversaryTarget::Gender => index
                .genders
                .get(speaker)
                .cloned()
                .unwrap_or_else(|| "unknown".into()),
        };
        nuisance_classes.iter().position(|c| *c == key).unwrap_or(0)
    };
    let build = |ids: Vec<String>| -> Result<Vec<SegmentSample>, IntensityError> {
        let mut out = Vec::new();
        for id in ids {
            let (Some(rec), Some(track), Some(ff)) =
                (index.get(&id), tracks.get(&id), features.get(&id))
            else {
                continue;
            };
            let segs = slice_segments(track, true)?;
            for seg in segs.iter() {
                let symbols_silent = seg
                    .phones
                    .clone()
                    .all(|p| is_silence(&track.phones[p].symbol));
                if seg.level != SegmentLevel::Utterance && symbols_silent {
                    continue;
                }
                let Some(range) = ff.frame_range(seg.start, seg.end) else {
                    continue;
                };
                let frames = ff.matrix.slice_rows(range.start, range.end);
                let input = match mode {
                    InputMode::Frames => frames,
                    InputMode::Functionals => {
                        Matrix::row_vector(&functionals_of_rows(&frames).vector)
                    }
                };
                out.push(SegmentSample {
                    utterance_id: id.clone(),
                    level: seg.level,
                    label: rec.emotion_label,
                    nuisance: class_of(&rec.speaker_id),
                    input,
                });
            }
        }
        Ok(out)
    };
    Ok(SegmentDataset {
        train: build(split.train())?,
        val: build(split.val())?,
        test: build(split.test())?,
        nuisance_classes,
    })
}

/// Normalized inputs and the rows a head is trained on.
struct Prepared<'a> {
    samples: Vec<&'a SegmentSample>,
    inputs: Vec<Matrix>,
    weights: Vec<f64>,
}

fn prepare<'a>(
    model: &IntensityModel,
    samples: &'a [SegmentSample],
    level_weights: &BTreeMap<SegmentLevel, f64>,
) -> Prepared<'a> {
    let keep: Vec<&SegmentSample> = samples
        .iter()
        .filter(|s| model.config.head_type == HeadType::Epr || s.label != Emotion::Neutral)
        .collect();
    let inputs = keep.iter().map(|s| model.normalize(&s.input)).collect();
    let weights = keep
        .iter()
        .map(|s| level_weights.get(&s.level).copied().unwrap_or(1.0))
        .collect();
    Prepared {
        samples: keep,
        inputs,
        weights,
    }
}

/// Weights proportional to `1 / count(level)`, scaled so that the average
/// per-sample weight is 1.
fn level_weights(samples: &[&SegmentSample]) -> BTreeMap<SegmentLevel, f64> {
    let mut counts: BTreeMap<SegmentLevel, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.level).or_default() += 1;
    }
    let total = samples.len() as f64;
    let k = counts.len() as f64;
    counts
        .into_iter()
        .map(|(l, c)| (l, total / (k * c as f64)))
        .collect()
}

fn fit_norm(samples: &[SegmentSample]) -> Result<NormStats, IntensityError> {
    let rows = samples
        .iter()
        .flat_map(|s| (0..s.input.rows()).map(move |r| s.input.row(r)));
    Ok(NormStats::fit(rows)?)
}

fn stack(inputs: &[&Matrix]) -> (Matrix, Vec<std::ops::Range<usize>>) {
    let mut ranges = Vec::with_capacity(inputs.len());
    let mut at = 0;
    for m in inputs {
        ranges.push(at..at + m.rows());
        at += m.rows();
    }
    (Matrix::concat_rows(inputs), ranges)
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn emotion_accuracy(model: &IntensityModel, data: &Prepared) -> Result<f64, IntensityError> {
    let mut hits = 0usize;
    let mut n = 0usize;
    for (s, x) in data.samples.iter().zip(&data.inputs) {
        let Some(k) = s.label.intensity_index() else {
            continue;
        };
        n += 1;
        if forward_intensity(model, x)?.argmax() == k {
            hits += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { hits as f64 / n as f64 })
}

fn pooled_matrix(model: &IntensityModel, inputs: &[Matrix]) -> Result<Matrix, IntensityError> {
    let rows = inputs
        .iter()
        .map(|x| model.pooled(x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::from_rows(&rows))
}

fn adversary_accuracy(model: &IntensityModel, pooled: &Matrix, classes: &[usize]) -> f64 {
    if classes.is_empty() {
        return 0.0;
    }
    let z = model.adversary.apply(&model.params, pooled);
    let hits = (0..z.rows())
        .filter(|&r| argmax_row(z.row(r)) == classes[r])
        .count();
    hits as f64 / classes.len() as f64
}

fn majority_rate(classes: &[usize]) -> f64 {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in classes {
        *counts.entry(c).or_default() += 1;
    }
    counts
        .values()
        .max()
        .map_or(0.0, |&m| m as f64 / classes.len().max(1) as f64)
}

/// Trains the adversary alone on frozen extractor outputs and returns its
/// validation accuracy.
pub fn stabilize_adversary(
    model: &mut IntensityModel,
    train_inputs: &[Matrix],
    train_classes: &[usize],
    val_inputs: &[Matrix],
    val_classes: &[usize],
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<f64, IntensityError> {
    let train_pooled = pooled_matrix(model, train_inputs)?;
    let val_pooled = pooled_matrix(model, val_inputs)?;
    let mut trainable = vec![false; model.params.len()];
    for i in model.adversary_param_indices() {
        trainable[i] = true;
    }
    let mut adam = Adam::new(&model.params, learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train_pooled.rows()).collect();
    let weights = vec![1.0; batch_size];
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let x = train_pooled.gather_rows(chunk);
            let targets: Vec<usize> = chunk.iter().map(|&i| train_classes[i]).collect();
            let grads = {
                let mut g = Graph::new(&model.params);
                let xv = g.constant(x);
                let z = model.adversary.forward(&mut g, xv);
                let loss = g.cross_entropy(z, &targets, &weights[..chunk.len()]);
                g.backward(loss)
            };
            adam.step_masked(&mut model.params, &grads, &trainable);
        }
    }
    Ok(adversary_accuracy(model, &val_pooled, val_classes))
}

/// Joint training of extractor, emotion head(s) and adversary, followed by
/// checkpoint selection. The returned model has `norm` set and the adversary
/// of the selected checkpoint stabilized.
pub fn train_intensity_model(
    dataset: &SegmentDataset,
    model_config: IntensityModelConfig,
    config: &TrainConfig,
) -> Result<(IntensityModel, TrainReport), IntensityError> {
    if dataset.train.is_empty() {
        return Err(IntensityError::NoTrainingData);
    }
    if dataset.val.is_empty() {
        return Err(IntensityError::NoValidationData);
    }
    let mut model = IntensityModel::new(model_config, config.seed);
    model.norm = Some(fit_norm(&dataset.train)?);

    let train_refs: Vec<&SegmentSample> = dataset
        .train
        .iter()
        .filter(|s| model.config.head_type == HeadType::Epr || s.label != Emotion::Neutral)
        .collect();
    if train_refs.is_empty() {
        return Err(IntensityError::NoTrainingData);
    }
    let weights = level_weights(&train_refs);
    let train = prepare(&model, &dataset.train, &weights);
    let val = prepare(&model, &dataset.val, &weights);
    if val.samples.is_empty() {
        return Err(IntensityError::NoValidationData);
    }
    let train_classes: Vec<usize> = train.samples.iter().map(|s| s.nuisance).collect();
    let val_classes: Vec<usize> = val.samples.iter().map(|s| s.nuisance).collect();

    let schedule = StepLr {
        initial: config.learning_rate,
        gamma: config.lr_gamma,
        step_size: config.lr_step_epochs.max(1),
    };
    let mut adam = Adam::new(&model.params, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train.samples.len()).collect();

    let mut epoch_losses = Vec::new();
    let mut epoch_emotion_losses = Vec::new();
    let mut val_accuracy = Vec::new();
    let mut val_adversary_accuracy = Vec::new();
    // (val accuracy, epoch, params), best first
    let mut top: Vec<(f64, usize, ParamStore)> = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..config.max_epochs {
        adam.lr = schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut emo_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let (loss, emo, grads) = batch_step(&model, &train, chunk);
            if !loss.is_finite() {
                return Err(IntensityError::DivergedLoss(epoch + 1));
            }
            adam.step(&mut model.params, &grads);
            if config.extractor_weight_decay > 0.0 {
                let keep = 1.0 - adam.lr * config.extractor_weight_decay;
                for id in [model.extractor_in.weight, model.extractor_out.weight] {
                    model
                        .params
                        .get_mut(id)
                        .data_mut()
                        .iter_mut()
                        .for_each(|v| *v *= keep);
                }
            }
            loss_sum += loss;
            emo_sum += emo;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
        epoch_emotion_losses.push(emo_sum / batches as f64);

        let acc = emotion_accuracy(&model, &val)?;
        let val_pooled = pooled_matrix(&model, &val.inputs)?;
        let adv = adversary_accuracy(&model, &val_pooled, &val_classes);
        val_accuracy.push(acc);
        val_adversary_accuracy.push(adv);
        debug!(
            "epoch {} loss {:.4} val acc {:.3} adv acc {:.3}",
            epoch + 1,
            epoch_losses[epoch],
            acc,
            adv
        );

        if top.len() < config.candidates.max(1)
            || acc > top.last().map_or(f64::NEG_INFINITY, |t| t.0)
        {
            top.push((acc, epoch, model.params.clone()));
            top.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            top.truncate(config.candidates.max(1));
        }
        if acc > best_acc {
            best_acc = acc;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                info!("early stop after epoch {}", epoch + 1);
                break;
            }
        }
    }

    let chance = majority_rate(&val_classes);
    let mut candidates = Vec::new();
    let mut stabilized = Vec::new();
    for (i, (acc, epoch, params)) in top.into_iter().enumerate() {
        let mut m = model.clone();
        m.params = params;
        let adv = stabilize_adversary(
            &mut m,
            &train.inputs,
            &train_classes,
            &val.inputs,
            &val_classes,
            config.stabilize_epochs,
            config.batch_size.max(1),
            config.learning_rate,
            config.seed.wrapping_add(1 + i as u64),
        )?;
        candidates.push(CandidateReport {
            epoch: epoch + 1,
            val_accuracy: acc,
            adversary_accuracy: adv,
        });
        stabilized.push(m);
    }
    let near: Vec<usize> = (0..candidates.len())
        .filter(|&i| (candidates[i].adversary_accuracy - chance).abs() <= config.chance_tolerance)
        .collect();
    // candidates are ordered by accuracy, so the first near-chance one wins
    let pick = near.first().copied().unwrap_or_else(|| {
        (0..candidates.len())
            .min_by(|&a, &b| {
                candidates[a]
                    .adversary_accuracy
                    .total_cmp(&candidates[b].adversary_accuracy)
                    .then(a.cmp(&b))
            })
            .unwrap_or(0)
    });
    let chosen = stabilized.swap_remove(pick);
    let sel = candidates[pick].clone();
    info!(
        "selected epoch {} (val acc {:.3}, adversary {:.3}, chance {:.3})",
        sel.epoch, sel.val_accuracy, sel.adversary_accuracy, chance
    );
    let report = TrainReport {
        epoch_losses,
        epoch_emotion_losses,
        val_accuracy,
        val_adversary_accuracy,
        candidates,
        selected_epoch: sel.epoch,
        selected_val_accuracy: sel.val_accuracy,
        selected_adversary_accuracy: sel.adversary_accuracy,
        adversary_chance: chance,
        level_weights: weights
            .iter()
            .map(|(l, w)| (l.name().to_string(), *w))
            .collect(),
    };
    Ok((chosen, report))
}

/// One minibatch: returns (total loss, emotion loss, gradients).
fn batch_step(model: &IntensityModel, data: &Prepared, chunk: &[usize]) -> (f64, f64, Vec<Matrix>) {
    let inputs: Vec<&Matrix> = chunk.iter().map(|&i| &data.inputs[i]).collect();
    let (x, ranges) = stack(&inputs);
    let w: Vec<f64> = chunk.iter().map(|&i| data.weights[i]).collect();
    let mut g = Graph::new(&model.params);
    let xv = g.constant(x);
    let h = model.extract(&mut g, xv);
    let pooled = g.segment_mean(h, ranges);
    let heads = model.head_logits(&mut g, pooled);
    let emo = match model.config.head_type {
        HeadType::Ser => {
            let targets: Vec<usize> = chunk
                .iter()
                .map(|&i| {
                    data.samples[i]
                        .label
                        .intensity_index()
                        .expect("neutral filtered")
                })
                .collect();
            g.cross_entropy(heads[0], &targets, &w)
        }
        HeadType::Epr => {
            let mut total = None;
            for (e, &z) in heads.iter().enumerate() {
                let targets: Vec<usize> = chunk
                    .iter()
                    .map(|&i| usize::from(data.samples[i].label.intensity_index() == Some(e)))
                    .collect();
                let l = g.cross_entropy(z, &targets, &w);
                total = Some(match total {
                    None => l,
                    Some(t) => g.add(t, l),
                });
            }
            let sum = total.expect("four heads");
            g.scale(sum, 1.0 / heads.len() as f64)
        }
    };
    let adv_in = if model.config.grl_enabled {
        g.grad_reverse(pooled, model.config.grl_scale)
    } else {
        g.detach(pooled)
    };
    let adv_logits = model.adversary.forward(&mut g, adv_in);
    let classes: Vec<usize> = chunk.iter().map(|&i| data.samples[i].nuisance).collect();
    let adv = g.cross_entropy(adv_logits, &classes, &w);
    let total = g.add(emo, adv);
    let (lt, le) = (g.scalar(total), g.scalar(emo));
    (lt, le, g.backward(total))
}

/// Runs the model on raw samples for presence/argmax scoring.
pub fn score_segments(
    model: &IntensityModel,
    samples: &[SegmentSample],
) -> Result<Vec<ScoredSegment>, IntensityError> {
    samples
        .iter()
        .map(|s| {
            Ok(ScoredSegment {
                level: s.level,
                label: s.label,
                intensity: forward_intensity(model, &model.normalize(&s.input))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    /// Four separable clusters, 10 speakers, speaker id leaked into dim 0.
    pub(crate) fn toy_dataset(n: usize, dim: usize, seed: u64) -> SegmentDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut make = |count: usize| {
            (0..count)
                .map(|i| {
                    let e = Emotion::INTENSITY_ORDER[i % 4];
                    let spk = (i / 4) % 10;
                    let mut row: Vec<f64> = (0..dim).map(|_| noise.sample(&mut rng)).collect();
                    row[1 + e.intensity_index().unwrap()] += 4.0;
                    row[0] = spk as f64;
                    SegmentSample {
                        utterance_id: format!("u{i}"),
                        level: SegmentLevel::ALL[i % 3],
                        label: e,
                        nuisance: spk,
                        input: Matrix::row_vector(&row),
                    }
                })
                .collect::<Vec<_>>()
        };
        SegmentDataset {
            train: make(n),
            val: make(n / 4),
            test: make(n / 4),
            nuisance_classes: (0..10).map(|s| format!("spk{s}")).collect(),
        }
    }

    fn quick(head: HeadType) -> (IntensityModelConfig, TrainConfig) {
        let mut mc = IntensityModelConfig::new(12, head);
        mc.hidden_dim = 16;
        let tc = TrainConfig {
            max_epochs: 6,
            stabilize_epochs: 3,
            candidates: 2,
            ..TrainConfig::default()
        };
        (mc, tc)
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_dataset(160, 12, 1);
        let (mc, tc) = quick(HeadType::Ser);
        let (_, a) = train_intensity_model(&data, mc.clone(), &tc).unwrap();
        let (_, b) = train_intensity_model(&data, mc, &tc).unwrap();
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert_eq!(a, b);
    }

    #[test]
    fn epr_learns_separable_clusters() {
        let data = toy_dataset(240, 12, 2);
        let (mc, mut tc) = quick(HeadType::Epr);
        tc.max_epochs = 40;
        let (model, report) = train_intensity_model(&data, mc, &tc).unwrap();
        assert!(report.selected_val_accuracy > 0.85, "{report:?}");
        let scored = score_segments(&model, &data.test).unwrap();
        let table = super::super::presence_accuracy(&scored).unwrap();
        assert!(
            table
                .argmax_overall(SegmentLevel::Utterance, &scored)
                .unwrap()
                > 0.75
        );
    }

    #[test]
    fn missing_validation_is_an_error() {
        let mut data = toy_dataset(40, 12, 3);
        data.val.clear();
        let (mc, tc) = quick(HeadType::Ser);
        assert!(matches!(
            train_intensity_model(&data, mc, &tc),
            Err(IntensityError::NoValidationData)
        ));
    }

    #[test]
    fn level_weights_balance_levels() {
        let s = |level| SegmentSample {
            utterance_id: String::new(),
            level,
            label: Emotion::Sad,
            nuisance: 0,
            input: Matrix::zeros(1, 1),
        };
        let samples = [
            s(SegmentLevel::Utterance),
            s(SegmentLevel::Phoneme),
            s(SegmentLevel::Phoneme),
            s(SegmentLevel::Phoneme),
        ];
        let refs: Vec<&SegmentSample> = samples.iter().collect();
        let w = level_weights(&refs);
        assert!(
            (w[&SegmentLevel::Utterance] * 1.0 - w[&SegmentLevel::Phoneme] * 3.0).abs() < 1e-12
        );
        let total: f64 = refs.iter().map(|r| w[&r.level]).sum();
        assert!((total - 4.0).abs() < 1e-12);
    }
}
