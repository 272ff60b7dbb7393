//! One function per CLI command. Each returns the manifest it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hed_core::corpus::{write_matrix_file, write_wav, Emotion, MatrixFile, SegmentLevel, Waveform};
use hed_core::dsp::{compute_frame_features, compute_mel, FRAME_RATE};
use hed_core::eval::{
    controllability_score, disentanglement_explicitness, expected_trends, mcd, mig,
    pitch_energy_distortion, prosody_trend_analysis, secs, spearman, summarize_trajectory,
    write_controllability_csv, write_json, write_metric_csv, write_trend_csv, ClassifierKind,
    ControllabilityReport, DisentanglementReport, EvalError, MetricReport, PairMetrics,
    ProsodyFeatures, TrendRow, MIG_BINS, PROSODY_FEATURES,
};
use hed_core::hed::{
    apply_edit, column, intensity_sweep, EDEdit, EditTarget, HierarchicalED, DEFAULT_SWEEP, HED_DIM,
};
use hed_core::intensity::{
    build_segment_dataset, forward_intensity, select_alpha, train_intensity_model, CalibrationSet,
    IntensityModel, IntensityModelConfig,
};
use hed_core::nn::Matrix;
use hed_core::ttscore::{
    alignment_durations, read_embedding_vector, read_embeddings, train_tts, AcousticModel, Lexicon,
    PhoneInventory, SpeakerTable, SynthesisOutput, SynthesisRequest, TtsExample,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::FeatureSource;
use crate::error::ServiceError;
use crate::manifest::RunManifest;
use crate::plot;
use crate::workspace::{Extractors, Workspace};

fn manifest_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("{command}.manifest.json"))
}

fn finish(
    ws: &Workspace,
    mut manifest: RunManifest,
    dir: &Path,
    outputs: &[PathBuf],
) -> Result<RunManifest, ServiceError> {
    for p in outputs {
        manifest.record(p)?;
    }
    manifest.write(&manifest_path(dir, &manifest.command))?;
    let _ = ws;
    Ok(manifest)
}

pub fn train_extractor(ws: &Workspace) -> Result<RunManifest, ServiceError> {
    let cfg = &ws.config;
    let mut outputs = Vec::new();
    for (pos, source) in cfg.feature_sources()?.into_iter().enumerate() {
        info!("training extractor on {} features", source.key(pos));
        let features = ws.all_features(&source)?;
        let dataset = build_segment_dataset(
            &ws.index,
            &ws.split,
            &ws.tracks,
            &features,
            cfg.intensity.input_mode,
            cfg.intensity.adversary_target,
        )?;
        let input_dim = dataset
            .train
            .first()
            .map(|s| s.input.cols())
            .ok_or_else(|| ServiceError::Precondition("no training segments".into()))?;
        let mut mc = IntensityModelConfig::new(input_dim, cfg.intensity.head);
        mc.hidden_dim = cfg.intensity.hidden_dim;
        mc.input_mode = cfg.intensity.input_mode;
        mc.grl_enabled = cfg.intensity.grl;
        mc.grl_scale = cfg.intensity.grl_scale;
        mc.adversary_target = cfg.intensity.adversary_target;
        mc.adversary_classes = dataset.nuisance_classes.len().max(1);
        let mut tc = cfg.intensity.train.clone();
        tc.seed = cfg.seed;
        let (model, report) = train_intensity_model(&dataset, mc, &tc)?;
        let ckpt = ws.extractor_path(&source, pos);
        model.save(&ckpt)?;
        let report_path = ckpt.with_extension("report.json");
        write_json(&report_path, &report)?;
        outputs.push(ckpt);
        outputs.push(report_path);
    }
    finish(
        ws,
        RunManifest::new("train-extractor", cfg),
        ws.work(),
        &outputs,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub source: String,
    pub alpha: f64,
    pub scores: Vec<(f64, f64)>,
}

/// Picks alpha per extractor on its training segments and rewrites the
/// checkpoint with it.
pub fn calibrate_alpha(ws: &Workspace) -> Result<RunManifest, ServiceError> {
    let cfg = &ws.config;
    let mut extractors = ws.load_extractors()?;
    let mut records = Vec::new();
    let mut outputs = Vec::new();
    for (pos, source) in cfg.feature_sources()?.into_iter().enumerate() {
        let features = ws.all_features(&source)?;
        let dataset = build_segment_dataset(
            &ws.index,
            &ws.split,
            &ws.tracks,
            &features,
            cfg.intensity.input_mode,
            cfg.intensity.adversary_target,
        )?;
        let model = extractors
            .models
            .get_mut(&source)
            .expect("loaded for every source");
        let inputs: Vec<Matrix> = dataset
            .train
            .iter()
            .map(|s| model.normalize(&s.input))
            .collect();
        let set = CalibrationSet::from_model(model, inputs.iter())?;
        let pick = select_alpha(&set)?;
        info!("{}: alpha = {}", source.key(pos), pick.alpha);
        model.config.alpha = pick.alpha;
        let ckpt = ws.extractor_path(&source, pos);
        model.save(&ckpt)?;
        outputs.push(ckpt);
        records.push(AlphaRecord {
            source: source.key(pos),
            alpha: pick.alpha,
            scores: pick.scores,
        });
    }
    let path = ws.work().join("alpha.json");
    write_json(&path, &records)?;
    outputs.push(path);
    finish(
        ws,
        RunManifest::new("calibrate-alpha", cfg),
        ws.work(),
        &outputs,
    )
}

pub fn extract_hed(ws: &Workspace) -> Result<RunManifest, ServiceError> {
    let extractors = ws.load_extractors()?;
    let dir = ws.ensure_dir("hed")?;
    let mut outputs = Vec::new();
    for rec in ws.index.iter() {
        let hed = ws.extract(&extractors, &rec.id)?;
        let path = ws.hed_path(&rec.id);
        std::fs::write(&path, hed.to_json())?;
        outputs.push(path);
    }
    info!("wrote {} HED files", outputs.len());
    finish(
        ws,
        RunManifest::new("extract-hed", &ws.config),
        &dir,
        &outputs,
    )
}

pub fn train_tts_command(ws: &Workspace) -> Result<RunManifest, ServiceError> {
    let cfg = &ws.config;
    let all = ws.speakers(cfg.tts.model.d_s)?;
    let train_ids = ws.split.train();
    let mut speakers = SpeakerTable::default();
    for id in &train_ids {
        if let (Some(e), Some(s)) = (all.embeddings.get(id), all.speaker_of.get(id)) {
            speakers.insert(id, s, e.clone());
        }
    }
    let mut examples = Vec::new();
    for id in &train_ids {
        let track = ws.track(id)?;
        let hed = ws.stored_hed(id)?.ok_or_else(|| {
            ServiceError::Precondition(format!("no HED for {id}; run extract-hed first"))
        })?;
        let audio = ws.index.load_audio(id)?;
        let mel = compute_mel(&audio)?.frames;
        let durations = alignment_durations(track, mel.rows());
        examples.push(TtsExample {
            utterance_id: id.clone(),
            phones: track.symbols(),
            hed: hed.to_matrix(),
            mel,
            durations,
        });
    }
    let inventory = PhoneInventory::from_tracks(ws.tracks.values());
    let lexicon = Lexicon::from_tracks(ws.tracks.values());
    let model = AcousticModel::new(cfg.tts.model.clone(), inventory, lexicon, cfg.seed);
    let mut tc = cfg.tts.train.clone();
    tc.seed = cfg.seed;
    let (model, report) = train_tts(model, &examples, &speakers, &tc)?;
    let ckpt = ws.tts_path();
    model.save(&ckpt)?;
    let report_path = ws.work().join("tts.report.json");
    write_json(&report_path, &report)?;
    finish(
        ws,
        RunManifest::new("train-tts", cfg),
        ws.work(),
        &[ckpt, report_path],
    )
}

/// Synthesizes one HED with a given speaker embedding.
pub fn synthesize_hed(
    model: &AcousticModel,
    phones: &[String],
    hed: &Matrix,
    speaker: &[f64],
    seed: u64,
    n_ode_steps: usize,
) -> Result<SynthesisOutput, ServiceError> {
    Ok(model.synthesize(&SynthesisRequest {
        phones: phones.to_vec(),
        hed: hed.clone(),
        speaker_embedding: speaker.to_vec(),
        n_ode_steps,
        seed,
    })?)
}

/// Mean embedding of a speaker's utterances.
fn speaker_mean(table: &SpeakerTable, speaker: &str) -> Option<Vec<f64>> {
    let rows: Vec<&Vec<f64>> = table
        .speaker_of
        .iter()
        .filter(|(_, s)| s.as_str() == speaker)
        .filter_map(|(u, _)| table.embeddings.get(u))
        .collect();
    let first = rows.first()?;
    let mut out = vec![0.0; first.len()];
    for r in &rows {
        out.iter_mut()
            .zip(r.iter())
            .for_each(|(o, v)| *o += v / rows.len() as f64);
    }
    Some(out)
}

#[derive(Clone, Debug, Default)]
pub struct SynthArgs {
    pub text: Option<String>,
    pub phones: Option<String>,
    pub hed: Option<PathBuf>,
    /// Utterance id or speaker id.
    pub speaker: Option<String>,
    pub speaker_embedding: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_ode_steps: Option<usize>,
    pub out: PathBuf,
}

pub fn synthesize(ws: &Workspace, args: &SynthArgs) -> Result<RunManifest, ServiceError> {
    let model = ws.load_tts()?;
    let hed = match &args.hed {
        Some(p) => Some(HierarchicalED::from_json(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let phones: Vec<String> = if let Some(text) = &args.text {
        model.lexicon.phonemize(text)?.0
    } else if let Some(p) = &args.phones {
        p.split_whitespace().map(str::to_string).collect()
    } else if let Some(h) = &hed {
        h.phone_symbols.clone()
    } else {
        return Err(ServiceError::Invalid(
            "one of --text, --phones or --hed is required".into(),
        ));
    };
    let hed_matrix = match &hed {
        Some(h) if h.n_phones() != phones.len() => {
            return Err(ServiceError::Invalid(format!(
                "HED has {} phone rows but the input has {} phones",
                h.n_phones(),
                phones.len()
            )))
        }
        Some(h) => h.to_matrix(),
        None => Matrix::zeros(phones.len(), HED_DIM),
    };
    let table = ws.speakers(model.config.d_s)?;
    let speaker = if let Some(p) = &args.speaker_embedding {
        read_embedding_vector(p)?
    } else if let Some(s) = &args.speaker {
        match table.embeddings.get(s) {
            Some(e) => e.clone(),
            None => speaker_mean(&table, s).ok_or_else(|| ServiceError::NotFound {
                kind: "speaker",
                id: s.clone(),
            })?,
        }
    } else if let Some(e) = hed
        .as_ref()
        .and_then(|h| table.embeddings.get(&h.utterance_id))
    {
        e.clone()
    } else {
        return Err(ServiceError::Invalid(
            "--speaker or --speaker-embedding is required".into(),
        ));
    };
    let seed = args.seed.unwrap_or(ws.config.seed);
    let steps = args.n_ode_steps.unwrap_or(model.config.ode_steps);
    let out = synthesize_hed(&model, &phones, &hed_matrix, &speaker, seed, steps)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_wav(&args.out, &out.waveform)?;
    let mel_path = args.out.with_extension("mel.bin");
    write_matrix_file(
        &mel_path,
        &MatrixFile::new("synthesized", FRAME_RATE, out.mel.frames.clone()),
    )?;
    let mut manifest = RunManifest::new("synthesize", &ws.config)
        .arg("seed", seed)
        .arg("n_ode_steps", steps)
        .arg("phones", phones.join(" "));
    if let Some(h) = &args.hed {
        manifest = manifest.arg("hed", h.display());
    }
    if let Some(s) = &args.speaker {
        manifest = manifest.arg("speaker", s);
    }
    manifest.seed = seed;
    manifest.record(&args.out)?;
    manifest.record(&mel_path)?;
    manifest.write(&args.out.with_extension("manifest.json"))?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct SweepArgs {
    pub utterance: String,
    pub level: SegmentLevel,
    pub emotion: Emotion,
    pub target: EditTarget,
    pub values: Vec<f64>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl SweepArgs {
    pub fn new(utterance: &str, level: SegmentLevel, emotion: Emotion, out_dir: PathBuf) -> Self {
        Self {
            utterance: utterance.to_string(),
            level,
            emotion,
            target: EditTarget::All,
            values: DEFAULT_SWEEP.to_vec(),
            seed: None,
            out_dir,
        }
    }
}

/// One wav per sweep value plus prosody and trend tables.
pub fn sweep(ws: &Workspace, args: &SweepArgs) -> Result<RunManifest, ServiceError> {
    if args.emotion.intensity_index().is_none() {
        return Err(ServiceError::Invalid(format!(
            "{} has no intensity column",
            args.emotion
        )));
    }
    let model = ws.load_tts()?;
    let extractors = ws.load_extractors().ok();
    let hed = ws.hed(extractors.as_ref(), &args.utterance)?;
    let table = ws.speakers(model.config.d_s)?;
    let speaker = table
        .embeddings
        .get(&args.utterance)
        .ok_or_else(|| ServiceError::NotFound {
            kind: "speaker embedding",
            id: args.utterance.clone(),
        })?
        .clone();
    let seed = args.seed.unwrap_or(ws.config.seed);
    let variants = intensity_sweep(&hed, args.level, args.target, args.emotion, &args.values)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut outputs = Vec::new();
    let mut feats = Vec::new();
    for (v, h) in args.values.iter().zip(&variants) {
        let out = synthesize_hed(
            &model,
            &h.phone_symbols,
            &h.to_matrix(),
            &speaker,
            seed,
            model.config.ode_steps,
        )?;
        let name = format!(
            "{}-{}-{}-{:.2}.wav",
            args.utterance,
            args.level.name(),
            args.emotion.name().to_lowercase(),
            v
        );
        let path = args.out_dir.join(name);
        write_wav(&path, &out.waveform)?;
        outputs.push(path);
        feats.push(
            ProsodyFeatures::from_audio(&out.waveform)
                .unwrap_or_else(|_| ProsodyFeatures::from_mel(&out.mel)),
        );
    }
    let prosody_path = args.out_dir.join("prosody.csv");
    write_prosody_csv(&prosody_path, &args.values, &feats)?;
    let rows: Vec<TrendRow> = PROSODY_FEATURES
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let (x, y): (Vec<f64>, Vec<f64>) = args
                .values
                .iter()
                .zip(&feats)
                .filter_map(|(v, p)| p.get(f).map(|y| (*v, y)))
                .unzip();
            TrendRow {
                emotion: args.emotion,
                feature: name.to_string(),
                correlation: spearman(&x, &y),
                expected_sign: None,
                matches: None,
            }
        })
        .collect();
    let trend_path = args.out_dir.join("trend.csv");
    write_trend_csv(&trend_path, &rows)?;
    outputs.push(prosody_path);
    outputs.push(trend_path);
    let mut manifest = RunManifest::new("sweep", &ws.config)
        .arg("utterance", &args.utterance)
        .arg("level", args.level.name())
        .arg("emotion", args.emotion.name())
        .arg("target", format!("{:?}", args.target))
        .arg(
            "values",
            args.values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
    manifest.seed = seed;
    finish(ws, manifest, &args.out_dir, &outputs)
}

fn write_prosody_csv(
    path: &Path,
    values: &[f64],
    feats: &[ProsodyFeatures],
) -> Result<(), ServiceError> {
    let mut text = String::from("intensity");
    for f in PROSODY_FEATURES {
        text.push(',');
        text.push_str(f);
    }
    text.push('\n');
    for (v, p) in values.iter().zip(feats) {
        text.push_str(&v.to_string());
        for f in 0..PROSODY_FEATURES.len() {
            text.push(',');
            if let Some(x) = p.get(f) {
                text.push_str(&x.to_string());
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Mean probe output per commanded value, per target emotion.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepCurves {
    pub values: Vec<f64>,
    /// Emotion name -> one `[f64; 4]` per sweep value.
    pub curves: BTreeMap<String, Vec<[f64; 4]>>,
}

fn utterance_hed_vector(hed: &HierarchicalED) -> [f64; 4] {
    let mut out = [0.0; 4];
    if let Some(row) = hed.matrix.first() {
        for (k, e) in Emotion::INTENSITY_ORDER.iter().enumerate() {
            out[k] = row[column(SegmentLevel::Utterance, *e).expect("intensity emotion")] as f64;
        }
    }
    out
}

/// Phone-rate trajectory of the word-level columns.
fn word_trajectory(hed: &HierarchicalED) -> Matrix {
    Matrix::from_fn(hed.n_phones(), 4, |r, k| {
        hed.matrix[r]
            [column(SegmentLevel::Word, Emotion::INTENSITY_ORDER[k]).expect("intensity emotion")]
            as f64
    })
}

fn probe_audio(model: &IntensityModel, wave: &Waveform) -> Result<[f64; 4], EvalError> {
    let ff = compute_frame_features(wave)?;
    let end = ff.n_frames() as f64 / ff.frame_rate;
    let input = model
        .segment_input(&ff, 0.0, end)
        .map_err(|e| EvalError::Synthesis(e.to_string()))?;
    Ok(forward_intensity(model, &input)
        .map_err(|e| EvalError::Synthesis(e.to_string()))?
        .values)
}

#[derive(Clone, Debug, Default)]
pub struct EvalArgs {
    /// JSON map utterance id -> embedding of its synthesized version.
    pub synth_embeddings: Option<PathBuf>,
}

pub fn evaluate(ws: &Workspace, args: &EvalArgs) -> Result<RunManifest, ServiceError> {
    let cfg = &ws.config;
    let model = ws.load_tts()?;
    let extractors = ws.load_extractors()?;
    let table = ws.speakers(model.config.d_s)?;
    let dir = ws.ensure_dir("eval")?;
    let seed = cfg.seed;
    let steps = cfg.eval.n_ode_steps;
    let mut test = ws.split.test();
    if cfg.eval.max_utterances > 0 {
        test.truncate(cfg.eval.max_utterances);
    }
    let ref_emb = match &cfg.paths.speaker_embeddings {
        Some(p) => Some(read_embeddings(p)?),
        None => None,
    };
    let syn_emb = match &args.synth_embeddings {
        Some(p) => Some(read_embeddings(p)?),
        None => None,
    };
    let mut heds = BTreeMap::new();
    for rec in ws.index.iter() {
        heds.insert(rec.id.clone(), ws.hed(Some(&extractors), &rec.id)?);
    }
    let speaker_of = |id: &str| -> Result<Vec<f64>, ServiceError> {
        table
            .embeddings
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound {
                kind: "speaker embedding",
                id: id.to_string(),
            })
    };

    // reconstruction metrics
    let mut pairs = Vec::new();
    let mut trend_samples = Vec::new();
    for id in &test {
        let hed = &heds[id];
        let audio = ws.index.load_audio(id)?;
        let out = synthesize_hed(
            &model,
            &hed.phone_symbols,
            &hed.to_matrix(),
            &speaker_of(id)?,
            seed,
            steps,
        )?;
        let reference = compute_mel(&audio)?;
        let pe = pitch_energy_distortion(&audio, &out.waveform)?;
        let s = match (&ref_emb, &syn_emb) {
            (Some(r), Some(s)) => match (r.get(id), s.get(id)) {
                (Some(a), Some(b)) => Some(secs(a, b)?),
                _ => None,
            },
            _ => None,
        };
        pairs.push(PairMetrics {
            utterance_id: id.clone(),
            mcd: Some(mcd(&reference, &out.mel)?),
            pitch_distortion: pe.pitch,
            energy_distortion: Some(pe.energy),
            secs: s,
        });
        if let Ok(p) = ProsodyFeatures::from_audio(&audio) {
            trend_samples.push((utterance_hed_vector(hed), p));
        }
    }
    let metrics = MetricReport::aggregate(&pairs);
    let mut outputs = vec![dir.join("pairs.json"), dir.join("metrics.json")];
    write_json(&outputs[0], &pairs)?;
    write_json(&outputs[1], &metrics)?;

    // controllability with the utterance-level extractor as probe
    let utt_source = cfg.feature_source(SegmentLevel::Utterance)?;
    let n_cases = cfg.eval.controllability_cases.min(test.len());
    if utt_source != FeatureSource::Builtin {
        warn!(
            "controllability needs builtin utterance features to probe synthesized audio; skipped"
        );
    } else if n_cases == 0 {
        warn!("no test utterances; controllability skipped");
    } else {
        let probe_model = &extractors.models[&utt_source];
        let mut sums: BTreeMap<(Emotion, usize), ([f64; 4], usize)> = BTreeMap::new();
        let last_key = std::cell::Cell::new(None);
        let report: ControllabilityReport = controllability_score(
            |w: &Waveform| {
                let p = probe_audio(probe_model, w)?;
                if let Some(key) = last_key.get() {
                    let e = sums.entry(key).or_insert(([0.0; 4], 0));
                    e.0.iter_mut().zip(p).for_each(|(a, b)| *a += b);
                    e.1 += 1;
                }
                Ok(p)
            },
            |case, target, v| {
                let id = &test[case];
                let hed = &heds[id];
                let edited = apply_edit(
                    hed,
                    &EDEdit::set(SegmentLevel::Utterance, EditTarget::All, target, v),
                )
                .map_err(|e| EvalError::Synthesis(e.to_string()))?;
                let k = DEFAULT_SWEEP.iter().position(|x| *x == v).unwrap_or(0);
                last_key.set(Some((target, k)));
                let spk = speaker_of(id).map_err(|e| EvalError::Synthesis(e.to_string()))?;
                synthesize_hed(
                    &model,
                    &edited.phone_symbols,
                    &edited.to_matrix(),
                    &spk,
                    seed,
                    steps,
                )
                .map(|o| o.waveform)
                .map_err(|e| EvalError::Synthesis(e.to_string()))
            },
            n_cases,
            &DEFAULT_SWEEP,
        )?;
        let mut curves = SweepCurves {
            values: DEFAULT_SWEEP.to_vec(),
            ..Default::default()
        };
        for e in Emotion::INTENSITY_ORDER {
            let row = (0..DEFAULT_SWEEP.len())
                .map(|k| {
                    let (s, n) = sums.get(&(e, k)).copied().unwrap_or(([0.0; 4], 1));
                    s.map(|x| x / n.max(1) as f64)
                })
                .collect();
            curves.curves.insert(e.name().to_string(), row);
        }
        let p = dir.join("controllability.json");
        write_json(&p, &report)?;
        outputs.push(p);
        let p = dir.join("curves.json");
        write_json(&p, &curves)?;
        outputs.push(p);
    }

    // disentanglement of HED codes from speaker identity
    let speakers = ws.index.speakers();
    let ids: Vec<&String> = heds.keys().collect();
    let labels: Vec<usize> = ids
        .iter()
        .map(|id| {
            let s = &ws.index.get(id).expect("indexed").speaker_id;
            speakers.iter().position(|x| x == s).unwrap_or(0)
        })
        .collect();
    let codes = Matrix::from_fn(ids.len(), 4, |r, c| utterance_hed_vector(&heds[ids[r]])[c]);
    let mut dis = DisentanglementReport {
        mig: BTreeMap::new(),
        classifiers: Vec::new(),
    };
    for bins in MIG_BINS {
        match mig(&codes, &labels, bins) {
            Ok(v) => {
                dis.mig.insert(bins, v);
            }
            Err(e) => warn!("MIG with {bins} bins skipped: {e}"),
        }
    }
    let summaries: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| summarize_trajectory(&word_trajectory(&heds[*id])).values)
        .collect();
    let width = summaries.first().map_or(0, |v| v.len());
    let features = Matrix::from_fn(summaries.len(), width, |r, c| summaries[r][c]);
    for kind in [ClassifierKind::RandomForest, ClassifierKind::Lasso] {
        match disentanglement_explicitness(&features, &labels, kind, seed) {
            Ok(s) => dis.classifiers.push(s),
            Err(e) => warn!("{kind:?} disentanglement skipped: {e}"),
        }
    }
    let p = dir.join("disentanglement.json");
    write_json(&p, &dis)?;
    outputs.push(p);

    // prosody trends on the first test utterance
    if let Some(id) = test.first() {
        let expected = expected_trends(&trend_samples);
        let hed = &heds[id];
        let spk = speaker_of(id)?;
        let rows = prosody_trend_analysis(
            |emotion, v| {
                let edited = apply_edit(
                    hed,
                    &EDEdit::set(SegmentLevel::Utterance, EditTarget::All, emotion, v),
                )
                .map_err(|e| EvalError::Synthesis(e.to_string()))?;
                let out = synthesize_hed(
                    &model,
                    &edited.phone_symbols,
                    &edited.to_matrix(),
                    &spk,
                    seed,
                    steps,
                )
                .map_err(|e| EvalError::Synthesis(e.to_string()))?;
                Ok(ProsodyFeatures::from_audio(&out.waveform)
                    .unwrap_or_else(|_| ProsodyFeatures::from_mel(&out.mel)))
            },
            &DEFAULT_SWEEP,
            &expected,
        )?;
        let p = dir.join("trends.json");
        write_json(&p, &rows)?;
        outputs.push(p);
    }
    finish(
        ws,
        RunManifest::new("evaluate", cfg).arg("test_utterances", test.len()),
        &dir,
        &outputs,
    )
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, ServiceError> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&std::fs::read_to_string(path)?)?))
}

/// CSV tables and SVG plots from the evaluation outputs.
pub fn report(ws: &Workspace) -> Result<RunManifest, ServiceError> {
    let eval = ws.work().join("eval");
    let dir = ws.ensure_dir("report")?;
    let metrics: MetricReport = read_json(&eval.join("metrics.json"))?.ok_or_else(|| {
        ServiceError::Precondition("no evaluation results; run evaluate first".into())
    })?;
    let mut outputs = Vec::new();
    let p = dir.join("metrics.csv");
    write_metric_csv(&p, &metrics)?;
    outputs.push(p);
    if let Some(c) = read_json::<ControllabilityReport>(&eval.join("controllability.json"))? {
        let p = dir.join("controllability.csv");
        write_controllability_csv(&p, &c)?;
        outputs.push(p);
    }
    if let Some(rows) = read_json::<Vec<TrendRow>>(&eval.join("trends.json"))? {
        let p = dir.join("trends.csv");
        write_trend_csv(&p, &rows)?;
        outputs.push(p);
    }
    if let Some(d) = read_json::<DisentanglementReport>(&eval.join("disentanglement.json"))? {
        let p = dir.join("disentanglement.csv");
        let mut text = String::from("metric,value\n");
        for (bins, v) in &d.mig {
            text.push_str(&format!("mig_{bins},{v}\n"));
        }
        for c in &d.classifiers {
            text.push_str(&format!(
                "{:?}_disentanglement,{}\n",
                c.kind, c.disentanglement
            ));
            text.push_str(&format!(
                "{:?}_disentanglement_leakage_oriented,{}\n",
                c.kind,
                1.0 - c.disentanglement
            ));
            text.push_str(&format!("{:?}_explicitness,{}\n", c.kind, c.explicitness));
        }
        std::fs::write(&p, text)?;
        outputs.push(p);
    }
    if let Some(curves) = read_json::<SweepCurves>(&eval.join("curves.json"))? {
        let p = dir.join("controllability.svg");
        plot::sweep_curves(&p, &curves)?;
        outputs.push(p);
    }
    finish(ws, RunManifest::new("report", &ws.config), &dir, &outputs)
}

/// Convenience for callers holding an already-open workspace.
pub fn load_models(ws: &Workspace) -> (Option<Extractors>, Option<AcousticModel>) {
    (ws.load_extractors().ok(), ws.load_tts().ok())
}
