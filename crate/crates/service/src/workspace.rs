//! Corpus, alignments, split and on-disk artifact layout shared by the CLI
//! and the server.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hed_core::corpus::{
    load_corpus, parse_alignment, read_matrix_file, split_dataset, write_matrix_file,
    AlignmentTrack, CorpusIndex, DatasetSplit, LoadOptions, SegmentLevel,
};
use hed_core::dsp::{compute_frame_features, FeatureProvider, FrameFeatures};
use hed_core::hed::{extract_hed, HierarchicalED, ModelSource};
use hed_core::intensity::IntensityModel;
use hed_core::ttscore::{pseudo_utterance_embedding, read_embeddings, AcousticModel, SpeakerTable};
use log::{info, warn};

use crate::config::{FeatureSource, JobConfig};
use crate::error::ServiceError;

pub struct Workspace {
    pub config: JobConfig,
    pub index: CorpusIndex,
    pub tracks: BTreeMap<String, AlignmentTrack>,
    pub split: DatasetSplit,
}

/// Trained extractors keyed by feature source.
pub struct Extractors {
    pub models: BTreeMap<FeatureSource, IntensityModel>,
}

impl Workspace {
    pub fn open(config: JobConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let index = load_corpus(
            &config.paths.corpus_root,
            config.paths.manifest.as_deref(),
            LoadOptions {
                resample: config.paths.resample,
            },
        )?;
        let mut tracks = BTreeMap::new();
        for rec in index.iter() {
            let path = config.paths.alignments.join(format!("{}.json", rec.id));
            if !path.exists() {
                return Err(ServiceError::Precondition(format!(
                    "missing alignment for {}: {}",
                    rec.id,
                    path.display()
                )));
            }
            let track = parse_alignment(&path)?;
            tracks.insert(rec.id.clone(), track);
        }
        let split = split_dataset(&index, config.seed)
            .map_err(|e| ServiceError::Precondition(format!("dataset split: {e}")))?;
        info!(
            "workspace: {} utterances, {} speakers",
            index.len(),
            index.speakers().len()
        );
        Ok(Self {
            config,
            index,
            tracks,
            split,
        })
    }

    pub fn work(&self) -> &Path {
        &self.config.paths.work_dir
    }

    pub fn track(&self, id: &str) -> Result<&AlignmentTrack, ServiceError> {
        self.tracks.get(id).ok_or_else(|| ServiceError::NotFound {
            kind: "utterance",
            id: id.to_string(),
        })
    }

    pub fn ensure_dir(&self, name: &str) -> Result<PathBuf, ServiceError> {
        let dir = self.work().join(name);
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn extractor_path(&self, source: &FeatureSource, position: usize) -> PathBuf {
        self.work()
            .join(format!("extractor-{}.ckpt", source.key(position)))
    }

    pub fn tts_path(&self) -> PathBuf {
        self.work().join("tts.ckpt")
    }

    pub fn hed_path(&self, id: &str) -> PathBuf {
        self.work().join("hed").join(format!("{id}.json"))
    }

    /// Frame features of one utterance. Builtin features are cached under
    /// the work dir; external ones are read from `<dir>/<id>.bin`.
    pub fn features(
        &self,
        source: &FeatureSource,
        id: &str,
    ) -> Result<FrameFeatures, ServiceError> {
        let rec = self.index.get(id).ok_or_else(|| ServiceError::NotFound {
            kind: "utterance",
            id: id.to_string(),
        })?;
        match source {
            FeatureSource::Builtin => {
                let dir = self.work().join("cache").join("features");
                let path = dir.join(format!("{id}.bin"));
                if path.exists() {
                    let file = read_matrix_file(&path)?;
                    return Ok(FrameFeatures {
                        matrix: file.matrix,
                        frame_rate: file.header.frame_rate,
                        provider: FeatureProvider::BuiltinDsp,
                    });
                }
                let audio = self.index.load_audio(id)?;
                let ff = compute_frame_features(&audio)?;
                std::fs::create_dir_all(&dir)?;
                write_matrix_file(&path, &ff.to_matrix_file(id))?;
                Ok(ff)
            }
            FeatureSource::External(dir) => {
                let path = dir.join(format!("{id}.bin"));
                if !path.exists() {
                    return Err(ServiceError::Precondition(format!(
                        "missing external features {}",
                        path.display()
                    )));
                }
                let file = read_matrix_file(&path)?;
                file.check_duration(rec.duration_secs())?;
                Ok(FrameFeatures::from_external(&file))
            }
        }
    }

    pub fn all_features(
        &self,
        source: &FeatureSource,
    ) -> Result<BTreeMap<String, FrameFeatures>, ServiceError> {
        self.index
            .iter()
            .map(|r| Ok((r.id.clone(), self.features(source, &r.id)?)))
            .collect()
    }

    pub fn load_extractors(&self) -> Result<Extractors, ServiceError> {
        let mut models = BTreeMap::new();
        for (pos, source) in self.config.feature_sources()?.into_iter().enumerate() {
            let path = self.extractor_path(&source, pos);
            if !path.exists() {
                return Err(ServiceError::Precondition(format!(
                    "extractor checkpoint {} not found; run train-extractor first",
                    path.display()
                )));
            }
            models.insert(source, IntensityModel::load(&path)?);
        }
        Ok(Extractors { models })
    }

    pub fn load_tts(&self) -> Result<AcousticModel, ServiceError> {
        let path = self.tts_path();
        if !path.exists() {
            return Err(ServiceError::Precondition(format!(
                "acoustic model {} not found; run train-tts first",
                path.display()
            )));
        }
        Ok(AcousticModel::load(&path)?)
    }

    /// HED of one utterance from the extractors.
    pub fn extract(
        &self,
        extractors: &Extractors,
        id: &str,
    ) -> Result<HierarchicalED, ServiceError> {
        let track = self.track(id)?;
        let mut feats: BTreeMap<FeatureSource, FrameFeatures> = BTreeMap::new();
        for level in SegmentLevel::ALL {
            let src = self.config.feature_source(level)?;
            if !feats.contains_key(&src) {
                let ff = self.features(&src, id)?;
                feats.insert(src, ff);
            }
        }
        let mut source = ModelSource {
            models: BTreeMap::new(),
            features: BTreeMap::new(),
        };
        for level in SegmentLevel::ALL {
            let src = self.config.feature_source(level)?;
            let model = extractors.models.get(&src).ok_or_else(|| {
                ServiceError::Precondition(format!("no extractor for {} features", level.name()))
            })?;
            source.models.insert(level, model);
            source.features.insert(level, &feats[&src]);
        }
        Ok(extract_hed(&source, track)?)
    }

    /// Stored HED for an utterance, if `extract-hed` produced one.
    pub fn stored_hed(&self, id: &str) -> Result<Option<HierarchicalED>, ServiceError> {
        let path = self.hed_path(id);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(HierarchicalED::from_json(&std::fs::read_to_string(
            path,
        )?)?))
    }

    /// Stored HED, or a fresh extraction when extractors are available.
    pub fn hed(
        &self,
        extractors: Option<&Extractors>,
        id: &str,
    ) -> Result<HierarchicalED, ServiceError> {
        if let Some(h) = self.stored_hed(id)? {
            return Ok(h);
        }
        match extractors {
            Some(x) => self.extract(x, id),
            None => Err(ServiceError::Precondition(format!(
                "no HED for {id}; run extract-hed or train-extractor first"
            ))),
        }
    }

    /// Per-utterance speaker embeddings: from the configured JSON file, or
    /// deterministic pseudo-embeddings otherwise.
    pub fn speakers(&self, dim: usize) -> Result<SpeakerTable, ServiceError> {
        let file = match &self.config.paths.speaker_embeddings {
            Some(p) => Some(read_embeddings(p)?),
            None => None,
        };
        let mut table = SpeakerTable::default();
        for rec in self.index.iter() {
            let emb = match &file {
                Some(map) => match map.get(&rec.id) {
                    Some(v) if v.len() == dim => v.clone(),
                    Some(v) => {
                        return Err(ServiceError::Invalid(format!(
                            "speaker embedding for {} has {} values, model expects {dim}",
                            rec.id,
                            v.len()
                        )))
                    }
                    None => {
                        warn!("no speaker embedding for {}; skipping", rec.id);
                        continue;
                    }
                },
                None => pseudo_utterance_embedding(&rec.speaker_id, &rec.id, dim),
            };
            table.insert(&rec.id, &rec.speaker_id, emb);
        }
        Ok(table)
    }
}
