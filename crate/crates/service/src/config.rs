//! TOML job configuration. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use hed_core::corpus::SegmentLevel;
use hed_core::intensity::{AdversaryTarget, HeadType, InputMode, TrainConfig};
use hed_core::ttscore::{TtsConfig, TtsTrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ServiceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: PathsConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub intensity: IntensitySection,
    #[serde(default)]
    pub tts: TtsSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus_root: PathBuf,
    /// Manifest CSV; the ESD directory layout is scanned when absent.
    pub manifest: Option<PathBuf>,
    /// Directory of `<utterance_id>.json` alignment files.
    pub alignments: PathBuf,
    /// Checkpoints, caches, HED files and outputs go here.
    pub work_dir: PathBuf,
    /// JSON map utterance id -> speaker embedding. Pseudo-embeddings otherwise.
    pub speaker_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub resample: bool,
}

/// `"builtin"` or `"external:<dir>"` per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub phoneme: String,
    pub word: String,
    pub utterance: String,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            phoneme: "builtin".into(),
            word: "builtin".into(),
            utterance: "builtin".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureSource {
    Builtin,
    External(PathBuf),
}

impl FeatureSource {
    pub fn key(&self, position: usize) -> String {
        match self {
            FeatureSource::Builtin => "builtin".into(),
            FeatureSource::External(_) => format!("external{position}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntensitySection {
    pub head: HeadType,
    pub input_mode: InputMode,
    pub hidden_dim: usize,
    pub grl: bool,
    pub grl_scale: f64,
    pub adversary_target: AdversaryTarget,
    pub train: TrainConfig,
}

impl Default for IntensitySection {
    fn default() -> Self {
        Self {
            head: HeadType::Epr,
            input_mode: InputMode::Functionals,
            hidden_dim: 256,
            grl: true,
            grl_scale: 0.5,
            adversary_target: AdversaryTarget::Speaker,
            train: TrainConfig::default(),
        }
    }
}

/// `train.seed` is ignored; the top-level seed drives training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtsSection {
    pub model: TtsConfig,
    pub train: TtsTrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Test utterances used for the controllability sweep.
    pub controllability_cases: usize,
    pub n_ode_steps: usize,
    /// Cap on evaluated test utterances (0 = all).
    pub max_utterances: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            controllability_cases: 5,
            n_ode_steps: 10,
            max_utterances: 0,
        }
    }
}

impl JobConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let mut cfg: JobConfig =
            toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.corpus_root);
        fix(&mut self.paths.alignments);
        fix(&mut self.paths.work_dir);
        if let Some(m) = self.paths.manifest.as_mut() {
            fix(m);
        }
        if let Some(s) = self.paths.speaker_embeddings.as_mut() {
            fix(s);
        }
        for spec in [
            &mut self.features.phoneme,
            &mut self.features.word,
            &mut self.features.utterance,
        ] {
            if let Some(dir) = spec.strip_prefix("external:") {
                let p = PathBuf::from(dir);
                if p.is_relative() {
                    *spec = format!("external:{}", base.join(p).display());
                }
            }
        }
    }

    /// Every referenced input path must exist; the work dir is created.
    pub fn validate(&self) -> Result<(), ServiceError> {
        let mut required = vec![&self.paths.corpus_root, &self.paths.alignments];
        required.extend(self.paths.manifest.iter());
        required.extend(self.paths.speaker_embeddings.iter());
        for p in required {
            if !p.exists() {
                return Err(ServiceError::Config(format!(
                    "path does not exist: {}",
                    p.display()
                )));
            }
        }
        for level in SegmentLevel::ALL {
            if let FeatureSource::External(dir) = self.feature_source(level)? {
                if !dir.is_dir() {
                    return Err(ServiceError::Config(format!(
                        "feature directory missing: {}",
                        dir.display()
                    )));
                }
            }
        }
        std::fs::create_dir_all(&self.paths.work_dir)?;
        Ok(())
    }

    pub fn feature_source(&self, level: SegmentLevel) -> Result<FeatureSource, ServiceError> {
        let spec = match level {
            SegmentLevel::Phoneme => &self.features.phoneme,
            SegmentLevel::Word => &self.features.word,
            SegmentLevel::Utterance => &self.features.utterance,
        };
        if spec == "builtin" {
            Ok(FeatureSource::Builtin)
        } else if let Some(dir) = spec.strip_prefix("external:") {
            Ok(FeatureSource::External(PathBuf::from(dir)))
        } else {
            Err(ServiceError::Config(format!(
                "feature provider for {} must be \"builtin\" or \"external:<dir>\", got {spec:?}",
                level.name()
            )))
        }
    }

    /// Distinct feature sources in a stable order.
    pub fn feature_sources(&self) -> Result<Vec<FeatureSource>, ServiceError> {
        let mut out = Vec::new();
        for level in SegmentLevel::ALL {
            let s = self.feature_source(level)?;
            if !out.contains(&s) {
                out.push(s);
            }
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
[paths]
corpus_root = "corpus"
alignments = "align"
work_dir = "work"
"#;

    #[test]
    fn minimal_config_has_defaults() {
        let cfg = JobConfig::from_toml(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.paths.corpus_root, PathBuf::from("/base/corpus"));
        assert_eq!(cfg.intensity.train.batch_size, 16);
        assert_eq!(cfg.tts.model.n_mels, 100);
        assert_eq!(cfg.feature_sources().unwrap(), vec![FeatureSource::Builtin]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[tts]\nwidth = 3\n");
        assert!(matches!(
            JobConfig::from_toml(&text, Path::new("/")),
            Err(ServiceError::Config(_))
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = JobConfig::from_toml(MINIMAL, Path::new("/b")).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn external_features_parse() {
        let text = format!("{MINIMAL}\n[features]\nutterance = \"external:ssl\"\n");
        let cfg = JobConfig::from_toml(&text, Path::new("/b")).unwrap();
        assert_eq!(
            cfg.feature_source(SegmentLevel::Utterance).unwrap(),
            FeatureSource::External(PathBuf::from("/b/ssl"))
        );
        assert_eq!(cfg.feature_sources().unwrap().len(), 2);
    }
}
