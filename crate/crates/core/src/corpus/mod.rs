//! Emotional speech corpus ingestion.
//!
//! Two layouts are understood: a manifest CSV (`id,speaker,emotion,text,audio_relpath`
//! with an optional trailing `gender` column) or the ESD directory layout
//! (`<root>/<speaker>/<speaker>.txt` transcripts, audio under
//! `<root>/<speaker>/<Emotion>/**/<id>.wav`).

mod alignment;
mod audio;
mod container;
mod split;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alignment::{
    is_silence, normalize_symbol, parse_alignment, slice_segments, AlignmentError, AlignmentTrack,
    Phone, Segment, SegmentLevel, Segments, Word,
};
pub use audio::{read_wav, resample_linear, write_wav, Waveform, SAMPLE_RATE};
pub use container::{
    read_matrix_file, write_matrix_file, ContainerError, MatrixFile, MatrixHeader,
};
pub use split::{split_dataset, CellSplit, DatasetSplit, SplitError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("audio file missing: {0}")]
    MissingAudio(PathBuf),
    #[error("{path}: sample rate {rate} Hz, expected 16000 (enable resampling to accept)")]
    BadSampleRate { path: PathBuf, rate: u32 },
    #[error("duplicate utterance id {0}")]
    DuplicateId(String),
    #[error("empty audio: {0}")]
    EmptyAudio(PathBuf),
    #[error("unknown emotion label {0:?}")]
    UnknownEmotion(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("wav decode error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Five-way utterance label. Neutral carries no intensity column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Emotion {
    Neutral,
    Angry,
    Happy,
    Sad,
    Surprise,
}

impl Emotion {
    pub const ALL: [Emotion; 5] = [
        Emotion::Neutral,
        Emotion::Angry,
        Emotion::Happy,
        Emotion::Sad,
        Emotion::Surprise,
    ];

    /// Serialized intensity order shared by every model and HED document.
    pub const INTENSITY_ORDER: [Emotion; 4] = [
        Emotion::Angry,
        Emotion::Happy,
        Emotion::Sad,
        Emotion::Surprise,
    ];

    /// Column of this emotion in a 4-way intensity vector.
    pub fn intensity_index(self) -> Option<usize> {
        match self {
            Emotion::Neutral => None,
            Emotion::Angry => Some(0),
            Emotion::Happy => Some(1),
            Emotion::Sad => Some(2),
            Emotion::Surprise => Some(3),
        }
    }

    pub fn from_intensity_index(i: usize) -> Option<Emotion> {
        Self::INTENSITY_ORDER.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Neutral => "Neutral",
            Emotion::Angry => "Angry",
            Emotion::Happy => "Happy",
            Emotion::Sad => "Sad",
            Emotion::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "neutral" => Ok(Emotion::Neutral),
            "angry" => Ok(Emotion::Angry),
            "happy" => Ok(Emotion::Happy),
            "sad" => Ok(Emotion::Sad),
            "surprise" | "surprised" => Ok(Emotion::Surprise),
            _ => Err(CorpusError::UnknownEmotion(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub speaker_id: String,
    pub emotion_label: Emotion,
    pub text: String,
    pub audio_path: PathBuf,
    pub sample_rate: u32,
    pub num_samples: usize,
}

impl UtteranceRecord {
    pub fn duration_secs(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Accept non-16 kHz audio; it is resampled when read.
    pub resample: bool,
}

/// Immutable corpus index keyed by utterance id.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub root: PathBuf,
    pub records: BTreeMap<String, UtteranceRecord>,
    /// Speaker to gender label, when the manifest provides one.
    pub genders: BTreeMap<String, String>,
    pub resample: bool,
}

impl CorpusIndex {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&UtteranceRecord> {
        self.records.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.values()
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self
            .records
            .values()
            .map(|r| r.speaker_id.clone())
            .collect();
        s.sort();
        s.dedup();
        s
    }

    /// Utterance ids grouped by (speaker, emotion).
    pub fn groups(&self) -> BTreeMap<(String, Emotion), Vec<String>> {
        let mut out: BTreeMap<(String, Emotion), Vec<String>> = BTreeMap::new();
        for r in self.records.values() {
            out.entry((r.speaker_id.clone(), r.emotion_label))
                .or_default()
                .push(r.id.clone());
        }
        out
    }

    pub fn load_audio(&self, id: &str) -> Result<Waveform, CorpusError> {
        let rec = self
            .records
            .get(id)
            .ok_or_else(|| CorpusError::Manifest(format!("unknown utterance {id}")))?;
        read_wav(&rec.audio_path, self.resample)
    }

    fn insert(&mut self, rec: UtteranceRecord) -> Result<(), CorpusError> {
        if self.records.contains_key(&rec.id) {
            return Err(CorpusError::DuplicateId(rec.id));
        }
        self.records.insert(rec.id.clone(), rec);
        Ok(())
    }
}

/// Loads a corpus from a manifest CSV, or from the ESD directory layout
/// when `manifest` is `None`.
pub fn load_corpus(
    root: &Path,
    manifest: Option<&Path>,
    opts: LoadOptions,
) -> Result<CorpusIndex, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("corpus root {} does not exist", root.display()),
        )));
    }
    let mut index = CorpusIndex {
        root: root.to_path_buf(),
        resample: opts.resample,
        ..Default::default()
    };
    match manifest {
        Some(m) => load_manifest(&mut index, root, m, opts)?,
        None => load_esd_layout(&mut index, root, opts)?,
    }
    if index.is_empty() {
        log::warn!("corpus at {} contains no utterances", root.display());
    }
    Ok(index)
}

fn probe_audio(path: &Path, opts: LoadOptions) -> Result<(u32, usize), CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingAudio(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|source| CorpusError::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    let frames = reader.duration() as usize;
    if frames == 0 {
        return Err(CorpusError::EmptyAudio(path.to_path_buf()));
    }
    if spec.sample_rate != SAMPLE_RATE {
        if !opts.resample {
            return Err(CorpusError::BadSampleRate {
                path: path.to_path_buf(),
                rate: spec.sample_rate,
            });
        }
        let resampled = (frames as u64 * SAMPLE_RATE as u64 / spec.sample_rate as u64) as usize;
        return Ok((SAMPLE_RATE, resampled.max(1)));
    }
    Ok((spec.sample_rate, frames))
}

fn load_manifest(
    index: &mut CorpusIndex,
    root: &Path,
    manifest: &Path,
    opts: LoadOptions,
) -> Result<(), CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(manifest)
        .map_err(|e| CorpusError::Manifest(e.to_string()))?;
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| CorpusError::Manifest(e.to_string()))?;
        if row.len() < 5 {
            return Err(CorpusError::Manifest(format!(
                "row {} has {} columns, expected id,speaker,emotion,text,audio_relpath",
                line + 2,
                row.len()
            )));
        }
        let audio_path = root.join(&row[4]);
        let (sample_rate, num_samples) = probe_audio(&audio_path, opts)?;
        let speaker = row[1].to_string();
        if let Some(gender) = row.get(5).filter(|g| !g.is_empty()) {
            index.genders.insert(speaker.clone(), gender.to_string());
        }
        index.insert(UtteranceRecord {
            id: row[0].to_string(),
            speaker_id: speaker,
            emotion_label: row[2].parse()?,
            text: row[3].to_string(),
            audio_path,
            sample_rate,
            num_samples,
        })?;
    }
    Ok(())
}

fn load_esd_layout(
    index: &mut CorpusIndex,
    root: &Path,
    opts: LoadOptions,
) -> Result<(), CorpusError> {
    let mut speaker_dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    speaker_dirs.sort();
    for dir in speaker_dirs {
        let speaker = dir
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        let transcript = dir.join(format!("{speaker}.txt"));
        if !transcript.is_file() {
            log::warn!(
                "skipping {}: no transcript {}",
                dir.display(),
                transcript.display()
            );
            continue;
        }
        let mut wavs: BTreeMap<String, PathBuf> = BTreeMap::new();
        for entry in walkdir::WalkDir::new(&dir).sort_by_file_name() {
            let entry = entry.map_err(|e| CorpusError::Io(e.into()))?;
            let p = entry.path();
            if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
                let stem = p
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .to_string();
                if wavs.insert(stem.clone(), p.to_path_buf()).is_some() {
                    return Err(CorpusError::DuplicateId(stem));
                }
            }
        }
        // ESD transcripts may carry a UTF-16 or UTF-8 BOM; only UTF-8 is supported.
        let text = std::fs::read_to_string(&transcript)?;
        for line in text.lines() {
            let line = line.trim_start_matches('\u{feff}').trim_end();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                return Err(CorpusError::Manifest(format!(
                    "{}: malformed transcript line {line:?}",
                    transcript.display()
                )));
            }
            let id = cols[0].trim().to_string();
            let audio_path = wavs
                .get(&id)
                .cloned()
                .ok_or_else(|| CorpusError::MissingAudio(dir.join(format!("{id}.wav"))))?;
            let (sample_rate, num_samples) = probe_audio(&audio_path, opts)?;
            index.insert(UtteranceRecord {
                id,
                speaker_id: speaker.clone(),
                emotion_label: cols[2].parse()?,
                text: cols[1].trim().to_string(),
                audio_path,
                sample_rate,
                num_samples,
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize) -> Waveform {
        Waveform::new(
            (0..n).map(|i| 0.1 * (i as f64 * 0.05).sin()).collect(),
            SAMPLE_RATE,
        )
    }

    fn write_esd(root: &Path, speakers: usize, emotions: &[Emotion], per_cell: usize) {
        for s in 0..speakers {
            let spk = format!("{:04}", 11 + s);
            let mut transcript = String::new();
            let mut n = 0;
            for e in emotions {
                let dir = root.join(&spk).join(e.name()).join("train");
                std::fs::create_dir_all(&dir).unwrap();
                for _ in 0..per_cell {
                    n += 1;
                    let id = format!("{spk}_{n:06}");
                    write_wav(&dir.join(format!("{id}.wav")), &tone(1600)).unwrap();
                    transcript.push_str(&format!("{id}\tsome text {n}\t{}\n", e.name()));
                }
            }
            std::fs::write(root.join(&spk).join(format!("{spk}.txt")), transcript).unwrap();
        }
    }

    #[test]
    fn esd_layout_groups_by_speaker_and_emotion() {
        let dir = tempfile::tempdir().unwrap();
        write_esd(dir.path(), 10, &Emotion::ALL, 2);
        let index = load_corpus(dir.path(), None, LoadOptions::default()).unwrap();
        assert_eq!(index.len(), 100);
        assert_eq!(index.groups().len(), 50);
        assert_eq!(index.speakers().len(), 10);
    }

    #[test]
    fn empty_directory_gives_empty_index() {
        let dir = tempfile::tempdir().unwrap();
        let index = load_corpus(dir.path(), None, LoadOptions::default()).unwrap();
        assert!(index.is_empty());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_wav(&dir.path().join("a.wav"), &tone(800)).unwrap();
        let manifest = dir.path().join("m.csv");
        std::fs::write(
            &manifest,
            "id,speaker,emotion,text,audio_relpath\nu1,s1,Sad,hi,a.wav\nu1,s1,Angry,hi,a.wav\n",
        )
        .unwrap();
        let err = load_corpus(dir.path(), Some(&manifest), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "u1"));
    }

    #[test]
    fn manifest_rejects_missing_audio_and_wrong_rate() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.csv");
        std::fs::write(
            &manifest,
            "id,speaker,emotion,text,audio_relpath\nu1,s1,Sad,hi,nope.wav\n",
        )
        .unwrap();
        let err = load_corpus(dir.path(), Some(&manifest), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingAudio(_)));

        let w = Waveform::new(vec![0.1; 2205], 22050);
        write_wav(&dir.path().join("b.wav"), &w).unwrap();
        std::fs::write(
            &manifest,
            "id,speaker,emotion,text,audio_relpath,gender\nu1,s1,Sad,hi,b.wav,F\n",
        )
        .unwrap();
        let err = load_corpus(dir.path(), Some(&manifest), LoadOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::BadSampleRate { rate: 22050, .. }
        ));
        let index =
            load_corpus(dir.path(), Some(&manifest), LoadOptions { resample: true }).unwrap();
        assert_eq!(index.genders["s1"], "F");
        let audio = index.load_audio("u1").unwrap();
        assert_eq!(audio.sample_rate, SAMPLE_RATE);
        assert_eq!(audio.samples.len(), 1600);
    }

    #[test]
    fn emotion_order_is_fixed() {
        let names: Vec<&str> = Emotion::INTENSITY_ORDER.iter().map(|e| e.name()).collect();
        assert_eq!(names, ["Angry", "Happy", "Sad", "Surprise"]);
        assert_eq!(Emotion::Neutral.intensity_index(), None);
        assert_eq!("surprise".parse::<Emotion>().unwrap(), Emotion::Surprise);
    }
}
