#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hed_core::corpus::{write_wav, AlignmentTrack, Emotion, Phone, Waveform, Word, SAMPLE_RATE};
use hed_core::hed::HierarchicalED;
use hed_core::intensity::EmotionIntensity;
use hed_core::ttscore::{AcousticModel, Lexicon, PhoneInventory, TtsConfig};
use tempfile::TempDir;

pub const SPEAKERS: [&str; 2] = ["0011", "0012"];
pub const PER_CELL: usize = 3;

pub struct Fixture {
    pub dir: TempDir,
    pub config: PathBuf,
}

impl Fixture {
    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn work(&self) -> PathBuf {
        self.root().join("work")
    }

    pub fn ids(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in SPEAKERS {
            for e in Emotion::ALL {
                for k in 0..PER_CELL {
                    out.push(utterance_id(s, e, k));
                }
            }
        }
        out
    }
}

pub fn utterance_id(speaker: &str, emotion: Emotion, k: usize) -> String {
    format!("{speaker}_{}_{k}", emotion.name().to_lowercase())
}

fn tone(speaker: usize, emotion: Emotion, k: usize) -> Waveform {
    let base = [120.0, 200.0][speaker];
    let (pitch, amp) = match emotion {
        Emotion::Neutral => (1.0, 0.3),
        Emotion::Angry => (1.3, 0.8),
        Emotion::Happy => (1.2, 0.6),
        Emotion::Sad => (0.85, 0.15),
        Emotion::Surprise => (1.5, 0.5),
    };
    let f0 = base * pitch * (1.0 + 0.02 * k as f64);
    let n = (0.64 * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let env = (std::f64::consts::PI * t / 0.64).sin().powf(0.3);
            let glide = 1.0
                + 0.1
                    * (t / 0.64 - 0.5)
                    * if emotion == Emotion::Surprise {
                        2.0
                    } else {
                        1.0
                    };
            let ph = 2.0 * std::f64::consts::PI * f0 * glide * t;
            amp * env * (0.6 * ph.sin() + 0.3 * (2.0 * ph).sin() + 0.1 * (3.0 * ph).sin())
        })
        .collect();
    Waveform::new(samples, SAMPLE_RATE)
}

pub fn track(id: &str) -> AlignmentTrack {
    let p = |s: &str, a: f64, b: f64, w: usize| Phone {
        symbol: s.into(),
        start: a,
        end: b,
        word_index: w,
    };
    AlignmentTrack {
        utterance_id: id.to_string(),
        words: vec![
            Word {
                text: "bak".into(),
                start: 0.0,
                end: 0.32,
            },
            Word {
                text: "dak".into(),
                start: 0.32,
                end: 0.64,
            },
        ],
        phones: vec![
            p("B", 0.0, 0.08, 0),
            p("AA", 0.08, 0.24, 0),
            p("K", 0.24, 0.32, 0),
            p("D", 0.32, 0.40, 1),
            p("AA", 0.40, 0.56, 1),
            p("K", 0.56, 0.64, 1),
        ],
    }
}

pub const CONFIG: &str = r#"
seed = 3

[paths]
corpus_root = "corpus"
manifest = "corpus/manifest.csv"
alignments = "align"
work_dir = "work"

[intensity]
hidden_dim = 16

[intensity.train]
max_epochs = 6
batch_size = 16
patience = 6
stabilize_epochs = 3
candidates = 2

[tts.model]
d_l = 16
d_s = 8
encoder_blocks = 1
heads = 2
duration_channels = 8
decoder_width = 8
time_dim = 8
ode_steps = 2

[tts.train]
steps = 6
batch_size = 2

[eval]
controllability_cases = 1
n_ode_steps = 2
max_utterances = 2
"#;

/// Corpus, manifest, alignments and config in a fresh temp dir.
pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("corpus/wav")).unwrap();
    std::fs::create_dir_all(root.join("align")).unwrap();
    let mut manifest = String::from("id,speaker,emotion,text,audio\n");
    for (si, s) in SPEAKERS.iter().enumerate() {
        for e in Emotion::ALL {
            for k in 0..PER_CELL {
                let id = utterance_id(s, e, k);
                let rel = format!("wav/{id}.wav");
                write_wav(&root.join("corpus").join(&rel), &tone(si, e, k)).unwrap();
                manifest.push_str(&format!("{id},{s},{},bak dak,{rel}\n", e.name()));
                std::fs::write(
                    root.join("align").join(format!("{id}.json")),
                    track(&id).to_json(),
                )
                .unwrap();
            }
        }
    }
    std::fs::write(root.join("corpus/manifest.csv"), manifest).unwrap();
    let config = root.join("hed.toml");
    std::fs::write(&config, CONFIG).unwrap();
    Fixture { dir, config }
}

/// Writes HED files built from fixed intensities, skipping the extractor.
pub fn write_heds(f: &Fixture) {
    let dir = f.work().join("hed");
    std::fs::create_dir_all(&dir).unwrap();
    for (i, id) in f.ids().iter().enumerate() {
        let t = track(id);
        let v = |j: usize| EmotionIntensity {
            values: [0.1 * (j % 5) as f64, 0.2, 0.05 * (i % 7) as f64, 0.4],
        };
        let phones: Vec<_> = (0..t.phones.len()).map(v).collect();
        let words: Vec<_> = (0..t.words.len()).map(|j| v(j + 2)).collect();
        let hed = HierarchicalED::from_levels(&t, &phones, &words, &v(9));
        std::fs::write(dir.join(format!("{id}.json")), hed.to_json()).unwrap();
    }
}

/// Untrained acoustic model with the real mel size, saved where the
/// workspace expects it.
pub fn write_tts(f: &Fixture) {
    let tracks: Vec<_> = f.ids().iter().map(|id| track(id)).collect();
    let config = TtsConfig {
        d_l: 16,
        d_s: 8,
        encoder_blocks: 1,
        heads: 2,
        duration_channels: 8,
        decoder_width: 8,
        time_dim: 8,
        ode_steps: 2,
        ..Default::default()
    };
    let model = AcousticModel::new(
        config,
        PhoneInventory::from_tracks(&tracks),
        Lexicon::from_tracks(&tracks),
        1,
    );
    std::fs::create_dir_all(f.work()).unwrap();
    model.save(&f.work().join("tts.ckpt")).unwrap();
}
