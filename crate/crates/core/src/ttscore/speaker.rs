//! Speaker embeddings: ingested from files keyed by utterance id, or
//! deterministic pseudo-embeddings derived from hashes for hermetic runs.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::TtsError;

fn hash_seed(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn unit_gaussian(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

/// Unit-norm vector determined by the speaker id.
pub fn pseudo_speaker_embedding(speaker_id: &str, dim: usize) -> Vec<f64> {
    unit_gaussian(hash_seed(&["speaker", speaker_id]), dim)
}

/// Speaker vector plus a small utterance-specific perturbation, renormalized.
pub fn pseudo_utterance_embedding(speaker_id: &str, utterance_id: &str, dim: usize) -> Vec<f64> {
    let base = pseudo_speaker_embedding(speaker_id, dim);
    let jitter = unit_gaussian(hash_seed(&["utterance", utterance_id]), dim);
    let v: Vec<f64> = base.iter().zip(&jitter).map(|(a, b)| a + 0.1 * b).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

/// Per-utterance embeddings, with their speakers.
#[derive(Clone, Debug, Default)]
pub struct SpeakerTable {
    pub embeddings: BTreeMap<String, Vec<f64>>,
    pub speaker_of: BTreeMap<String, String>,
}

impl SpeakerTable {
    pub fn insert(&mut self, utterance_id: &str, speaker_id: &str, embedding: Vec<f64>) {
        self.embeddings.insert(utterance_id.to_string(), embedding);
        self.speaker_of
            .insert(utterance_id.to_string(), speaker_id.to_string());
    }

    /// Embedding for `utterance_id`, or with `other_utterance`, the embedding
    /// of a different utterance by the same speaker (when one exists).
    pub fn reference(
        &self,
        utterance_id: &str,
        other_utterance: bool,
        rng: &mut impl Rng,
    ) -> Option<&[f64]> {
        if other_utterance {
            if let Some(spk) = self.speaker_of.get(utterance_id) {
                let others: Vec<&String> = self
                    .speaker_of
                    .iter()
                    .filter(|(u, s)| *s == spk && u.as_str() != utterance_id)
                    .map(|(u, _)| u)
                    .collect();
                if let Some(u) = others.choose(rng) {
                    return self.embeddings.get(*u).map(|v| v.as_slice());
                }
            }
        }
        self.embeddings.get(utterance_id).map(|v| v.as_slice())
    }
}

/// Reads `{"utterance_id": [floats...], ...}` JSON.
pub fn read_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, TtsError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| TtsError::Checkpoint(format!("{}: {e}", path.display())))
}

/// Reads a single embedding stored as a JSON array.
pub fn read_embedding_vector(path: &Path) -> Result<Vec<f64>, TtsError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| TtsError::Checkpoint(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_embeddings_are_stable_unit_vectors() {
        let a = pseudo_speaker_embedding("0011", 256);
        assert_eq!(a, pseudo_speaker_embedding("0011", 256));
        assert_ne!(a, pseudo_speaker_embedding("0012", 256));
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        let u = pseudo_utterance_embedding("0011", "0011_000001", 256);
        let cos: f64 = a.iter().zip(&u).map(|(x, y)| x * y).sum();
        assert!(cos > 0.9);
    }

    #[test]
    fn other_utterance_policy() {
        let mut t = SpeakerTable::default();
        t.insert("a1", "a", vec![1.0]);
        t.insert("a2", "a", vec![2.0]);
        t.insert("b1", "b", vec![3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(t.reference("a1", true, &mut rng), Some(&[2.0][..]));
        assert_eq!(t.reference("a1", false, &mut rng), Some(&[1.0][..]));
        // no other utterance by b: falls back to its own
        assert_eq!(t.reference("b1", true, &mut rng), Some(&[3.0][..]));
    }
}
