use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TtsError;
use crate::corpus::AlignmentTrack;
use crate::nn::{
    sinusoidal_embedding, Graph, LayerNorm, Linear, Matrix, ParamId, ParamStore, SelfAttention, Var,
};

/// Sorted phone symbols seen in the training alignments.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneInventory {
    pub symbols: Vec<String>,
}

impl PhoneInventory {
    pub fn from_tracks<'a>(tracks: impl IntoIterator<Item = &'a AlignmentTrack>) -> Self {
        let set: BTreeSet<String> = tracks
            .into_iter()
            .flat_map(|t| t.phones.iter().map(|p| p.symbol.clone()))
            .collect();
        Self {
            symbols: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn encode(&self, phones: &[String]) -> Result<Vec<usize>, TtsError> {
        phones
            .iter()
            .map(|p| {
                self.symbols
                    .binary_search(p)
                    .map_err(|_| TtsError::UnknownSymbol(p.clone()))
            })
            .collect()
    }
}

/// Word to phone-sequence lookup built from alignments (most frequent
/// pronunciation wins, ties broken lexicographically).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: BTreeMap<String, Vec<String>>,
}

pub fn normalize_word(word: &str) -> String {
    word.chars()
        .filter(|c| c.is_alphanumeric() || *c == '\'')
        .flat_map(|c| c.to_lowercase())
        .collect()
}

impl Lexicon {
    pub fn from_tracks<'a>(tracks: impl IntoIterator<Item = &'a AlignmentTrack>) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<Vec<String>, usize>> = BTreeMap::new();
        for t in tracks {
            for (w, word) in t.words.iter().enumerate() {
                let key = normalize_word(&word.text);
                if key.is_empty() {
                    continue;
                }
                let phones: Vec<String> = t.phones[t.word_phone_range(w)]
                    .iter()
                    .map(|p| p.symbol.clone())
                    .collect();
                if !phones.is_empty() {
                    *counts.entry(key).or_default().entry(phones).or_default() += 1;
                }
            }
        }
        let entries = counts
            .into_iter()
            .filter_map(|(w, prons)| {
                let best = prons
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))?
                    .0
                    .clone();
                Some((w, best))
            })
            .collect();
        Self { entries }
    }

    /// Phones for whitespace-separated text, plus the word index of each phone.
    pub fn phonemize(&self, text: &str) -> Result<(Vec<String>, Vec<usize>), TtsError> {
        let mut phones = Vec::new();
        let mut words = Vec::new();
        for (w, token) in text
            .split_whitespace()
            .map(normalize_word)
            .filter(|t| !t.is_empty())
            .enumerate()
        {
            let pron = self
                .entries
                .get(&token)
                .ok_or_else(|| TtsError::UnknownWord(token.clone()))?;
            phones.extend(pron.iter().cloned());
            words.extend(std::iter::repeat(w).take(pron.len()));
        }
        if phones.is_empty() {
            return Err(TtsError::EmptyText);
        }
        Ok((phones, words))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EncoderBlock {
    norm1: LayerNorm,
    attn: SelfAttention,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// Transformer text encoder: symbol embedding, sinusoidal positions, pre-norm blocks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TextEncoder {
    pub dim: usize,
    embedding: ParamId,
    blocks: Vec<EncoderBlock>,
}

impl TextEncoder {
    pub fn new(
        store: &mut ParamStore,
        n_symbols: usize,
        dim: usize,
        blocks: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let embedding = store.add_normal("text.embedding", n_symbols.max(1), dim, 0.3, rng);
        let blocks = (0..blocks)
            .map(|b| EncoderBlock {
                norm1: LayerNorm::new(store, &format!("text.{b}.norm1"), dim),
                attn: SelfAttention::new(store, &format!("text.{b}.attn"), dim, heads, rng),
                norm2: LayerNorm::new(store, &format!("text.{b}.norm2"), dim),
                ff1: Linear::new(store, &format!("text.{b}.ff1"), dim, 2 * dim, rng),
                ff2: Linear::new(store, &format!("text.{b}.ff2"), 2 * dim, dim, rng),
            })
            .collect();
        Self {
            dim,
            embedding,
            blocks,
        }
    }

    /// `n x dim` linguistic embeddings for symbol ids.
    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Var {
        let table = g.param(self.embedding);
        let emb = g.gather_rows(table, ids.to_vec());
        let pos = Matrix::from_rows(
            &(0..ids.len())
                .map(|i| sinusoidal_embedding(i as f64, self.dim, 10_000.0))
                .collect::<Vec<_>>(),
        );
        let pos = g.constant(pos);
        let mut x = g.add(emb, pos);
        for b in &self.blocks {
            let h = b.norm1.forward(g, x);
            let h = b.attn.forward(g, h);
            x = g.add(x, h);
            let h = b.norm2.forward(g, x);
            let h = b.ff1.forward(g, h);
            let h = g.relu(h);
            let h = b.ff2.forward(g, h);
            x = g.add(x, h);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Phone, Word};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn track() -> AlignmentTrack {
        let p = |s: &str, a: f64, w| Phone {
            symbol: s.into(),
            start: a,
            end: a + 0.1,
            word_index: w,
        };
        AlignmentTrack {
            utterance_id: "x".into(),
            words: vec![
                Word {
                    text: "Hi,".into(),
                    start: 0.0,
                    end: 0.2,
                },
                Word {
                    text: "you".into(),
                    start: 0.2,
                    end: 0.4,
                },
            ],
            phones: vec![
                p("HH", 0.0, 0),
                p("AY", 0.1, 0),
                p("Y", 0.2, 1),
                p("UW", 0.3, 1),
            ],
        }
    }

    #[test]
    fn lexicon_and_inventory() {
        let t = track();
        let lex = Lexicon::from_tracks([&t]);
        let (phones, words) = lex.phonemize("hi YOU hi").unwrap();
        assert_eq!(phones, ["HH", "AY", "Y", "UW", "HH", "AY"]);
        assert_eq!(words, [0, 0, 1, 1, 2, 2]);
        assert!(matches!(lex.phonemize("  ... "), Err(TtsError::EmptyText)));
        assert!(matches!(
            lex.phonemize("hello"),
            Err(TtsError::UnknownWord(_))
        ));
        let inv = PhoneInventory::from_tracks([&t]);
        assert_eq!(inv.symbols, ["AY", "HH", "UW", "Y"]);
        assert_eq!(inv.encode(&phones[..2]).unwrap(), vec![1, 0]);
        assert!(matches!(
            inv.encode(&["ZZ".to_string()]),
            Err(TtsError::UnknownSymbol(_))
        ));
    }

    #[test]
    fn encoder_shape_order_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let enc = TextEncoder::new(&mut store, 6, 16, 2, 2, &mut rng);
        let run = |ids: &[usize]| {
            let mut g = Graph::new(&store);
            let v = enc.forward(&mut g, ids);
            g.value(v).clone()
        };
        let ids = [0, 1, 2, 3, 4, 5, 0, 1, 2];
        let a = run(&ids);
        assert_eq!(a.shape(), (9, 16));
        assert_eq!(a, run(&ids));
        let mut swapped = ids;
        swapped.swap(0, 1);
        let b = run(&swapped);
        assert_ne!(a.row(0), b.row(1));
    }
}
