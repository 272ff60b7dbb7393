use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{CorpusIndex, Emotion};

/// Per-cell quotas of a full-size ESD cell (350 utterances).
const FULL_CELL: usize = 350;
const FULL_VAL: usize = 20;
const FULL_TEST: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("corpus index is empty")]
    EmptyIndex,
    #[error("cell ({speaker}, {emotion}) has {count} utterances; at least 3 are required")]
    InsufficientData {
        speaker: String,
        emotion: Emotion,
        count: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    /// Keyed by `"<speaker>/<Emotion>"`.
    pub cells: BTreeMap<String, CellSplit>,
}

impl DatasetSplit {
    fn collect(&self, pick: impl Fn(&CellSplit) -> &Vec<String>) -> Vec<String> {
        self.cells
            .values()
            .flat_map(|c| pick(c).iter().cloned())
            .collect()
    }

    pub fn train(&self) -> Vec<String> {
        self.collect(|c| &c.train)
    }

    pub fn val(&self) -> Vec<String> {
        self.collect(|c| &c.val)
    }

    pub fn test(&self) -> Vec<String> {
        self.collect(|c| &c.test)
    }
}

/// (train, val, test) sizes for a cell of `n` utterances: 300/20/30 for a
/// full cell, proportionally scaled otherwise with at least one utterance
/// in each of val and test.
pub fn cell_quota(n: usize) -> Option<(usize, usize, usize)> {
    if n < 3 {
        return None;
    }
    let scaled = |q: usize| ((n * q) as f64 / FULL_CELL as f64).round() as usize;
    let val = scaled(FULL_VAL).max(1);
    let test = scaled(FULL_TEST).max(1);
    Some((n - val - test, val, test))
}

fn cell_seed(seed: u64, key: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(key.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Deterministic per-(speaker, emotion) split.
pub fn split_dataset(index: &CorpusIndex, seed: u64) -> Result<DatasetSplit, SplitError> {
    if index.is_empty() {
        return Err(SplitError::EmptyIndex);
    }
    let mut cells = BTreeMap::new();
    for ((speaker, emotion), mut ids) in index.groups() {
        let (train, val, _) =
            cell_quota(ids.len()).ok_or_else(|| SplitError::InsufficientData {
                speaker: speaker.clone(),
                emotion,
                count: ids.len(),
            })?;
        let key = format!("{speaker}/{emotion}");
        ids.sort();
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, &key));
        ids.shuffle(&mut rng);
        let mut split = CellSplit {
            train: ids[..train].to_vec(),
            val: ids[train..train + val].to_vec(),
            test: ids[train + val..].to_vec(),
        };
        split.train.sort();
        split.val.sort();
        split.test.sort();
        cells.insert(key, split);
    }
    Ok(DatasetSplit { seed, cells })
}
