//! Forced-alignment tracks in the JSON interchange format:
//!
//! ```json
//! {"utterance_id": "0011_000001",
//!  "words":  [{"text": "hello", "start": 0.0, "end": 0.42}],
//!  "phones": [{"symbol": "HH", "start": 0.0, "end": 0.08, "word_index": 0}]}
//! ```

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed slack between a word interval and the span of its phones.
const WORD_SPAN_TOLERANCE: f64 = 0.010;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("phones {0} and {1} overlap")]
    OverlappingIntervals(usize, usize),
    #[error("phone {phone} refers to word {word_index} but only {words} words exist")]
    OrphanPhone {
        phone: usize,
        word_index: i64,
        words: usize,
    },
    #[error("{what} {index}: interval is not increasing (start {start}, end {end})")]
    NonMonotonic {
        what: &'static str,
        index: usize,
        start: f64,
        end: f64,
    },
    #[error("phones of word {0} extend outside the word interval")]
    PhoneOutsideWord(usize),
    #[error("alignment track has no phones")]
    EmptyTrack,
    #[error("malformed alignment document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phone {
    pub symbol: String,
    pub start: f64,
    pub end: f64,
    pub word_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTrack {
    pub utterance_id: String,
    pub words: Vec<Word>,
    pub phones: Vec<Phone>,
}

#[derive(Deserialize)]
struct RawPhone {
    symbol: String,
    start: f64,
    end: f64,
    word_index: i64,
}

#[derive(Deserialize)]
struct RawTrack {
    utterance_id: String,
    words: Vec<Word>,
    phones: Vec<RawPhone>,
}

/// Pause and silence markers emitted by forced aligners.
pub fn is_silence(symbol: &str) -> bool {
    matches!(symbol, "" | "SIL" | "SP" | "SPN" | "<SIL>" | "PAU")
}

/// Upper-cases a phone symbol and strips ARPAbet stress digits.
pub fn normalize_symbol(symbol: &str) -> String {
    let upper = symbol.trim().to_ascii_uppercase();
    let stripped = upper.trim_end_matches(|c: char| c.is_ascii_digit());
    if stripped.is_empty() {
        upper
    } else {
        stripped.to_string()
    }
}

impl AlignmentTrack {
    pub fn from_json(text: &str) -> Result<Self, AlignmentError> {
        let raw: RawTrack = serde_json::from_str(text)?;
        let words = raw.words;
        let mut phones = Vec::with_capacity(raw.phones.len());
        for (i, p) in raw.phones.into_iter().enumerate() {
            if p.word_index < 0 || p.word_index as usize >= words.len() {
                return Err(AlignmentError::OrphanPhone {
                    phone: i,
                    word_index: p.word_index,
                    words: words.len(),
                });
            }
            phones.push(Phone {
                symbol: normalize_symbol(&p.symbol),
                start: p.start,
                end: p.end,
                word_index: p.word_index as usize,
            });
        }
        let track = Self {
            utterance_id: raw.utterance_id,
            words,
            phones,
        };
        track.validate()?;
        Ok(track)
    }

    /// Canonical compact serialization.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("alignment serialization is infallible")
    }

    pub fn validate(&self) -> Result<(), AlignmentError> {
        for (i, p) in self.phones.iter().enumerate() {
            if !(p.end > p.start) {
                return Err(AlignmentError::NonMonotonic {
                    what: "phone",
                    index: i,
                    start: p.start,
                    end: p.end,
                });
            }
            if p.word_index >= self.words.len() {
                return Err(AlignmentError::OrphanPhone {
                    phone: i,
                    word_index: p.word_index as i64,
                    words: self.words.len(),
                });
            }
            if i > 0 {
                let prev = &self.phones[i - 1];
                if p.start < prev.start {
                    return Err(AlignmentError::NonMonotonic {
                        what: "phone",
                        index: i,
                        start: p.start,
                        end: p.end,
                    });
                }
                if p.start < prev.end - 1e-9 {
                    return Err(AlignmentError::OverlappingIntervals(i - 1, i));
                }
                if p.word_index < prev.word_index {
                    return Err(AlignmentError::NonMonotonic {
                        what: "phone",
                        index: i,
                        start: p.start,
                        end: p.end,
                    });
                }
            }
        }
        for (i, w) in self.words.iter().enumerate() {
            if !(w.end > w.start) || (i > 0 && w.start < self.words[i - 1].start) {
                return Err(AlignmentError::NonMonotonic {
                    what: "word",
                    index: i,
                    start: w.start,
                    end: w.end,
                });
            }
            let range = self.word_phone_range(i);
            if !range.is_empty() {
                let s = self.phones[range.start].start;
                let e = self.phones[range.end - 1].end;
                if s < w.start - WORD_SPAN_TOLERANCE || e > w.end + WORD_SPAN_TOLERANCE {
                    return Err(AlignmentError::PhoneOutsideWord(i));
                }
            }
        }
        Ok(())
    }

    /// Contiguous phone index range belonging to `word`.
    pub fn word_phone_range(&self, word: usize) -> Range<usize> {
        let start = self.phones.partition_point(|p| p.word_index < word);
        let end = self.phones.partition_point(|p| p.word_index <= word);
        start..end
    }

    pub fn word_indices(&self) -> Vec<usize> {
        self.phones.iter().map(|p| p.word_index).collect()
    }

    pub fn symbols(&self) -> Vec<String> {
        self.phones.iter().map(|p| p.symbol.clone()).collect()
    }

    /// Number of non-silence phones in each word.
    pub fn lexical_phone_counts(&self) -> Vec<usize> {
        (0..self.words.len())
            .map(|w| {
                self.phones[self.word_phone_range(w)]
                    .iter()
                    .filter(|p| !is_silence(&p.symbol))
                    .count()
            })
            .collect()
    }

    /// Indices of the `k` words with the most lexical phones (ties by position).
    pub fn longest_words(&self, k: usize) -> Vec<usize> {
        let counts = self.lexical_phone_counts();
        let mut order: Vec<usize> = (0..counts.len()).filter(|&w| counts[w] > 0).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        order.truncate(k);
        order.sort_unstable();
        order
    }
}

pub fn parse_alignment(file: &Path) -> Result<AlignmentTrack, AlignmentError> {
    let text = std::fs::read_to_string(file)?;
    AlignmentTrack::from_json(&text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentLevel {
    #[serde(alias = "Phoneme", alias = "phone")]
    Phoneme,
    #[serde(alias = "Word")]
    Word,
    #[serde(alias = "Utterance")]
    Utterance,
}

impl std::str::FromStr for SegmentLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phoneme" | "phone" | "p" => Ok(SegmentLevel::Phoneme),
            "word" | "w" => Ok(SegmentLevel::Word),
            "utterance" | "u" => Ok(SegmentLevel::Utterance),
            other => Err(format!("unknown segment level {other:?}")),
        }
    }
}

impl SegmentLevel {
    pub const ALL: [SegmentLevel; 3] = [
        SegmentLevel::Phoneme,
        SegmentLevel::Word,
        SegmentLevel::Utterance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SegmentLevel::Phoneme => "phoneme",
            SegmentLevel::Word => "word",
            SegmentLevel::Utterance => "utterance",
        }
    }
}

/// A time span of the utterance together with the phones it covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub level: SegmentLevel,
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub phones: Range<usize>,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segments {
    pub utterance: Segment,
    pub words: Vec<Segment>,
    pub phones: Vec<Segment>,
}

impl Segments {
    pub fn count(&self) -> usize {
        1 + self.words.len() + self.phones.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Segment> {
        std::iter::once(&self.utterance)
            .chain(self.words.iter())
            .chain(self.phones.iter())
    }
}

/// Cuts a track into one utterance, one segment per word and one per phone.
/// With `trim_silence`, word spans drop leading and trailing silence phones
/// (a word made only of silence keeps its full span).
pub fn slice_segments(
    track: &AlignmentTrack,
    trim_silence: bool,
) -> Result<Segments, AlignmentError> {
    let (first, last) = match (track.phones.first(), track.phones.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(AlignmentError::EmptyTrack),
    };
    let utterance = Segment {
        level: SegmentLevel::Utterance,
        index: 0,
        start: first.start,
        end: last.end,
        phones: 0..track.phones.len(),
    };
    let phones = track
        .phones
        .iter()
        .enumerate()
        .map(|(i, p)| Segment {
            level: SegmentLevel::Phoneme,
            index: i,
            start: p.start,
            end: p.end,
            phones: i..i + 1,
        })
        .collect();
    let mut words = Vec::with_capacity(track.words.len());
    for (w, word) in track.words.iter().enumerate() {
        let range = track.word_phone_range(w);
        if range.is_empty() {
            words.push(Segment {
                level: SegmentLevel::Word,
                index: w,
                start: word.start,
                end: word.end,
                phones: range,
            });
            continue;
        }
        let mut span = range.clone();
        if trim_silence {
            let members = &track.phones[range.clone()];
            if let (Some(lo), Some(hi)) = (
                members.iter().position(|p| !is_silence(&p.symbol)),
                members.iter().rposition(|p| !is_silence(&p.symbol)),
            ) {
                span = range.start + lo..range.start + hi + 1;
            }
        }
        words.push(Segment {
            level: SegmentLevel::Word,
            index: w,
            start: track.phones[span.start].start,
            end: track.phones[span.end - 1].end,
            phones: range,
        });
    }
    Ok(Segments {
        utterance,
        words,
        phones,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn three_word_track() -> AlignmentTrack {
        let json = r#"{"utterance_id":"u1",
          "words":[{"text":"the","start":0.0,"end":0.2},{"text":"big","start":0.2,"end":0.5},{"text":"dog","start":0.5,"end":0.9}],
          "phones":[
            {"symbol":"dh","start":0.0,"end":0.1,"word_index":0},
            {"symbol":"ah0","start":0.1,"end":0.2,"word_index":0},
            {"symbol":"sil","start":0.2,"end":0.25,"word_index":1},
            {"symbol":"b","start":0.25,"end":0.3,"word_index":1},
            {"symbol":"ih1","start":0.3,"end":0.4,"word_index":1},
            {"symbol":"g","start":0.4,"end":0.5,"word_index":1},
            {"symbol":"d","start":0.5,"end":0.6,"word_index":2},
            {"symbol":"ao1","start":0.6,"end":0.75,"word_index":2},
            {"symbol":"g","start":0.75,"end":0.9,"word_index":2}]}"#;
        AlignmentTrack::from_json(json).unwrap()
    }

    #[test]
    fn parses_and_normalizes() {
        let t = three_word_track();
        assert_eq!(t.phones.len(), 9);
        assert_eq!(t.words.len(), 3);
        assert!(t.phones.iter().all(|p| p.word_index <= 2));
        assert_eq!(t.phones[1].symbol, "AH");
        assert_eq!(t.phones[2].symbol, "SIL");
    }

    #[test]
    fn canonical_round_trip() {
        let t = three_word_track();
        let canonical = t.to_json();
        let again = AlignmentTrack::from_json(&canonical).unwrap();
        assert_eq!(again.to_json(), canonical);
    }

    #[test]
    fn rejects_reversed_phone() {
        let json = r#"{"utterance_id":"u","words":[{"text":"a","start":0.0,"end":1.0}],
          "phones":[{"symbol":"AA","start":0.5,"end":0.4,"word_index":0}]}"#;
        assert!(matches!(
            AlignmentTrack::from_json(json),
            Err(AlignmentError::NonMonotonic { .. })
        ));
    }

    #[test]
    fn rejects_overlap_and_orphans() {
        let overlap = r#"{"utterance_id":"u","words":[{"text":"a","start":0.0,"end":1.0}],
          "phones":[{"symbol":"AA","start":0.0,"end":0.5,"word_index":0},
                    {"symbol":"B","start":0.4,"end":0.9,"word_index":0}]}"#;
        assert!(matches!(
            AlignmentTrack::from_json(overlap),
            Err(AlignmentError::OverlappingIntervals(0, 1))
        ));
        let orphan = r#"{"utterance_id":"u","words":[{"text":"a","start":0.0,"end":1.0}],
          "phones":[{"symbol":"AA","start":0.0,"end":0.5,"word_index":3}]}"#;
        assert!(matches!(
            AlignmentTrack::from_json(orphan),
            Err(AlignmentError::OrphanPhone { word_index: 3, .. })
        ));
    }

    #[test]
    fn segment_counts_and_partition() {
        let t = three_word_track();
        let s = slice_segments(&t, false).unwrap();
        assert_eq!(s.count(), 13);
        assert_eq!((s.utterance.start, s.utterance.end), (0.0, 0.9));
        let mut covered = vec![0usize; t.phones.len()];
        for w in &s.words {
            for p in w.phones.clone() {
                covered[p] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
        assert_eq!((s.words[1].start, s.words[1].end), (0.2, 0.5));
    }

    #[test]
    fn trimming_drops_leading_silence_of_word() {
        let t = three_word_track();
        let s = slice_segments(&t, true).unwrap();
        assert_eq!((s.words[1].start, s.words[1].end), (0.25, 0.5));
        // membership is unchanged
        assert_eq!(s.words[1].phones, 2..6);
    }

    #[test]
    fn single_phone_gives_identical_spans() {
        let json = r#"{"utterance_id":"u","words":[{"text":"a","start":0.1,"end":0.3}],
          "phones":[{"symbol":"AA","start":0.1,"end":0.3,"word_index":0}]}"#;
        let t = AlignmentTrack::from_json(json).unwrap();
        let s = slice_segments(&t, false).unwrap();
        let spans: Vec<(f64, f64)> = s.iter().map(|g| (g.start, g.end)).collect();
        assert_eq!(spans, vec![(0.1, 0.3); 3]);
    }

    #[test]
    fn empty_track_is_an_error() {
        let t = AlignmentTrack {
            utterance_id: "u".into(),
            words: vec![],
            phones: vec![],
        };
        assert!(matches!(
            slice_segments(&t, false),
            Err(AlignmentError::EmptyTrack)
        ));
    }

    #[test]
    fn longest_words_ignore_silence() {
        let t = three_word_track();
        assert_eq!(t.lexical_phone_counts(), vec![2, 3, 3]);
        assert_eq!(t.longest_words(2), vec![1, 2]);
    }
}
