//! Editing sessions persisted as append-only JSON-lines logs.
//!
//! The first line holds the base HED; each later line is an edit, an undo or
//! a synthesis record. The current HED is always the base with the surviving
//! edits replayed in order, so undo is exact.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use hed_core::hed::{apply_edit, EDEdit, HierarchicalED};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LogEntry {
    Create { utterance_id: String, hed: String },
    Edit(EDEdit),
    Undo,
    Synthesis { audio_id: String },
}

#[derive(Clone, Debug)]
pub struct SessionState {
    pub session_id: String,
    pub utterance_id: String,
    base: HierarchicalED,
    pub current: HierarchicalED,
    pub history: Vec<EDEdit>,
    pub last_audio: Option<String>,
    log: PathBuf,
}

fn append(path: &Path, entry: &LogEntry) -> Result<(), ServiceError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(entry)?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

impl SessionState {
    pub fn create(dir: &Path, session_id: &str, hed: HierarchicalED) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(dir)?;
        let log = dir.join(format!("{session_id}.jsonl"));
        if log.exists() {
            return Err(ServiceError::Invalid(format!(
                "session {session_id} already exists"
            )));
        }
        append(
            &log,
            &LogEntry::Create {
                utterance_id: hed.utterance_id.clone(),
                hed: hed.to_json(),
            },
        )?;
        Ok(Self {
            session_id: session_id.to_string(),
            utterance_id: hed.utterance_id.clone(),
            base: hed.clone(),
            current: hed,
            history: Vec::new(),
            last_audio: None,
            log,
        })
    }

    /// Rebuilds a session by replaying its log.
    pub fn restore(log: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(log)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| ServiceError::Invalid(format!("empty session log {}", log.display())))?;
        let LogEntry::Create { utterance_id, hed } = serde_json::from_str(first)? else {
            return Err(ServiceError::Invalid(format!(
                "session log {} lacks a header",
                log.display()
            )));
        };
        let base = HierarchicalED::from_json(&hed)?;
        let session_id = log
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let mut s = Self {
            session_id,
            utterance_id,
            current: base.clone(),
            base,
            history: Vec::new(),
            last_audio: None,
            log: log.to_path_buf(),
        };
        for line in lines {
            match serde_json::from_str(line)? {
                LogEntry::Edit(e) => {
                    s.current = apply_edit(&s.current, &e)?;
                    s.history.push(e);
                }
                LogEntry::Undo => {
                    s.history.pop();
                    s.current = s.replay()?;
                }
                LogEntry::Synthesis { audio_id } => s.last_audio = Some(audio_id),
                LogEntry::Create { .. } => {
                    return Err(ServiceError::Invalid(format!(
                        "duplicate header in {}",
                        log.display()
                    )))
                }
            }
        }
        Ok(s)
    }

    fn replay(&self) -> Result<HierarchicalED, ServiceError> {
        let mut h = self.base.clone();
        for e in &self.history {
            h = apply_edit(&h, e)?;
        }
        Ok(h)
    }

    /// Applies and logs an edit. Invalid edits leave the session untouched.
    pub fn edit(&mut self, edit: EDEdit) -> Result<&HierarchicalED, ServiceError> {
        let next = apply_edit(&self.current, &edit)?;
        append(&self.log, &LogEntry::Edit(edit))?;
        self.history.push(edit);
        self.current = next;
        Ok(&self.current)
    }

    /// Returns `None` when there is nothing to undo.
    pub fn undo(&mut self) -> Result<Option<&HierarchicalED>, ServiceError> {
        if self.history.is_empty() {
            return Ok(None);
        }
        append(&self.log, &LogEntry::Undo)?;
        self.history.pop();
        self.current = self.replay()?;
        Ok(Some(&self.current))
    }

    pub fn record_synthesis(&mut self, audio_id: &str) -> Result<(), ServiceError> {
        append(
            &self.log,
            &LogEntry::Synthesis {
                audio_id: audio_id.to_string(),
            },
        )?;
        self.last_audio = Some(audio_id.to_string());
        Ok(())
    }
}
