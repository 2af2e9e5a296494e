//! Record and replay of backend conversations.
//!
//! A recording is a JSONL file with one entry per `generate` call, holding
//! the call position, the hash of the history the backend saw, and what it
//! returned. Replay serves entries strictly by position and refuses to
//! continue once the history no longer matches.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{history_hash, BackendError, BackendFactory, GenerationSettings, Message, ModelBackend, ModelReply, SampleContext};

pub const REPLAY_FILE: &str = "replay.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordedOutcome {
    Reply(ModelReply),
    Error(BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    /// 1-based call position.
    pub position: usize,
    pub history_hash: String,
    pub outcome: RecordedOutcome,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BackendError {
    BackendError::Io {
        message: format!("{}: {e}", path.display()),
    }
}

pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    state: Mutex<(File, usize)>,
}

impl<B: ModelBackend> RecordingBackend<B> {
    /// Truncates any existing recording at `path`.
    pub fn create(inner: B, path: &Path) -> Result<Self, BackendError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        Ok(RecordingBackend {
            inner,
            path: path.to_path_buf(),
            state: Mutex::new((file, 0)),
        })
    }
}

impl<B: ModelBackend> ModelBackend for RecordingBackend<B> {
    fn generate(&self, history: &[Message], tools: &[Value], settings: &GenerationSettings) -> Result<ModelReply, BackendError> {
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        let result = self.inner.generate(history, tools, settings);
        state.1 += 1;
        let entry = ReplayEntry {
            position: state.1,
            history_hash: history_hash(history),
            outcome: match &result {
                Ok(reply) => RecordedOutcome::Reply(reply.clone()),
                Err(e) => RecordedOutcome::Error(e.clone()),
            },
        };
        let line = serde_json::to_string(&entry).expect("entries serialize");
        writeln!(state.0, "{line}").map_err(|e| io_err(&self.path, e))?;
        result
    }
}

pub struct ReplayBackend {
    entries: Vec<ReplayEntry>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<ReplayEntry>) -> Self {
        ReplayBackend {
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| io_err(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry =
                serde_json::from_str(&line).map_err(|e| io_err(path, format!("line {}: {e}", n + 1)))?;
            entries.push(entry);
        }
        Ok(ReplayBackend::new(entries))
    }
}

impl ModelBackend for ReplayBackend {
    fn generate(&self, history: &[Message], _tools: &[Value], _settings: &GenerationSettings) -> Result<ModelReply, BackendError> {
        let mut cursor = self.cursor.lock().unwrap_or_else(|p| p.into_inner());
        let round = *cursor + 1;
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(BackendError::ReplayExhausted { round })?;
        let actual = history_hash(history);
        if entry.history_hash != actual {
            return Err(BackendError::Divergence {
                round,
                expected: entry.history_hash.clone(),
                actual,
            });
        }
        *cursor += 1;
        match &entry.outcome {
            RecordedOutcome::Reply(r) => Ok(r.clone()),
            RecordedOutcome::Error(e) => Err(e.clone()),
        }
    }
}

/// Wraps another factory and records each sample to
/// `<dir>/<sample_id>/replay.jsonl`.
pub struct RecordingFactory {
    pub inner: Box<dyn BackendFactory>,
    pub dir: PathBuf,
}

impl BackendFactory for RecordingFactory {
    fn backend_for(&self, sample: &SampleContext) -> Result<Box<dyn ModelBackend>, BackendError> {
        let inner = self.inner.backend_for(sample)?;
        let path = self.dir.join(&sample.sample_id).join(REPLAY_FILE);
        Ok(Box::new(RecordingBackend::create(inner, &path)?))
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Serves each sample from `<dir>/<sample_id>/replay.jsonl`.
pub struct ReplayFactory {
    pub dir: PathBuf,
}

impl BackendFactory for ReplayFactory {
    fn backend_for(&self, sample: &SampleContext) -> Result<Box<dyn ModelBackend>, BackendError> {
        Ok(Box::new(ReplayBackend::load(
            &self.dir.join(&sample.sample_id).join(REPLAY_FILE),
        )?))
    }

    fn describe(&self) -> String {
        format!("replay:{}", self.dir.display())
    }
}
