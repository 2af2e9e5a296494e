use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_error, HarnessError};
use crate::agent::AnswerToken;
use crate::raster::Raster;
use crate::routing::TaskKind;
use crate::stimulus::Polarity;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleManifestEntry {
    pub sample_id: String,
    pub task: TaskKind,
    /// Relative paths resolve against the manifest's directory.
    pub image_path: PathBuf,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<AnswerToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl SampleManifestEntry {
    fn check(&self) -> Result<(), String> {
        if self.sample_id.trim().is_empty() {
            return Err("empty sample_id".into());
        }
        if self.sample_id.contains(['/', '\\']) || self.sample_id.starts_with('.') {
            return Err(format!("sample_id {:?} is not usable as a directory name", self.sample_id));
        }
        if self.question.trim().is_empty() {
            return Err(format!("{}: empty question", self.sample_id));
        }
        match (self.task, &self.options) {
            (TaskKind::TaskII, Some(o)) if o.len() == 4 => {}
            (TaskKind::TaskII, Some(o)) => {
                return Err(format!("{}: Task II needs 4 options, got {}", self.sample_id, o.len()));
            }
            (TaskKind::TaskII, None) => return Err(format!("{}: Task II needs 4 options", self.sample_id)),
            (TaskKind::TaskI, Some(_)) => return Err(format!("{}: Task I entries take no options", self.sample_id)),
            (TaskKind::TaskI, None) => {}
        }
        if let Some(label) = self.label {
            if !label.fits(self.task) {
                return Err(format!("{}: label {label} is not legal for {}", self.sample_id, self.task));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub entries: Vec<SampleManifestEntry>,
}

impl Manifest {
    pub fn image_path(&self, entry: &SampleManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.image_path)
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleManifestEntry> {
        self.entries.iter().find(|e| e.sample_id == sample_id)
    }
}

/// Parses and validates a JSONL manifest, including image decodability.
pub fn load_manifest(path: &Path) -> Result<Manifest, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    let mut entries = Vec::new();
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: SampleManifestEntry = serde_json::from_str(line)
            .map_err(|e| HarnessError::Validation(format!("{} line {}: {e}", path.display(), n + 1)))?;
        if let Err(p) = entry.check() {
            problems.push(format!("line {}: {p}", n + 1));
        }
        if !seen.insert(entry.sample_id.clone()) {
            problems.push(format!("line {}: duplicate sample_id {}", n + 1, entry.sample_id));
        }
        entries.push(entry);
    }
    if !problems.is_empty() {
        return Err(HarnessError::Validation(problems.join("; ")));
    }
    let manifest = Manifest {
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        entries,
    };
    let unreadable: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| Raster::load(&manifest.image_path(e)).is_err())
        .map(|e| e.sample_id.as_str())
        .collect();
    if !unreadable.is_empty() {
        return Err(HarnessError::Validation(format!(
            "missing or undecodable images for: {}",
            unreadable.join(", ")
        )));
    }
    Ok(manifest)
}
