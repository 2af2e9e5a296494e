//! Batch evaluation: manifest ingestion, concurrent runs, scoring with a
//! positive/negative split, tool-usage analytics and the JPEG sweep.

pub mod batch;
pub mod manifest;
pub mod score;
pub mod stats;
pub mod sweep;

use std::path::Path;

use thiserror::Error;

pub use batch::{run_batch, ResultRecord, RunConfig, RunMeta, RunSummary};
pub use manifest::{load_manifest, Manifest, SampleManifestEntry};
pub use score::{load_results, score, ScoreReport};
pub use stats::{load_transcripts, tool_usage_stats, ToolUsageReport};
pub use sweep::{compression_sweep, SweepReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad input: manifest, results or arguments.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("no labeled entries to score")]
    NoLabels,
    #[error("no transcripts found")]
    NoData,
    #[error("output directory {0} already exists; pass the overwrite flag to reuse it")]
    OutDirExists(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Validation problems map to exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Validation(_) | HarnessError::NoLabels | HarnessError::NoData | HarnessError::OutDirExists(_)
        )
    }
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.display().to_string();
    move |e| HarnessError::Io {
        path,
        message: e.to_string(),
    }
}

pub(crate) fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_error(path))
}
