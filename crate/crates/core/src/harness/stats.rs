use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batch::TRANSCRIPT_FILE;
use super::{io_error, HarnessError};
use crate::agent::Transcript;
use crate::routing::{tool_subset, TaskKind};
use crate::tools::ToolName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolFraction {
    pub tool: String,
    pub samples: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageTable {
    pub n_samples: usize,
    /// Every tool of the subset, sorted by fraction (descending), then name.
    pub tools: Vec<ToolFraction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolUsageReport {
    /// Keyed by task number.
    pub per_task: BTreeMap<String, UsageTable>,
    pub overall: UsageTable,
}

fn table<'a>(transcripts: impl Iterator<Item = &'a Transcript>, subset: &[ToolName]) -> UsageTable {
    let mut counts: BTreeMap<&str, usize> = subset.iter().map(|t| (t.as_str(), 0)).collect();
    let mut n = 0;
    for t in transcripts {
        n += 1;
        for tool in t.tools_used() {
            if let Some(c) = counts.get_mut(tool.as_str()) {
                *c += 1;
            }
        }
    }
    let mut tools: Vec<ToolFraction> = counts
        .into_iter()
        .map(|(tool, samples)| ToolFraction {
            tool: tool.to_string(),
            samples,
            fraction: if n == 0 { 0.0 } else { samples as f64 / n as f64 },
        })
        .collect();
    tools.sort_by(|a, b| b.samples.cmp(&a.samples).then_with(|| a.tool.cmp(&b.tool)));
    UsageTable { n_samples: n, tools }
}

/// Fraction of samples that invoked each tool at least once, successful or not.
pub fn tool_usage_stats(transcripts: &[Transcript]) -> Result<ToolUsageReport, HarnessError> {
    if transcripts.is_empty() {
        return Err(HarnessError::NoData);
    }
    let mut per_task = BTreeMap::new();
    for task in [TaskKind::TaskI, TaskKind::TaskII] {
        let of_task: Vec<&Transcript> = transcripts.iter().filter(|t| t.task == task).collect();
        if !of_task.is_empty() {
            per_task.insert(task.number().to_string(), table(of_task.into_iter(), &tool_subset(task)));
        }
    }
    let overall = table(transcripts.iter(), &ToolName::ALL);
    Ok(ToolUsageReport { per_task, overall })
}

/// Reads `<dir>/<sample>/transcript.json` for every sample directory.
pub fn load_transcripts(dir: &Path) -> Result<Vec<Transcript>, HarnessError> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_error(dir))? {
        let path = entry.map_err(io_error(dir))?.path().join(TRANSCRIPT_FILE);
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(io_error(p))?;
            serde_json::from_str(&text).map_err(|e| HarnessError::Validation(format!("{}: {e}", p.display())))
        })
        .collect()
}

impl ToolUsageReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let mut section = |title: String, t: &UsageTable| {
            out.push_str(&format!("{title} ({} samples)\n", t.n_samples));
            let width = t.tools.iter().map(|f| f.tool.len()).max().unwrap_or(4).max(4);
            out.push_str(&format!("  {:<width$}  {:>7}  {:>7}\n", "tool", "samples", "share"));
            for f in &t.tools {
                out.push_str(&format!(
                    "  {:<width$}  {:>7}  {:>6.1}%\n",
                    f.tool,
                    f.samples,
                    f.fraction * 100.0
                ));
            }
        };
        for (task, t) in &self.per_task {
            let name = TaskKind::from_number(task.parse().unwrap_or(0)).map_or(task.clone(), |k| k.to_string());
            section(name, t);
        }
        section("all tasks".to_string(), &self.overall);
        out
    }
}
