use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, SampleManifestEntry};
use super::{io_error, write_json_pretty, HarnessError};
use crate::agent::{run_sample, AgentConfig, AnswerToken, SampleInput, Transcript};
use crate::model::{BackendFactory, SampleContext};
use crate::raster::Raster;
use crate::registry::Registry;
use crate::routing::{build_system_prompt, TaskKind};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.json";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub overwrite: bool,
    /// Only run entries of this task.
    pub task_filter: Option<TaskKind>,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            agent: AgentConfig::default(),
            workers: 1,
            out_dir: out_dir.into(),
            overwrite: false,
            task_filter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub sample_id: String,
    pub task: TaskKind,
    pub answer: AnswerToken,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub rounds_used: usize,
    pub rescue_rounds_used: usize,
    pub rescue_used: bool,
    pub fallback_used: bool,
    pub tools_used: BTreeSet<String>,
    /// Why the sample could not run normally, if it could not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// Keyed by task number.
    pub prompt_version: BTreeMap<String, String>,
    pub model_name: String,
    pub backend: String,
    pub config: MetaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub max_rounds: usize,
    pub rescue_max_rounds: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub task_filter: Option<TaskKind>,
    pub n_samples: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub meta: RunMeta,
    pub results: Vec<ResultRecord>,
    pub results_path: PathBuf,
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<(), HarnessError> {
    let dir = &cfg.out_dir;
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir).map_err(io_error(dir))?.next().is_some();
        if non_empty && !cfg.overwrite {
            return Err(HarnessError::OutDirExists(dir.display().to_string()));
        }
    }
    std::fs::create_dir_all(dir).map_err(io_error(dir))
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

fn run_entry(
    manifest: &Manifest,
    entry: &SampleManifestEntry,
    factory: &dyn BackendFactory,
    agent: &AgentConfig,
) -> Result<(Transcript, Registry), String> {
    let image = Raster::load(&manifest.image_path(entry)).map_err(|e| e.to_string())?;
    let ctx = SampleContext {
        sample_id: entry.sample_id.clone(),
        task: entry.task,
        probes: None,
    };
    let backend = factory.backend_for(&ctx).map_err(|e| e.to_string())?;
    let input = SampleInput {
        sample_id: entry.sample_id.clone(),
        task: entry.task,
        question: entry.question.clone(),
        options: entry.options.clone(),
    };
    run_sample(agent, backend.as_ref(), &input, image).map_err(|e| e.to_string())
}

/// Transcript for a sample that never reached the agent loop.
fn failed_transcript(entry: &SampleManifestEntry, agent: &AgentConfig, reason: &str) -> Transcript {
    Transcript {
        sample_id: entry.sample_id.clone(),
        task: entry.task,
        prompt_version: build_system_prompt(entry.task).prompt_version,
        rounds: Vec::new(),
        rescue_rounds: Vec::new(),
        final_answer: agent.fallback_for(entry.task).clone(),
        used_rescue: false,
        used_fallback: true,
        model_name: agent.settings.model_name.clone(),
        notes: vec![format!("sample failed: {reason}")],
    }
}

fn process(
    manifest: &Manifest,
    entry: &SampleManifestEntry,
    factory: &dyn BackendFactory,
    cfg: &RunConfig,
) -> Result<ResultRecord, HarnessError> {
    let outcome = catch_unwind(AssertUnwindSafe(|| run_entry(manifest, entry, factory, &cfg.agent)))
        .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(p))));
    let sample_dir = cfg.out_dir.join(&entry.sample_id);
    std::fs::create_dir_all(&sample_dir).map_err(io_error(&sample_dir))?;
    let (transcript, error) = match outcome {
        Ok((transcript, registry)) => {
            registry
                .archive(&sample_dir)
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
            (transcript, None)
        }
        Err(reason) => {
            tracing::warn!(sample = %entry.sample_id, %reason, "sample failed; using fallback answer");
            (failed_transcript(entry, &cfg.agent, &reason), Some(reason))
        }
    };
    write_json_pretty(&sample_dir.join(TRANSCRIPT_FILE), &transcript)?;
    Ok(ResultRecord {
        sample_id: entry.sample_id.clone(),
        task: entry.task,
        answer: transcript.final_answer.answer,
        correct: entry.label.map(|l| l == transcript.final_answer.answer),
        rounds_used: transcript.rounds.len(),
        rescue_rounds_used: transcript.rescue_rounds.len(),
        rescue_used: transcript.used_rescue,
        fallback_used: transcript.used_fallback,
        tools_used: transcript.tools_used(),
        error,
    })
}

/// Runs every selected entry on a bounded pool and writes
/// `<out>/results.jsonl` (run metadata line, then records by sample id)
/// plus per-sample transcripts and registries.
pub fn run_batch(manifest: &Manifest, factory: &dyn BackendFactory, cfg: &RunConfig) -> Result<RunSummary, HarnessError> {
    cfg.agent
        .validate()
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    if cfg.workers == 0 {
        return Err(HarnessError::Validation("workers must be at least 1".into()));
    }
    prepare_out_dir(cfg)?;
    let selected: Vec<&SampleManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| cfg.task_filter.is_none_or(|t| t == e.task))
        .collect();
    if selected.is_empty() {
        tracing::warn!("no samples to run");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let mut results = pool.install(|| {
        selected
            .par_iter()
            .map(|entry| process(manifest, entry, factory, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?;
    results.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let tasks: BTreeSet<TaskKind> = selected.iter().map(|e| e.task).collect();
    let meta = RunMeta {
        prompt_version: tasks
            .iter()
            .map(|t| (t.number().to_string(), build_system_prompt(*t).prompt_version))
            .collect(),
        model_name: cfg.agent.settings.model_name.clone(),
        backend: factory.describe(),
        config: MetaConfig {
            max_rounds: cfg.agent.max_rounds,
            rescue_max_rounds: cfg.agent.rescue_max_rounds,
            temperature: cfg.agent.settings.temperature,
            max_output_tokens: cfg.agent.settings.max_output_tokens,
            task_filter: cfg.task_filter,
            n_samples: selected.len(),
        },
    };
    let results_path = cfg.out_dir.join(RESULTS_FILE);
    write_results(&results_path, &meta, &results)?;
    Ok(RunSummary {
        meta,
        results,
        results_path,
    })
}

pub fn write_results(path: &Path, meta: &RunMeta, results: &[ResultRecord]) -> Result<(), HarnessError> {
    let encode = |v: serde_json::Result<String>| v.map_err(|e| HarnessError::Runtime(e.to_string()));
    let mut text = encode(serde_json::to_string(&serde_json::json!({ "run_meta": meta })))?;
    text.push('\n');
    for r in results {
        text.push_str(&encode(serde_json::to_string(r))?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_error(path))
}
