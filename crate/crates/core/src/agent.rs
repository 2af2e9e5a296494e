//! The bounded per-sample reasoning loop and its rescue fallback.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{BackendError, GenerationSettings, ImageAttachment, Message, ModelBackend, ModelReply, ToolCall};
use crate::raster::Raster;
use crate::registry::{Registry, ResourceId};
use crate::routing::{build_rescue_prompt, build_system_prompt, PromptBundle, StrategyTable, TaskKind, SHOW_RESOURCE};
use crate::tools::{self, tool_schema};

/// How many recently created resources the rescue agent gets to see.
pub const RESCUE_RECENT_IMAGES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerToken {
    Yes,
    No,
    A,
    B,
    C,
    D,
}

impl AnswerToken {
    pub const BINARY: [AnswerToken; 2] = [AnswerToken::Yes, AnswerToken::No];
    pub const CHOICES: [AnswerToken; 4] = [AnswerToken::A, AnswerToken::B, AnswerToken::C, AnswerToken::D];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerToken::Yes => "Yes",
            AnswerToken::No => "No",
            AnswerToken::A => "A",
            AnswerToken::B => "B",
            AnswerToken::C => "C",
            AnswerToken::D => "D",
        }
    }

    pub fn fits(self, task: TaskKind) -> bool {
        match task {
            TaskKind::TaskI => AnswerToken::BINARY.contains(&self),
            TaskKind::TaskII => AnswerToken::CHOICES.contains(&self),
        }
    }

    /// The legal answers for `task`.
    pub fn legal(task: TaskKind) -> &'static [AnswerToken] {
        match task {
            TaskKind::TaskI => &AnswerToken::BINARY,
            TaskKind::TaskII => &AnswerToken::CHOICES,
        }
    }
}

impl fmt::Display for AnswerToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerToken {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(AnswerToken::Yes),
            "no" => Ok(AnswerToken::No),
            "a" => Ok(AnswerToken::A),
            "b" => Ok(AnswerToken::B),
            "c" => Ok(AnswerToken::C),
            "d" => Ok(AnswerToken::D),
            _ => Err(format!("not an answer: {s:?}")),
        }
    }
}

/// A verdict plus rationale. The token family fixes the task variant:
/// Yes/No for Task I, A-D for Task II.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub answer: AnswerToken,
    pub rationale: String,
}

impl FinalAnswer {
    pub fn new(task: TaskKind, answer: AnswerToken, rationale: impl Into<String>) -> Result<Self, AgentError> {
        if !answer.fits(task) {
            return Err(AgentError::InvalidInput(format!("{answer} is not a legal answer for {task}")));
        }
        Ok(FinalAnswer {
            answer,
            rationale: rationale.into(),
        })
    }

    pub fn task(&self) -> TaskKind {
        if self.answer.fits(TaskKind::TaskI) {
            TaskKind::TaskI
        } else {
            TaskKind::TaskII
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("no recognizable verdict in reply")]
    Malformed { raw_text: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn normalize(token: &str, task: TaskKind) -> Option<AnswerToken> {
    let t = token.trim().trim_matches(|c: char| !c.is_ascii_alphanumeric());
    let answer: AnswerToken = t.parse().ok()?;
    answer.fits(task).then_some(answer)
}

fn strict(raw: &str, task: TaskKind) -> Option<FinalAnswer> {
    static BLOCK: OnceLock<Regex> = OnceLock::new();
    let block = BLOCK.get_or_init(|| Regex::new(r"(?s)```answer[ \t]*\r?\n(.*?)```").expect("valid regex"));
    let body = block.captures_iter(raw).last()?.get(1)?.as_str();
    let mut answer = None;
    let mut rationale = Vec::new();
    let mut in_rationale = false;
    for line in body.lines() {
        let (key, value) = match line.split_once(':') {
            Some((k, v)) => (k.trim().to_ascii_lowercase(), v.trim()),
            None => {
                if in_rationale {
                    rationale.push(line.trim());
                }
                continue;
            }
        };
        match key.as_str() {
            "answer" | "choice" => {
                answer = value.split_whitespace().next().and_then(|t| normalize(t, task));
                in_rationale = false;
            }
            "rationale" => {
                rationale.push(value);
                in_rationale = true;
            }
            _ if in_rationale => rationale.push(line.trim()),
            _ => {}
        }
    }
    Some(FinalAnswer {
        answer: answer?,
        rationale: rationale.join(" ").trim().to_string(),
    })
}

fn lenient(raw: &str, task: TaskKind) -> Option<FinalAnswer> {
    let answer = raw
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter_map(|t| match task {
            TaskKind::TaskI => normalize(t, task),
            // Lowercase "a" is far more often an article than a choice.
            TaskKind::TaskII if t.len() == 1 && t.chars().all(|c| c.is_ascii_uppercase()) => normalize(t, task),
            TaskKind::TaskII => None,
        })
        .last()?;
    Some(FinalAnswer {
        answer,
        rationale: raw.trim().to_string(),
    })
}

/// Structured extraction first, then a scan for the last standalone verdict.
pub fn parse_final(raw_text: &str, task: TaskKind) -> Result<FinalAnswer, AgentError> {
    strict(raw_text, task)
        .or_else(|| lenient(raw_text, task))
        .ok_or_else(|| AgentError::Malformed {
            raw_text: raw_text.to_string(),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CallOutcome {
    Created {
        new_id: ResourceId,
        observation: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<Value>,
    },
    Shown {
        id: ResourceId,
        observation: String,
    },
    Error {
        message: String,
    },
}

impl CallOutcome {
    fn text(&self) -> String {
        match self {
            CallOutcome::Created { observation, .. } | CallOutcome::Shown { observation, .. } => observation.clone(),
            CallOutcome::Error { message } => format!("error: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 0-based, below the round limit of its phase.
    pub round_index: usize,
    pub tool_calls: Vec<ToolCall>,
    pub outcomes: Vec<CallOutcome>,
    pub model_raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub sample_id: String,
    pub task: TaskKind,
    pub prompt_version: String,
    pub rounds: Vec<RoundRecord>,
    pub rescue_rounds: Vec<RoundRecord>,
    #[serde(rename = "final")]
    pub final_answer: FinalAnswer,
    pub used_rescue: bool,
    pub used_fallback: bool,
    pub model_name: String,
    /// Backend errors, re-asks and model switches, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Transcript {
    /// Tools from the task's subset invoked at least once, by external name.
    pub fn tools_used(&self) -> std::collections::BTreeSet<String> {
        let subset = crate::routing::tool_subset(self.task);
        self.rounds
            .iter()
            .chain(&self.rescue_rounds)
            .flat_map(|r| &r.tool_calls)
            .filter(|c| subset.iter().any(|t| t.as_str() == c.tool_name))
            .map(|c| c.tool_name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub max_rounds: usize,
    pub rescue_max_rounds: usize,
    pub fallback_task_i: FinalAnswer,
    pub fallback_task_ii: FinalAnswer,
    pub settings: GenerationSettings,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_rounds: 10,
            rescue_max_rounds: 3,
            fallback_task_i: FinalAnswer {
                answer: AnswerToken::No,
                rationale: "fallback: no answer within the round limits".into(),
            },
            fallback_task_ii: FinalAnswer {
                answer: AnswerToken::A,
                rationale: "fallback: no answer within the round limits".into(),
            },
            settings: GenerationSettings::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_rounds == 0 || self.rescue_max_rounds == 0 {
            return Err(AgentError::InvalidInput("round limits must be at least 1".into()));
        }
        if !self.fallback_task_i.answer.fits(TaskKind::TaskI) || !self.fallback_task_ii.answer.fits(TaskKind::TaskII) {
            return Err(AgentError::InvalidInput("fallback answer does not fit its task".into()));
        }
        if self.settings.temperature < 0.0 || !self.settings.temperature.is_finite() {
            return Err(AgentError::InvalidInput("temperature must be >= 0".into()));
        }
        Ok(())
    }

    pub fn fallback_for(&self, task: TaskKind) -> &FinalAnswer {
        match task {
            TaskKind::TaskI => &self.fallback_task_i,
            TaskKind::TaskII => &self.fallback_task_ii,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput {
    pub sample_id: String,
    pub task: TaskKind,
    pub question: String,
    pub options: Option<Vec<String>>,
}

impl SampleInput {
    fn prompt_text(&self) -> String {
        let mut text = format!("Question: {}", self.question.trim());
        if let Some(options) = &self.options {
            text.push_str("\nOptions:");
            for (letter, option) in AnswerToken::CHOICES.iter().zip(options) {
                text.push_str(&format!("\n{letter}. {option}"));
            }
        }
        text
    }
}

pub fn show_resource_schema() -> Value {
    json!({
        "name": SHOW_RESOURCE,
        "description": "Display an existing resource again without creating a new one.",
        "parameters": {
            "type": "object",
            "properties": { "source": { "type": "string", "description": "Resource id to display." } },
            "required": ["source"],
        },
    })
}

fn schemas(bundle: &PromptBundle) -> Vec<Value> {
    bundle
        .tool_subset
        .iter()
        .map(|t| tool_schema(*t))
        .chain(std::iter::once(show_resource_schema()))
        .collect()
}

fn attachment(registry: &Registry, id: ResourceId) -> Option<ImageAttachment> {
    let png = registry.get(id).ok()?.raster.to_png().ok()?;
    Some(ImageAttachment { id, png })
}

/// Runs one call against the registry. Failures become error outcomes.
fn dispatch(registry: &mut Registry, bundle: &PromptBundle, call: &ToolCall) -> (CallOutcome, Option<ImageAttachment>) {
    let args = Value::Object(call.arguments.clone());
    if call.tool_name == SHOW_RESOURCE {
        let shown = args
            .get("source")
            .and_then(Value::as_str)
            .ok_or_else(|| "`source` must be a string".to_string())
            .and_then(|s| registry.get_by_name(s).map(|r| r.id).map_err(|e| e.to_string()));
        return match shown {
            Ok(id) => {
                let img = attachment(registry, id);
                let observation = format!("{id} shown again.");
                (CallOutcome::Shown { id, observation }, img)
            }
            Err(message) => (CallOutcome::Error { message }, None),
        };
    }
    let allowed = bundle.tool_subset.iter().any(|t| t.as_str() == call.tool_name);
    if !allowed {
        let message = format!("tool {:?} is not available for this task", call.tool_name);
        return (CallOutcome::Error { message }, None);
    }
    match tools::execute(registry, &call.tool_name, &args) {
        Ok(out) => {
            let img = attachment(registry, out.new_id);
            (
                CallOutcome::Created {
                    new_id: out.new_id,
                    observation: out.observation,
                    value: out.value,
                },
                img,
            )
        }
        Err(e) => (CallOutcome::Error { message: e.to_string() }, None),
    }
}

/// Calls the backend, switching once to the fallback model on quota errors.
fn generate(
    backend: &dyn ModelBackend,
    history: &[Message],
    tools: &[Value],
    settings: &mut GenerationSettings,
    notes: &mut Vec<String>,
) -> Result<ModelReply, BackendError> {
    match backend.generate(history, tools, settings) {
        Err(BackendError::Quota { message }) if settings.fallback_model_name.is_some() => {
            let next = settings.fallback_model_name.take().expect("checked");
            notes.push(format!("quota error ({message}); switching model {} -> {next}", settings.model_name));
            settings.model_name = next;
            backend.generate(history, tools, settings)
        }
        other => other,
    }
}

const REASK: &str = "Your reply did not contain a recognizable answer. Reply now with only the fenced answer block described in the instructions.";

/// One phase of the loop: main or rescue.
struct Phase<'a> {
    name: &'static str,
    bundle: &'a PromptBundle,
    limit: usize,
    allow_reask: bool,
}

fn run_phase(
    phase: &Phase<'_>,
    backend: &dyn ModelBackend,
    task: TaskKind,
    mut history: Vec<Message>,
    registry: &mut Registry,
    settings: &mut GenerationSettings,
    notes: &mut Vec<String>,
) -> (Vec<RoundRecord>, Option<FinalAnswer>) {
    let tools = schemas(phase.bundle);
    let mut rounds = Vec::new();
    let mut reasked = !phase.allow_reask;
    while rounds.len() < phase.limit {
        let reply = match generate(backend, &history, &tools, settings, notes) {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("{}: backend error: {e}", phase.name));
                return (rounds, None);
            }
        };
        let raw_text = match reply {
            ModelReply::ToolCalls { calls, raw_text } if !calls.is_empty() => {
                history.push(Message::assistant(raw_text.clone(), calls.clone()));
                let mut outcomes = Vec::with_capacity(calls.len());
                for call in &calls {
                    let (outcome, image) = dispatch(registry, phase.bundle, call);
                    history.push(Message::tool(call.call_id.clone(), outcome.text(), image.into_iter().collect()));
                    outcomes.push(outcome);
                }
                rounds.push(RoundRecord {
                    round_index: rounds.len(),
                    tool_calls: calls,
                    outcomes,
                    model_raw: raw_text,
                });
                continue;
            }
            ModelReply::ToolCalls { raw_text, .. } | ModelReply::Final { raw_text } => raw_text,
        };
        match parse_final(&raw_text, task) {
            Ok(answer) => return (rounds, Some(answer)),
            Err(_) if !reasked => {
                reasked = true;
                notes.push(format!("{}: malformed final answer, re-asking", phase.name));
                history.push(Message::assistant(raw_text, Vec::new()));
                history.push(Message::user(REASK, Vec::new()));
            }
            Err(_) => {
                notes.push(format!("{}: malformed final answer", phase.name));
                return (rounds, None);
            }
        }
    }
    notes.push(format!("{}: round limit of {} reached", phase.name, phase.limit));
    (rounds, None)
}

pub struct RescueOutcome {
    pub rounds: Vec<RoundRecord>,
    pub final_answer: Option<FinalAnswer>,
}

/// Fresh conversation with the compressed prompt, the original image and
/// the last few created resources. Shares the sample's registry.
pub fn run_rescue(
    cfg: &AgentConfig,
    backend: &dyn ModelBackend,
    input: &SampleInput,
    registry: &mut Registry,
    settings: &mut GenerationSettings,
    notes: &mut Vec<String>,
) -> RescueOutcome {
    let bundle = build_rescue_prompt(input.task, &StrategyTable::builtin(input.task));
    let ids = registry.list_ids();
    let recent: Vec<ResourceId> = ids.iter().skip(1).rev().take(RESCUE_RECENT_IMAGES).rev().copied().collect();
    let images: Vec<ImageAttachment> = std::iter::once(ResourceId::Original)
        .chain(recent.iter().copied())
        .filter_map(|id| attachment(registry, id))
        .collect();
    let listing: Vec<String> = ids.iter().map(ToString::to_string).collect();
    let text = format!(
        "{}\n\nAn earlier attempt used up its tool budget. Registry: {}. Attached: {}.",
        input.prompt_text(),
        listing.join(", "),
        images.iter().map(|i| i.id.to_string()).collect::<Vec<_>>().join(", ")
    );
    let history = vec![Message::system(bundle.system_prompt.clone()), Message::user(text, images)];
    let phase = Phase {
        name: "rescue",
        bundle: &bundle,
        limit: cfg.rescue_max_rounds,
        allow_reask: false,
    };
    let (rounds, final_answer) = run_phase(&phase, backend, input.task, history, registry, settings, notes);
    RescueOutcome { rounds, final_answer }
}

/// Runs the main loop, then rescue, then the configured fallback. Always
/// produces an answer of the task's variant.
pub fn run_sample(
    cfg: &AgentConfig,
    backend: &dyn ModelBackend,
    input: &SampleInput,
    image: Raster,
) -> Result<(Transcript, Registry), AgentError> {
    cfg.validate()?;
    if input.question.trim().is_empty() {
        return Err(AgentError::InvalidInput("question is empty".into()));
    }
    let mut registry = Registry::new(image);
    let bundle = build_system_prompt(input.task);
    let original = attachment(&registry, ResourceId::Original)
        .ok_or_else(|| AgentError::InvalidInput("original image cannot be encoded".into()))?;
    let history = vec![
        Message::system(bundle.system_prompt.clone()),
        Message::user(
            format!("{}\n\nThe image is attached as resource `original`.", input.prompt_text()),
            vec![original],
        ),
    ];
    let mut settings = cfg.settings.clone();
    let mut notes = Vec::new();
    let phase = Phase {
        name: "main",
        bundle: &bundle,
        limit: cfg.max_rounds,
        allow_reask: true,
    };
    let (rounds, main_final) = run_phase(&phase, backend, input.task, history, &mut registry, &mut settings, &mut notes);

    let (rescue_rounds, final_answer, used_rescue, used_fallback) = match main_final {
        Some(answer) => (Vec::new(), answer, false, false),
        None => {
            let rescue = run_rescue(cfg, backend, input, &mut registry, &mut settings, &mut notes);
            match rescue.final_answer {
                Some(answer) => (rescue.rounds, answer, true, false),
                None => (rescue.rounds, cfg.fallback_for(input.task).clone(), true, true),
            }
        }
    };
    let transcript = Transcript {
        sample_id: input.sample_id.clone(),
        task: input.task,
        prompt_version: bundle.prompt_version.clone(),
        rounds,
        rescue_rounds,
        final_answer,
        used_rescue,
        used_fallback,
        model_name: settings.model_name,
        notes,
    };
    Ok((transcript, registry))
}
