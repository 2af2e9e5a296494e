//! Task-specific system prompts: tool subsets, the question-category table
//! with recommended tool sequences, and the answer schema.
//!
//! Category tables are data (`assets/task*_strategies.toml`) and can be
//! swapped for an edited file at runtime. Prompt text is rendered from
//! versioned templates with the task kind as the only input.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::tools::{tool_schema, ToolName};

/// Bumped whenever a template file changes.
pub const TEMPLATE_VERSION: &str = "tpl-1";

const SYSTEM_TEMPLATE: &str = include_str!("../assets/system_prompt.txt");
const RESCUE_TEMPLATE: &str = include_str!("../assets/rescue_prompt.txt");
const TASK1_STRATEGIES: &str = include_str!("../assets/task1_strategies.toml");
const TASK2_STRATEGIES: &str = include_str!("../assets/task2_strategies.toml");

/// Name of the pseudo-tool that re-sends an existing resource.
pub const SHOW_RESOURCE: &str = "show_resource";

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("strategy file: {0}")]
    Parse(String),
    #[error("category {category:?} recommends {tool:?}, which {task} does not expose")]
    ToolNotExposed {
        category: String,
        tool: String,
        task: TaskKind,
    },
    #[error("strategy table for {0} has no categories")]
    Empty(TaskKind),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Task I asks binary Yes/No questions; Task II asks four-way multiple choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    TaskI,
    TaskII,
}

impl TaskKind {
    pub fn number(self) -> u8 {
        match self {
            TaskKind::TaskI => 1,
            TaskKind::TaskII => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(TaskKind::TaskI),
            2 => Some(TaskKind::TaskII),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "1" | "I" | "TaskI" | "task1" => Some(TaskKind::TaskI),
            "2" | "II" | "TaskII" | "task2" => Some(TaskKind::TaskII),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::TaskI => f.write_str("Task I"),
            TaskKind::TaskII => f.write_str("Task II"),
        }
    }
}

// Serialized as the task number, matching the CLI's `--task {1|2}`.
impl Serialize for TaskKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for TaskKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        let parsed = match &v {
            serde_json::Value::Number(n) => n.as_u64().and_then(|n| TaskKind::from_number(n as u8)),
            serde_json::Value::String(s) => TaskKind::parse(s),
            _ => None,
        };
        parsed.ok_or_else(|| serde::de::Error::custom(format!("unknown task {v}")))
    }
}

pub fn tool_subset(task: TaskKind) -> Vec<ToolName> {
    use ToolName::*;
    let core = [DrawLine, DrawRectangle, DrawCircle, Crop, CompareCrops];
    match task {
        TaskKind::TaskI => core.to_vec(),
        TaskKind::TaskII => core
            .into_iter()
            .chain([OverlayGrid, ExtractChannel, SampleColor, IsolateColor, Blur])
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStrategy {
    #[serde(rename = "name")]
    pub category_name: String,
    pub description: String,
    #[serde(rename = "tools")]
    pub recommended_tools: Vec<ToolName>,
    #[serde(rename = "steps")]
    pub procedure: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub version: String,
    #[serde(rename = "category")]
    pub categories: Vec<CategoryStrategy>,
}

impl StrategyTable {
    pub fn builtin(task: TaskKind) -> Self {
        let text = match task {
            TaskKind::TaskI => TASK1_STRATEGIES,
            TaskKind::TaskII => TASK2_STRATEGIES,
        };
        StrategyTable::parse(task, text).expect("bundled strategy tables are valid")
    }

    /// Parses a strategy file and checks every recommended tool against the
    /// task's tool subset.
    pub fn parse(task: TaskKind, text: &str) -> Result<Self, RoutingError> {
        let table: StrategyTable = toml::from_str(text).map_err(|e| RoutingError::Parse(e.to_string()))?;
        if table.categories.is_empty() {
            return Err(RoutingError::Empty(task));
        }
        let allowed = tool_subset(task);
        for cat in &table.categories {
            if let Some(tool) = cat.recommended_tools.iter().find(|t| !allowed.contains(t)) {
                return Err(RoutingError::ToolNotExposed {
                    category: cat.category_name.clone(),
                    tool: tool.to_string(),
                    task,
                });
            }
        }
        Ok(table)
    }

    pub fn load(task: TaskKind, path: &Path) -> Result<Self, RoutingError> {
        let text = std::fs::read_to_string(path).map_err(|source| RoutingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        StrategyTable::parse(task, &text)
    }
}

pub fn category_table(task: TaskKind) -> Vec<CategoryStrategy> {
    StrategyTable::builtin(task).categories
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub tool_subset: Vec<ToolName>,
    pub answer_schema: String,
    pub prompt_version: String,
}

pub fn answer_schema(task: TaskKind) -> String {
    match task {
        TaskKind::TaskI => "Reply with exactly one fenced block:\n\
             ```answer\n\
             answer: Yes or No\n\
             rationale: one or two sentences citing the resource ids you inspected\n\
             ```"
        .to_string(),
        TaskKind::TaskII => "Reply with exactly one fenced block:\n\
             ```answer\n\
             choice: A, B, C or D\n\
             rationale: one or two sentences citing the resource ids you inspected\n\
             ```"
        .to_string(),
    }
}

fn task_intro(task: TaskKind) -> &'static str {
    match task {
        TaskKind::TaskI => {
            "This is a binary task: the question is answered with Yes or No. Some images were \
             edited so that the classic illusion no longer holds."
        }
        TaskKind::TaskII => {
            "This is a multiple-choice task: pick exactly one of the four options A-D. Images \
             show illusions or real-world anomalies and impossible scenes."
        }
    }
}

fn render_tools(task: TaskKind) -> String {
    let mut out = String::new();
    for tool in tool_subset(task) {
        let schema = tool_schema(tool);
        let required: Vec<&str> = schema["parameters"]["required"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_str()).collect())
            .unwrap_or_default();
        out.push_str(&format!(
            "- {}({}): {}\n",
            tool,
            required.join(", "),
            schema["description"].as_str().unwrap_or_default()
        ));
    }
    out.push_str(&format!(
        "- {SHOW_RESOURCE}(source): re-display an existing resource; creates nothing new.\n"
    ));
    out.push_str("Coordinates are pixels with the origin at the top-left, x to the right and y downward. All arguments are flat key/value pairs; colors are #RRGGBB.");
    out
}

fn render_categories(table: &StrategyTable) -> String {
    let mut out = String::new();
    for (i, cat) in table.categories.iter().enumerate() {
        let tools: Vec<&str> = cat.recommended_tools.iter().map(|t| t.as_str()).collect();
        out.push_str(&format!("## {}. {}\n", i + 1, cat.category_name));
        out.push_str(&format!("When: {}\n", cat.description));
        out.push_str(&format!("Tools: {}\n", tools.join(" -> ")));
        for (j, step) in cat.procedure.iter().enumerate() {
            out.push_str(&format!("  {}. {}\n", j + 1, step));
        }
        out.push('\n');
    }
    out.trim_end().to_string()
}

fn render_category_summaries(table: &StrategyTable) -> String {
    table
        .categories
        .iter()
        .map(|c| {
            let tools: Vec<&str> = c.recommended_tools.iter().map(|t| t.as_str()).collect();
            format!("- {}: {} [{}]", c.category_name, c.description, tools.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn prompt_version(table: &StrategyTable) -> String {
    format!("{TEMPLATE_VERSION}/{}", table.version)
}

fn fill(template: &str, task: TaskKind, table: &StrategyTable, categories: String) -> String {
    template
        .replace("{{version}}", &prompt_version(table))
        .replace("{{task_intro}}", task_intro(task))
        .replace("{{tools}}", &render_tools(task))
        .replace("{{categories}}", &categories)
        .replace("{{answer_schema}}", &answer_schema(task))
}

pub fn build_system_prompt(task: TaskKind) -> PromptBundle {
    build_with_table(task, &StrategyTable::builtin(task))
}

pub fn build_with_table(task: TaskKind, table: &StrategyTable) -> PromptBundle {
    PromptBundle {
        system_prompt: fill(SYSTEM_TEMPLATE, task, table, render_categories(table)),
        tool_subset: tool_subset(task),
        answer_schema: answer_schema(task),
        prompt_version: prompt_version(table),
    }
}

/// Compressed prompt for the rescue agent: category summaries only.
pub fn build_rescue_prompt(task: TaskKind, table: &StrategyTable) -> PromptBundle {
    PromptBundle {
        system_prompt: fill(RESCUE_TEMPLATE, task, table, render_category_summaries(table)),
        tool_subset: tool_subset(task),
        answer_schema: answer_schema(task),
        prompt_version: prompt_version(table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets() {
        let t1 = tool_subset(TaskKind::TaskI);
        let t2 = tool_subset(TaskKind::TaskII);
        assert_eq!(t1.len(), 5);
        assert!(!t1.contains(&ToolName::SampleColor));
        assert_eq!(t2.len(), 10);
        assert!(t2.contains(&ToolName::Blur));
        assert!(t1.iter().all(|t| t2.contains(t)));
    }

    #[test]
    fn category_tables() {
        let t1 = category_table(TaskKind::TaskI);
        let names: Vec<&str> = t1.iter().map(|c| c.category_name.as_str()).collect();
        assert_eq!(
            names,
            [
                "size comparison",
                "color comparison",
                "line length",
                "line straightness",
                "line alignment",
                "line parallelism",
                "boundary detection"
            ]
        );
        let t2 = category_table(TaskKind::TaskII);
        assert_eq!(t2.len(), 16);
        for named in [
            "counting",
            "hidden-content recovery",
            "impossible figures",
            "forced perspective / scale tricks",
            "entity realism",
            "spatial relation / support",
            "physical plausibility / affordance",
        ] {
            assert!(t2.iter().any(|c| c.category_name == named), "{named}");
        }
        let straight = t1.iter().find(|c| c.category_name == "line straightness").unwrap();
        let draw = straight.recommended_tools.iter().position(|t| *t == ToolName::DrawLine).unwrap();
        let crop = straight.recommended_tools.iter().position(|t| *t == ToolName::Crop).unwrap();
        assert!(draw < crop);
        let boundary = t1.iter().find(|c| c.category_name == "boundary detection").unwrap();
        let steps = boundary.procedure.join(" ");
        assert!(steps.contains("separator line or gap"));
        assert!(steps.contains("multiple boundaries"));
    }

    #[test]
    fn strategies_respect_subsets() {
        for task in [TaskKind::TaskI, TaskKind::TaskII] {
            let subset = tool_subset(task);
            for cat in category_table(task) {
                assert!(!cat.recommended_tools.is_empty());
                assert!(cat.recommended_tools.iter().all(|t| subset.contains(t)), "{}", cat.category_name);
            }
        }
    }

    #[test]
    fn prompts_are_deterministic_and_scoped() {
        let a = build_system_prompt(TaskKind::TaskI);
        let b = build_system_prompt(TaskKind::TaskI);
        assert_eq!(a, b);
        assert!(!a.system_prompt.contains("sample_color"));
        assert!(a.system_prompt.contains(&a.prompt_version));
        assert!(a.system_prompt.contains("answer: Yes or No"));
        assert!(!a.system_prompt.contains("{{"));
        let t2 = build_system_prompt(TaskKind::TaskII);
        assert!(t2.system_prompt.contains("Ishihara-style isolation"));
        assert!(t2.system_prompt.contains("choice: A, B, C or D"));
    }

    #[test]
    fn rescue_prompt_is_compressed() {
        let table = StrategyTable::builtin(TaskKind::TaskII);
        let full = build_with_table(TaskKind::TaskII, &table);
        let rescue = build_rescue_prompt(TaskKind::TaskII, &table);
        assert!(rescue.system_prompt.len() < full.system_prompt.len());
        assert!(rescue.system_prompt.contains("counting"));
        assert!(!rescue.system_prompt.contains("Count cell by cell"));
    }

    #[test]
    fn edited_table_is_validated() {
        let bad = r#"
version = "x"
[[category]]
name = "color"
description = "d"
tools = ["sample_color"]
steps = ["s"]
"#;
        assert!(matches!(
            StrategyTable::parse(TaskKind::TaskI, bad),
            Err(RoutingError::ToolNotExposed { .. })
        ));
        let ok = StrategyTable::parse(TaskKind::TaskII, bad).unwrap();
        let bundle = build_with_table(TaskKind::TaskII, &ok);
        assert!(bundle.prompt_version.ends_with("/x"));
        assert!(StrategyTable::parse(TaskKind::TaskI, "version = \"y\"\ncategory = []").is_err());
    }

    #[test]
    fn task_kind_serde() {
        assert_eq!(serde_json::to_string(&TaskKind::TaskII).unwrap(), "2");
        let t: TaskKind = serde_json::from_str("\"I\"").unwrap();
        assert_eq!(t, TaskKind::TaskI);
        assert!(serde_json::from_str::<TaskKind>("3").is_err());
    }
}
