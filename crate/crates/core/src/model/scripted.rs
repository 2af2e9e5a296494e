//! Deterministic offline policies.
//!
//! Policies are stateless: each `generate` call reconstructs progress from
//! the history alone, so concurrent calls and rescue restarts need no
//! bookkeeping. The oracle reads probe locations from the stimulus sidecar
//! and decides from returned pixel data and sampled values only.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::{json, Map, Value};

use super::{BackendError, GenerationSettings, Message, ModelBackend, ModelReply, Role, ToolCall};
use crate::agent::AnswerToken;
use crate::raster::{Raster, Rgb};
use crate::routing::{tool_subset, TaskKind};
use crate::stimulus::Probes;
use crate::tools::{Point, Rect, ToolName};

/// Color of the reference segment the oracle draws over a target line.
pub const REFERENCE_COLOR: Rgb = Rgb::new(0x00, 0xC0, 0x00);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Oracle,
    AlwaysPositive,
    NeverFinalize,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Oracle => "oracle",
            PolicyKind::AlwaysPositive => "always_positive",
            PolicyKind::NeverFinalize => "never_finalize",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "oracle" => Some(PolicyKind::Oracle),
            "always_positive" => Some(PolicyKind::AlwaysPositive),
            "never_finalize" => Some(PolicyKind::NeverFinalize),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    kind: PolicyKind,
    task: TaskKind,
    probes: Option<Probes>,
}

/// What the policy can see of the current conversation.
struct Progress<'a> {
    /// Assistant turns that issued tool calls.
    rounds: usize,
    tool_messages: Vec<&'a Message>,
}

fn progress(history: &[Message]) -> Progress<'_> {
    Progress {
        rounds: history
            .iter()
            .filter(|m| m.role == Role::Assistant && !m.tool_calls.is_empty())
            .count(),
        tool_messages: history.iter().filter(|m| m.role == Role::Tool).collect(),
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("tool arguments are objects"),
    }
}

fn calls(round: usize, specs: Vec<(ToolName, Value)>) -> ModelReply {
    let calls = specs
        .into_iter()
        .enumerate()
        .map(|(k, (tool, args))| ToolCall {
            call_id: format!("call_{}_{}", round + 1, k + 1),
            tool_name: tool.as_str().to_string(),
            arguments: object(args),
        })
        .collect();
    ModelReply::ToolCalls {
        calls,
        raw_text: String::new(),
    }
}

pub fn final_text(task: TaskKind, answer: AnswerToken, rationale: &str) -> String {
    let field = match task {
        TaskKind::TaskI => "answer",
        TaskKind::TaskII => "choice",
    };
    format!("```answer\n{field}: {answer}\nrationale: {rationale}\n```")
}

fn sampled_hex(text: &str) -> Option<Rgb> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"window: (#[0-9A-Fa-f]{6})").expect("valid regex"));
    re.captures(text)?.get(1)?.as_str().parse().ok()
}

fn created_id(text: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^(img_\d+):").expect("valid regex"));
    Some(re.captures(text)?.get(1)?.as_str().to_string())
}

fn decoded_images(messages: &[&Message]) -> Vec<Raster> {
    messages
        .iter()
        .flat_map(|m| m.images.iter())
        .filter_map(|img| Raster::decode(&img.png).ok())
        .collect()
}

fn rect_args(source: &str, r: Rect) -> Value {
    json!({ "source": source, "x0": r.x0, "y0": r.y0, "x1": r.x1, "y1": r.y1 })
}

fn around(p: Point, half: i64) -> Rect {
    Rect::new(p.x - half, p.y - half, p.x + half + 1, p.y + half + 1)
}

/// True when some interior row or column is uniform and differs from both
/// of its neighbours.
pub fn has_separator(r: &Raster) -> bool {
    let (w, h) = (r.width(), r.height());
    let column = |x: u32| -> Option<Rgb> {
        let c = r.get(x, 0);
        (0..h).all(|y| r.get(x, y) == c).then_some(c)
    };
    let row = |y: u32| -> Option<Rgb> {
        let c = r.get(0, y);
        (0..w).all(|x| r.get(x, y) == c).then_some(c)
    };
    let isolated = |line: &dyn Fn(u32) -> Option<Rgb>, extent: u32| {
        (1..extent.saturating_sub(1)).any(|i| match line(i) {
            Some(c) => line(i - 1) != Some(c) && line(i + 1) != Some(c),
            None => false,
        })
    };
    isolated(&column, w) || isolated(&row, h)
}

/// Largest vertical distance between a target-colored pixel and the row
/// holding most reference-colored pixels.
pub fn max_target_deviation(r: &Raster, target: Rgb) -> Option<u32> {
    let reference_row = (0..r.height())
        .map(|y| (y, (0..r.width()).filter(|&x| r.get(x, y) == REFERENCE_COLOR).count()))
        .filter(|&(_, n)| n > 0)
        .max_by_key(|&(y, n)| (n, std::cmp::Reverse(y)))?
        .0;
    Some(
        (0..r.height())
            .filter(|&y| (0..r.width()).any(|x| r.get(x, y) == target))
            .map(|y| y.abs_diff(reference_row))
            .max()
            .unwrap_or(0),
    )
}

/// Whether the two halves of a comparison image are pixel-identical.
fn halves_match(composite: &Raster, half_width: u32) -> bool {
    let offset = half_width + crate::tools::ops::SEPARATOR_WIDTH;
    (0..composite.height()).all(|y| (0..half_width).all(|x| composite.get(x, y) == composite.get(x + offset, y)))
}

impl ScriptedPolicy {
    pub fn new(kind: PolicyKind, task: TaskKind, probes: Option<Probes>) -> Result<Self, BackendError> {
        let needs_probes = match kind {
            PolicyKind::Oracle => true,
            PolicyKind::AlwaysPositive => task == TaskKind::TaskII,
            PolicyKind::NeverFinalize => false,
        };
        if needs_probes && probes.is_none() {
            return Err(BackendError::config(format!(
                "{} policy on {task} needs probe metadata",
                kind.as_str()
            )));
        }
        Ok(ScriptedPolicy { kind, task, probes })
    }

    fn probes(&self) -> &Probes {
        self.probes.as_ref().expect("checked in constructor")
    }

    /// Affirming and denying answers. Task I is always Yes/No; Task II
    /// options are permuted per sample, so the sidecar says which is which.
    fn answers(&self) -> (AnswerToken, AnswerToken) {
        match (self.task, &self.probes) {
            (TaskKind::TaskII, Some(p)) => (p.affirming(), p.denying()),
            _ => (AnswerToken::Yes, AnswerToken::No),
        }
    }

    fn finish(&self, answer: AnswerToken, rationale: &str) -> ModelReply {
        ModelReply::Final {
            raw_text: final_text(self.task, answer, rationale),
        }
    }

    fn oracle(&self, p: &Progress<'_>) -> ModelReply {
        let probes = self.probes();
        let (affirm, deny) = self.answers();
        match probes {
            Probes::ContrastPair { points, .. } if self.task == TaskKind::TaskII => {
                let hexes: Vec<Rgb> = p.tool_messages.iter().filter_map(|m| sampled_hex(&m.text)).collect();
                if p.rounds < 2 && hexes.len() == p.rounds {
                    let pt = points[p.rounds];
                    return calls(
                        p.rounds,
                        vec![(ToolName::SampleColor, json!({ "source": "original", "x": pt.x, "y": pt.y, "window": 1 }))],
                    );
                }
                match hexes.as_slice() {
                    [a, b, ..] if a == b => self.finish(affirm, &format!("both patches sample to {a}; the colors are identical")),
                    [a, b, ..] => self.finish(deny, &format!("colors genuinely differ ({a} vs {b})")),
                    _ => self.finish(deny, "could not sample both patches"),
                }
            }
            Probes::ContrastPair { points, .. } => {
                if p.rounds == 0 {
                    let (a, b) = (around(points[0], 1), around(points[1], 1));
                    let args = json!({
                        "source_a": "original", "a_x0": a.x0, "a_y0": a.y0, "a_x1": a.x1, "a_y1": a.y1,
                        "source_b": "original", "b_x0": b.x0, "b_y0": b.y0, "b_x1": b.x1, "b_y1": b.y1,
                    });
                    return calls(0, vec![(ToolName::CompareCrops, args)]);
                }
                match decoded_images(&p.tool_messages).first() {
                    Some(img) if halves_match(img, 3) => self.finish(affirm, "the two patches are pixel-identical"),
                    Some(_) => self.finish(deny, "the two patches genuinely differ"),
                    None => self.finish(deny, "comparison unavailable"),
                }
            }
            Probes::BandStack { interfaces, .. } => {
                if p.rounds == 0 {
                    let specs = interfaces
                        .iter()
                        .map(|r| (ToolName::Crop, rect_args("original", *r)))
                        .collect();
                    return calls(0, specs);
                }
                let crops = decoded_images(&p.tool_messages);
                if crops.iter().any(has_separator) {
                    self.finish(deny, "a separator line sits between two bands")
                } else {
                    self.finish(affirm, "every interface is a direct step between flat bands")
                }
            }
            Probes::ReferenceLine {
                from,
                to,
                region,
                target_color,
                ..
            } => match p.rounds {
                0 => calls(
                    0,
                    vec![(
                        ToolName::DrawLine,
                        json!({
                            "source": "original",
                            "x0": from.x, "y0": from.y, "x1": to.x, "y1": to.y,
                            "color": REFERENCE_COLOR.to_hex(),
                            "thickness": 1,
                        }),
                    )],
                ),
                1 => {
                    let source = p
                        .tool_messages
                        .last()
                        .and_then(|m| created_id(&m.text))
                        .unwrap_or_else(|| "original".to_string());
                    calls(1, vec![(ToolName::Crop, rect_args(&source, *region))])
                }
                _ => {
                    let deviation = decoded_images(&p.tool_messages)
                        .last()
                        .and_then(|img| max_target_deviation(img, *target_color));
                    match deviation {
                        Some(0) => self.finish(affirm, "the line coincides with the straight reference everywhere"),
                        Some(d) => self.finish(deny, &format!("the line departs from the straight reference by {d} px")),
                        None => self.finish(deny, "reference line not found"),
                    }
                }
            },
        }
    }
}

impl ModelBackend for ScriptedPolicy {
    fn generate(&self, history: &[Message], _tools: &[Value], _settings: &GenerationSettings) -> Result<ModelReply, BackendError> {
        let p = progress(history);
        let reply = match self.kind {
            PolicyKind::AlwaysPositive => self.finish(self.answers().0, "the illusion is genuine"),
            PolicyKind::NeverFinalize => calls(
                p.rounds,
                vec![(ToolName::Crop, json!({ "source": "original", "x0": 0, "y0": 0, "x1": 8, "y1": 8 }))],
            ),
            PolicyKind::Oracle => self.oracle(&p),
        };
        if let ModelReply::ToolCalls { calls, .. } = &reply {
            let subset = tool_subset(self.task);
            debug_assert!(calls
                .iter()
                .all(|c| subset.iter().any(|t| t.as_str() == c.tool_name)));
        }
        Ok(reply)
    }
}
