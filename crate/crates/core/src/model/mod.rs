//! Conversation backends behind a single `generate` contract.
//!
//! Three implementations ship: [`live::LiveBackend`] talks to a
//! chat-completions endpoint with function calling, [`scripted::ScriptedPolicy`]
//! is a deterministic offline policy for tests, and [`replay`] records and
//! replays conversations.

pub mod live;
pub mod replay;
pub mod scripted;

use std::collections::HashMap;
use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::hex;
use crate::registry::ResourceId;
use crate::routing::TaskKind;
use crate::stimulus::Probes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A registry resource attached to a message as PNG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAttachment {
    pub id: ResourceId,
    #[serde(with = "b64")]
    pub png: Vec<u8>,
}

mod b64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub call_id: String,
    pub tool_name: String,
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageAttachment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result_for: Option<String>,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            text: text.into(),
            images: Vec::new(),
            tool_calls: Vec::new(),
            tool_result_for: None,
        }
    }

    pub fn user(text: impl Into<String>, images: Vec<ImageAttachment>) -> Self {
        Message {
            role: Role::User,
            images,
            ..Message::system(text)
        }
    }

    pub fn assistant(text: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Message {
            role: Role::Assistant,
            tool_calls,
            ..Message::system(text)
        }
    }

    pub fn tool(call_id: impl Into<String>, text: impl Into<String>, images: Vec<ImageAttachment>) -> Self {
        Message {
            role: Role::Tool,
            images,
            tool_result_for: Some(call_id.into()),
            ..Message::system(text)
        }
    }
}

/// One model turn: either tool calls or a final answer text.
///
/// The final text is turned into a typed answer by the agent loop, which
/// knows the task's answer schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelReply {
    ToolCalls { calls: Vec<ToolCall>, raw_text: String },
    Final { raw_text: String },
}

impl ModelReply {
    pub fn raw_text(&self) -> &str {
        match self {
            ModelReply::ToolCalls { raw_text, .. } | ModelReply::Final { raw_text } => raw_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub model_name: String,
    pub max_output_tokens: u32,
    /// Model to switch to when the provider reports a quota error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_model_name: Option<String>,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            temperature: 0.0,
            model_name: "scripted".to_string(),
            max_output_tokens: 2048,
            fallback_model_name: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendError {
    /// Network or server failure; retried a bounded number of times.
    #[error("transport error: {message}")]
    Transport { message: String },
    /// Refusal, quota or authentication failure; never retried.
    #[error("quota/auth error: {message}")]
    Quota { message: String },
    #[error("malformed reply: {reason}")]
    Malformed { reason: String, raw_text: String },
    #[error("backend configuration: {message}")]
    Config { message: String },
    #[error("replay diverged at round {round}: recorded history {expected}, got {actual}")]
    Divergence {
        round: usize,
        expected: String,
        actual: String,
    },
    #[error("replay exhausted at round {round}")]
    ReplayExhausted { round: usize },
    #[error("i/o: {message}")]
    Io { message: String },
}

impl BackendError {
    pub fn config(message: impl Into<String>) -> Self {
        BackendError::Config {
            message: message.into(),
        }
    }
}

pub trait ModelBackend: Send + Sync {
    /// `history` starts with exactly one system message.
    fn generate(
        &self,
        history: &[Message],
        tools: &[Value],
        settings: &GenerationSettings,
    ) -> Result<ModelReply, BackendError>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for Arc<T> {
    fn generate(&self, history: &[Message], tools: &[Value], settings: &GenerationSettings) -> Result<ModelReply, BackendError> {
        (**self).generate(history, tools, settings)
    }
}

impl<T: ModelBackend + ?Sized> ModelBackend for Box<T> {
    fn generate(&self, history: &[Message], tools: &[Value], settings: &GenerationSettings) -> Result<ModelReply, BackendError> {
        (**self).generate(history, tools, settings)
    }
}

/// What a backend factory knows about the sample it serves.
#[derive(Debug, Clone)]
pub struct SampleContext {
    pub sample_id: String,
    pub task: TaskKind,
    pub probes: Option<Probes>,
}

/// Hands out one backend per sample. Samples may run on different threads.
pub trait BackendFactory: Send + Sync {
    fn backend_for(&self, sample: &SampleContext) -> Result<Box<dyn ModelBackend>, BackendError>;

    fn describe(&self) -> String;
}

/// Shares one backend across all samples.
pub struct SharedBackend(pub Arc<dyn ModelBackend>, pub String);

impl BackendFactory for SharedBackend {
    fn backend_for(&self, _: &SampleContext) -> Result<Box<dyn ModelBackend>, BackendError> {
        Ok(Box::new(Arc::clone(&self.0)))
    }

    fn describe(&self) -> String {
        self.1.clone()
    }
}

/// Scripted policies keyed by the probe sidecar.
pub struct ScriptedFactory {
    pub kind: scripted::PolicyKind,
    pub probes: HashMap<String, Probes>,
}

impl BackendFactory for ScriptedFactory {
    fn backend_for(&self, sample: &SampleContext) -> Result<Box<dyn ModelBackend>, BackendError> {
        let probes = sample
            .probes
            .clone()
            .or_else(|| self.probes.get(&sample.sample_id).cloned());
        Ok(Box::new(scripted::ScriptedPolicy::new(self.kind, sample.task, probes)?))
    }

    fn describe(&self) -> String {
        format!("scripted:{}", self.kind.as_str())
    }
}

/// SHA-256 over the canonical JSON form of `history`, with each image
/// replaced by the hash of its PNG bytes.
pub fn history_hash(history: &[Message]) -> String {
    let mut hasher = Sha256::new();
    for m in history {
        let images: Vec<Value> = m
            .images
            .iter()
            .map(|img| {
                serde_json::json!({ "id": img.id, "sha256": hex(&Sha256::digest(&img.png)) })
            })
            .collect();
        let record = serde_json::json!({
            "role": m.role,
            "text": m.text,
            "images": images,
            "tool_calls": m.tool_calls,
            "tool_result_for": m.tool_result_for,
        });
        hasher.update(crate::registry::canonical_json(&record).as_bytes());
        hasher.update(b"\n");
    }
    hex(&hasher.finalize())
}

pub(crate) fn data_url(png: &[u8]) -> String {
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_hash_tracks_content() {
        let a = vec![Message::system("s"), Message::user("is it straight?", vec![])];
        let b = vec![Message::system("s"), Message::user("is it curved?", vec![])];
        assert_eq!(history_hash(&a), history_hash(&a.clone()));
        assert_ne!(history_hash(&a), history_hash(&b));
        let img = |byte| ImageAttachment {
            id: ResourceId::Original,
            png: vec![byte; 4],
        };
        let c = vec![Message::system("s"), Message::user("q", vec![img(1)])];
        let d = vec![Message::system("s"), Message::user("q", vec![img(2)])];
        assert_ne!(history_hash(&c), history_hash(&d));
    }

    #[test]
    fn reply_serde_round_trip() {
        let reply = ModelReply::ToolCalls {
            calls: vec![ToolCall {
                call_id: "c1".into(),
                tool_name: "crop".into(),
                arguments: serde_json::json!({"source": "original"}).as_object().unwrap().clone(),
            }],
            raw_text: String::new(),
        };
        let text = serde_json::to_string(&reply).unwrap();
        assert_eq!(serde_json::from_str::<ModelReply>(&text).unwrap(), reply);
    }
}
