//! Chat-completions adapter with function calling.
//!
//! Speaks the common `/v1/chat/completions` shape. Images travel as PNG data
//! URLs; since tool messages cannot carry images in this shape, images
//! produced by tools are re-attached in a user message right after the run
//! of tool messages they belong to.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{data_url, BackendError, GenerationSettings, Message, ModelBackend, ModelReply, Role, ToolCall};
use crate::raster::Raster;

static NETWORK_ATTEMPTS: AtomicU64 = AtomicU64::new(0);

/// HTTP requests attempted by live backends in this process.
pub fn network_attempts() -> u64 {
    NETWORK_ATTEMPTS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub verbose: bool,
    /// Downscale images whose longer edge exceeds this. Off by default.
    pub max_image_edge: Option<u32>,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            verbose: false,
            max_image_edge: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::config(format!("environment variable {} is not set", config.api_key_env)))?;
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: LiveConfig, api_key: String) -> Result<Self, BackendError> {
        if config.max_attempts == 0 {
            return Err(BackendError::config("max_attempts must be at least 1"));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::config(e.to_string()))?;
        Ok(LiveBackend { config, api_key, client })
    }

    fn send_once(&self, body: &Value) -> Result<String, BackendError> {
        NETWORK_ATTEMPTS.fetch_add(1, Ordering::SeqCst);
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| BackendError::Transport {
                message: e.without_url().to_string(),
            })?;
        let status = response.status();
        let text = response.text().map_err(|e| BackendError::Transport {
            message: e.without_url().to_string(),
        })?;
        if self.config.verbose {
            tracing::debug!(status = status.as_u16(), body = %text, "chat response");
        }
        match status.as_u16() {
            200..=299 => Ok(text),
            401 | 403 | 429 => Err(BackendError::Quota {
                message: format!("HTTP {status}: {}", truncate(&text, 300)),
            }),
            500..=599 => Err(BackendError::Transport {
                message: format!("HTTP {status}: {}", truncate(&text, 300)),
            }),
            _ => Err(BackendError::Malformed {
                reason: format!("HTTP {status}"),
                raw_text: text,
            }),
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl ModelBackend for LiveBackend {
    fn generate(&self, history: &[Message], tools: &[Value], settings: &GenerationSettings) -> Result<ModelReply, BackendError> {
        let body = build_request(history, tools, settings, self.config.max_image_edge)?;
        if self.config.verbose {
            tracing::debug!(body = %elide_images(&body), "chat request");
        }
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok(text) => return parse_chat_response(&text),
                Err(BackendError::Transport { message }) if attempt + 1 < self.config.max_attempts => {
                    let delay = self.config.backoff_base * 2u32.pow(attempt);
                    tracing::warn!(attempt = attempt + 1, %message, ?delay, "transport error, retrying");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn image_part(png: &[u8], max_edge: Option<u32>) -> Result<Value, BackendError> {
    let url = match max_edge {
        Some(edge) => data_url(&downscale(png, edge)?),
        None => data_url(png),
    };
    Ok(json!({ "type": "image_url", "image_url": { "url": url } }))
}

fn downscale(png: &[u8], edge: u32) -> Result<Vec<u8>, BackendError> {
    let raster = Raster::decode(png).map_err(|e| BackendError::config(e.to_string()))?;
    let longest = raster.width().max(raster.height());
    if longest <= edge || edge == 0 {
        return Ok(png.to_vec());
    }
    let scale = |d: u32| ((u64::from(d) * u64::from(edge)) / u64::from(longest)).max(1) as u32;
    let img = image::RgbImage::from_raw(raster.width(), raster.height(), raster.as_bytes()).expect("sizes match");
    let small = image::imageops::resize(
        &img,
        scale(raster.width()),
        scale(raster.height()),
        image::imageops::FilterType::Triangle,
    );
    Raster::from_image(small)
        .and_then(|r| r.to_png())
        .map_err(|e| BackendError::config(e.to_string()))
}

/// The request body for one chat-completions call.
pub fn build_request(
    history: &[Message],
    tools: &[Value],
    settings: &GenerationSettings,
    max_image_edge: Option<u32>,
) -> Result<Value, BackendError> {
    if settings.temperature < 0.0 || !settings.temperature.is_finite() {
        return Err(BackendError::config("temperature must be >= 0"));
    }
    let mut messages = Vec::new();
    let mut pending_images = Vec::new();
    let flush = |messages: &mut Vec<Value>, pending: &mut Vec<Value>| {
        if !pending.is_empty() {
            let mut content = vec![json!({ "type": "text", "text": "Images produced by the tool calls above:" })];
            content.append(pending);
            messages.push(json!({ "role": "user", "content": content }));
        }
    };
    for m in history {
        if m.role != Role::Tool {
            flush(&mut messages, &mut pending_images);
        }
        match m.role {
            Role::System => messages.push(json!({ "role": "system", "content": m.text })),
            Role::User => {
                let mut content = vec![json!({ "type": "text", "text": m.text })];
                for img in &m.images {
                    content.push(json!({ "type": "text", "text": format!("[{}]", img.id) }));
                    content.push(image_part(&img.png, max_image_edge)?);
                }
                messages.push(json!({ "role": "user", "content": content }));
            }
            Role::Assistant => {
                let mut msg = json!({ "role": "assistant", "content": m.text });
                if !m.tool_calls.is_empty() {
                    let calls: Vec<Value> = m
                        .tool_calls
                        .iter()
                        .map(|c| {
                            json!({
                                "id": c.call_id,
                                "type": "function",
                                "function": {
                                    "name": c.tool_name,
                                    "arguments": Value::Object(c.arguments.clone()).to_string(),
                                },
                            })
                        })
                        .collect();
                    msg["tool_calls"] = Value::Array(calls);
                }
                messages.push(msg);
            }
            Role::Tool => {
                let call_id = m
                    .tool_result_for
                    .clone()
                    .ok_or_else(|| BackendError::config("tool message without call id"))?;
                messages.push(json!({ "role": "tool", "tool_call_id": call_id, "content": m.text }));
                for img in &m.images {
                    pending_images.push(json!({ "type": "text", "text": format!("[{}]", img.id) }));
                    pending_images.push(image_part(&img.png, max_image_edge)?);
                }
            }
        }
    }
    flush(&mut messages, &mut pending_images);
    let tools: Vec<Value> = tools
        .iter()
        .map(|schema| json!({ "type": "function", "function": schema }))
        .collect();
    let mut body = json!({
        "model": settings.model_name,
        "messages": messages,
        "temperature": settings.temperature,
        "max_tokens": settings.max_output_tokens,
    });
    if !tools.is_empty() {
        body["tools"] = Value::Array(tools);
    }
    Ok(body)
}

fn elide_images(body: &Value) -> Value {
    match body {
        Value::String(s) if s.starts_with("data:image/") => Value::String(format!("<image {} chars>", s.len())),
        Value::Array(items) => Value::Array(items.iter().map(elide_images).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), elide_images(v))).collect()),
        other => other.clone(),
    }
}

fn malformed(reason: impl Into<String>, raw: &str) -> BackendError {
    BackendError::Malformed {
        reason: reason.into(),
        raw_text: raw.to_string(),
    }
}

/// Maps a provider response body to a reply. Never panics.
pub fn parse_chat_response(body: &str) -> Result<ModelReply, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| malformed(format!("invalid JSON: {e}"), body))?;
    if let Some(err) = v.get("error").filter(|e| !e.is_null()) {
        return Err(malformed(format!("provider error: {err}"), body));
    }
    let choice = v
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| malformed("no choices", body))?;
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Err(BackendError::Quota {
            message: "provider refused (content filter)".into(),
        });
    }
    let message = choice.get("message").ok_or_else(|| malformed("choice without message", body))?;
    if let Some(refusal) = message.get("refusal").and_then(Value::as_str) {
        return Err(BackendError::Quota {
            message: format!("provider refused: {refusal}"),
        });
    }
    let text = match message.get("content") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(parts)) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        Some(_) => return Err(malformed("content is neither text nor parts", body)),
    };
    let raw_calls = match message.get("tool_calls") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(calls)) => calls.clone(),
        Some(_) => return Err(malformed("tool_calls is not a list", body)),
    };
    if raw_calls.is_empty() {
        if text.trim().is_empty() {
            return Err(malformed("reply has neither tool calls nor text", body));
        }
        return Ok(ModelReply::Final { raw_text: text });
    }
    let mut calls = Vec::with_capacity(raw_calls.len());
    for (i, call) in raw_calls.iter().enumerate() {
        let function = call
            .get("function")
            .ok_or_else(|| malformed(format!("tool call {i} has no function"), body))?;
        let name = function
            .get("name")
            .and_then(Value::as_str)
            .filter(|n| !n.is_empty())
            .ok_or_else(|| malformed(format!("tool call {i} has no name"), body))?;
        let arguments = match function.get("arguments") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::String(s)) if s.trim().is_empty() => Map::new(),
            Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
                Ok(Value::Object(m)) => m,
                _ => return Err(malformed(format!("tool call {i} arguments are not a JSON object"), body)),
            },
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(malformed(format!("tool call {i} arguments are not an object"), body)),
        };
        let call_id = call
            .get("id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("call_{}", i + 1));
        calls.push(ToolCall {
            call_id,
            tool_name: name.to_string(),
            arguments,
        });
    }
    Ok(ModelReply::ToolCalls { calls, raw_text: text })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tool_calls() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":null,
            "tool_calls":[{"id":"abc","type":"function","function":{"name":"crop","arguments":"{\"source\":\"original\",\"x0\":1}"}}]}}]}"#;
        let ModelReply::ToolCalls { calls, .. } = parse_chat_response(body).unwrap() else {
            panic!("expected tool calls")
        };
        assert_eq!(calls[0].call_id, "abc");
        assert_eq!(calls[0].tool_name, "crop");
        assert_eq!(calls[0].arguments["x0"], 1);
    }

    #[test]
    fn parses_final_text() {
        let body = r#"{"choices":[{"message":{"content":"answer: No"}}]}"#;
        assert_eq!(
            parse_chat_response(body).unwrap(),
            ModelReply::Final {
                raw_text: "answer: No".into()
            }
        );
    }

    #[test]
    fn rejects_empty_and_bad_arguments() {
        for body in [
            r#"{"choices":[{"message":{"content":""}}]}"#,
            r#"{"choices":[]}"#,
            r#"{"choices":[{"message":{"tool_calls":[{"function":{"name":"crop","arguments":"[1]"}}]}}]}"#,
            "not json",
        ] {
            assert!(matches!(parse_chat_response(body), Err(BackendError::Malformed { .. })), "{body}");
        }
    }

    #[test]
    fn tool_images_follow_tool_messages() {
        use crate::model::ImageAttachment;
        use crate::registry::ResourceId;
        let history = vec![
            Message::system("s"),
            Message::user("q", vec![]),
            Message::assistant(
                "",
                vec![ToolCall {
                    call_id: "c1".into(),
                    tool_name: "crop".into(),
                    arguments: Map::new(),
                }],
            ),
            Message::tool(
                "c1",
                "img_001: crop",
                vec![ImageAttachment {
                    id: ResourceId::Derived(1),
                    png: vec![1, 2, 3],
                }],
            ),
        ];
        let body = build_request(&history, &[], &GenerationSettings::default(), None).unwrap();
        let roles: Vec<&str> = body["messages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["role"].as_str().unwrap())
            .collect();
        assert_eq!(roles, ["system", "user", "assistant", "tool", "user"]);
        let logged = elide_images(&body).to_string();
        assert!(!logged.contains("base64"));
    }
}
