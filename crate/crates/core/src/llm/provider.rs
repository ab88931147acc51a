use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::record::RefId;
use crate::store::ThinkingLevel;

/// Wire dialect of a chat-completion endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiFlavor {
    /// `POST {endpoint}` with an OpenAI-style `messages` body.
    OpenAi,
    /// `POST {endpoint}/models/{model}:generateContent`.
    Gemini,
}

impl FromStr for ApiFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "openai" => Ok(ApiFlavor::OpenAi),
            "gemini" => Ok(ApiFlavor::Gemini),
            other => Err(Error::Parameter(format!("unknown API flavor {other:?}"))),
        }
    }
}

/// One chat completion. `ref_id` is local bookkeeping and never sent.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub ref_id: Option<RefId>,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub thinking_level: ThinkingLevel,
    pub system: String,
    pub user: String,
}

impl ChatRequest {
    /// The exact JSON body transmitted for `flavor`.
    pub fn body_json(&self, flavor: ApiFlavor) -> Value {
        match flavor {
            ApiFlavor::OpenAi => json!({
                "model": self.model,
                "messages": [
                    {"role": "system", "content": self.system},
                    {"role": "user", "content": self.user},
                ],
                "temperature": self.temperature,
                "top_p": self.top_p,
                "reasoning_effort": self.thinking_level.as_str(),
                "response_format": {"type": "json_object"},
            }),
            ApiFlavor::Gemini => json!({
                "systemInstruction": {"parts": [{"text": self.system}]},
                "contents": [{"role": "user", "parts": [{"text": self.user}]}],
                "generationConfig": {
                    "temperature": self.temperature,
                    "topP": self.top_p,
                    "responseMimeType": "application/json",
                    "thinkingConfig": {"thinkingLevel": self.thinking_level.as_str()},
                },
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub thinking_tokens: u64,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse>;

    fn name(&self) -> String;
}

/// Connection settings for a live endpoint. The key itself lives in the
/// keystore under `api_key_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub flavor: ApiFlavor,
    pub api_key_ref: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub thinking_level: ThinkingLevel,
    pub requests_per_minute: u32,
    pub max_retries: u32,
}

impl ProviderConfig {
    pub fn gemini_default(model_name: &str) -> Self {
        ProviderConfig {
            endpoint: "https://generativelanguage.googleapis.com/v1beta".into(),
            flavor: ApiFlavor::Gemini,
            api_key_ref: "gemini".into(),
            model_name: model_name.into(),
            temperature: 1.0,
            top_p: 0.95,
            thinking_level: ThinkingLevel::Low,
            requests_per_minute: 10,
            max_retries: 3,
        }
    }
}

/// HTTP provider over `ureq`.
pub struct LiveProvider {
    agent: ureq::Agent,
    endpoint: String,
    flavor: ApiFlavor,
    api_key: String,
}

impl std::fmt::Debug for LiveProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveProvider")
            .field("endpoint", &self.endpoint)
            .field("flavor", &self.flavor)
            .finish_non_exhaustive()
    }
}

impl LiveProvider {
    pub fn new(endpoint: &str, flavor: ApiFlavor, api_key: String, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .user_agent(crate::CLIENT_VERSION)
            .build();
        LiveProvider {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.trim_end_matches('/').to_string(),
            flavor,
            api_key,
        }
    }

    fn post(&self, url: &str, auth: (&str, String), body: &Value) -> Result<Value> {
        let mut resp = self
            .agent
            .post(url)
            .header(auth.0, &auth.1)
            .send_json(body)
            .map_err(|e| Error::Provider(e.to_string()))?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| Error::Provider(format!("unreadable response: {e}")))
    }
}

fn count(v: &Value, path: &[&str]) -> u64 {
    path.iter()
        .try_fold(v, |v, k| v.get(k))
        .and_then(Value::as_u64)
        .unwrap_or(0)
}

impl ChatProvider for LiveProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let body = request.body_json(self.flavor);
        match self.flavor {
            ApiFlavor::OpenAi => {
                let v = self.post(
                    &self.endpoint,
                    ("Authorization", format!("Bearer {}", self.api_key)),
                    &body,
                )?;
                let text = v["choices"][0]["message"]["content"]
                    .as_str()
                    .ok_or_else(|| Error::Provider("response has no message content".into()))?;
                let thinking = count(&v, &["usage", "completion_tokens_details", "reasoning_tokens"]);
                Ok(ChatResponse {
                    text: text.to_string(),
                    input_tokens: count(&v, &["usage", "prompt_tokens"]),
                    output_tokens: count(&v, &["usage", "completion_tokens"]).saturating_sub(thinking),
                    thinking_tokens: thinking,
                })
            }
            ApiFlavor::Gemini => {
                let url = format!("{}/models/{}:generateContent", self.endpoint, request.model);
                let v = self.post(&url, ("x-goog-api-key", self.api_key.clone()), &body)?;
                let parts = v["candidates"][0]["content"]["parts"]
                    .as_array()
                    .ok_or_else(|| Error::Provider("response has no candidate content".into()))?;
                let text: String = parts
                    .iter()
                    .filter(|p| !p.get("thought").and_then(Value::as_bool).unwrap_or(false))
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect();
                Ok(ChatResponse {
                    text,
                    input_tokens: count(&v, &["usageMetadata", "promptTokenCount"]),
                    output_tokens: count(&v, &["usageMetadata", "candidatesTokenCount"]),
                    thinking_tokens: count(&v, &["usageMetadata", "thoughtsTokenCount"]),
                })
            }
        }
    }

    fn name(&self) -> String {
        format!("live:{}", self.endpoint)
    }
}

/// Scripted reply for one record in a mock fixture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedResponse {
    pub probability: Option<f64>,
    pub reasons: Vec<String>,
    pub evidence: Vec<Value>,
    /// Sent verbatim instead of a rendered JSON object.
    pub raw: Option<String>,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
    pub thinking_tokens: u64,
    /// Number of leading attempts that fail with a transport error.
    pub fail_times: u32,
    /// Fail every attempt with this message.
    pub error: Option<String>,
    /// Simulated response latency.
    pub latency_ms: u64,
}

/// Fixture for [`MockProvider`]: `responses` is keyed by ref_id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockFixture {
    pub responses: HashMap<String, ScriptedResponse>,
    pub default: Option<ScriptedResponse>,
    /// Reply to criteria-refinement requests.
    pub prompt_generation: Option<String>,
}

impl MockFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_probabilities(probabilities: impl IntoIterator<Item = (RefId, f64)>) -> Self {
        MockFixture {
            responses: probabilities
                .into_iter()
                .map(|(id, p)| {
                    (
                        id.0.to_string(),
                        ScriptedResponse {
                            probability: Some(p),
                            ..Default::default()
                        },
                    )
                })
                .collect(),
            ..Default::default()
        }
    }
}

/// A request as the mock received it.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedRequest {
    pub ref_id: Option<RefId>,
    pub body: String,
}

/// Deterministic offline provider driven by a [`MockFixture`]. Records every
/// request body it receives.
#[derive(Debug, Default)]
pub struct MockProvider {
    fixture: MockFixture,
    attempts: Mutex<HashMap<Option<RefId>, u32>>,
    captured: Mutex<Vec<CapturedRequest>>,
}

impl MockProvider {
    pub fn new(fixture: MockFixture) -> Self {
        MockProvider {
            fixture,
            ..Default::default()
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(MockFixture::from_json(&std::fs::read_to_string(path)?)?))
    }

    pub fn captured(&self) -> Vec<CapturedRequest> {
        self.captured.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn request_count(&self) -> usize {
        self.captured.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    fn script_for(&self, ref_id: RefId) -> Option<&ScriptedResponse> {
        self.fixture
            .responses
            .iter()
            .find(|(k, _)| k.trim().parse::<u64>().ok() == Some(ref_id.0))
            .map(|(_, v)| v)
            .or(self.fixture.default.as_ref())
    }
}

fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl ChatProvider for MockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let body = request.body_json(ApiFlavor::OpenAi).to_string();
        self.captured
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(CapturedRequest {
                ref_id: request.ref_id,
                body,
            });
        let attempt = {
            let mut attempts = self.attempts.lock().unwrap_or_else(|e| e.into_inner());
            let n = attempts.entry(request.ref_id).or_insert(0);
            *n += 1;
            *n
        };
        let input_estimate = approx_tokens(&request.system) + approx_tokens(&request.user);
        let Some(ref_id) = request.ref_id else {
            let text = self
                .fixture
                .prompt_generation
                .clone()
                .ok_or_else(|| Error::Provider("mock has no prompt_generation reply".into()))?;
            return Ok(ChatResponse {
                output_tokens: approx_tokens(&text),
                text,
                input_tokens: input_estimate,
                thinking_tokens: 0,
            });
        };
        let script = self
            .script_for(ref_id)
            .ok_or_else(|| Error::Provider(format!("mock has no response for ref {ref_id}")))?;
        if script.latency_ms > 0 {
            std::thread::sleep(Duration::from_millis(script.latency_ms));
        }
        if let Some(message) = &script.error {
            return Err(Error::Provider(message.clone()));
        }
        if attempt <= script.fail_times {
            return Err(Error::Provider(format!("scripted failure {attempt} for ref {ref_id}")));
        }
        let text = match (&script.raw, script.probability) {
            (Some(raw), _) => raw.clone(),
            (None, Some(p)) => json!({
                "probability": p,
                "reasons": script.reasons,
                "evidence": script.evidence,
            })
            .to_string(),
            (None, None) => return Err(Error::Provider(format!("mock script for ref {ref_id} is empty"))),
        };
        Ok(ChatResponse {
            input_tokens: script.input_tokens.unwrap_or(input_estimate),
            output_tokens: script.output_tokens.unwrap_or_else(|| approx_tokens(&text)),
            thinking_tokens: script.thinking_tokens,
            text,
        })
    }

    fn name(&self) -> String {
        "mock".into()
    }
}
