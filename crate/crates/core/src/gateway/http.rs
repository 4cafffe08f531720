use std::collections::HashMap;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, CacheKey, CompletionRequest};

const SAFETY_CATEGORIES: [&str; 5] = [
    "HARM_CATEGORY_HARASSMENT",
    "HARM_CATEGORY_HATE_SPEECH",
    "HARM_CATEGORY_SEXUALLY_EXPLICIT",
    "HARM_CATEGORY_DANGEROUS_CONTENT",
    "HARM_CATEGORY_CIVIC_INTEGRITY",
];

/// Environment variable holding the key for `provider_id`, e.g.
/// `openai` -> `OPENAI_API_KEY`.
pub fn credential_var(provider_id: &str) -> String {
    let stem: String = provider_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("{stem}_API_KEY")
}

/// JSON body for a chat-completions request.
pub fn request_body(req: &CompletionRequest) -> Value {
    let profile = &req.profile;
    let mut body = json!({
        "model": profile.model_name,
        "messages": [{"role": "user", "content": req.prompt}],
    });
    let obj = body.as_object_mut().unwrap();
    if profile.capabilities.reasoning {
        if let Some(effort) = req.reasoning_effort {
            obj.insert("reasoning_effort".into(), json!(effort.to_string()));
        }
        obj.insert("max_completion_tokens".into(), json!(profile.max_output_tokens));
    } else {
        obj.insert("temperature".into(), json!(req.temperature));
        obj.insert("top_p".into(), json!(req.top_p));
        obj.insert("max_tokens".into(), json!(profile.max_output_tokens));
    }
    if profile.capabilities.safety_settings {
        let settings: Vec<Value> = SAFETY_CATEGORIES
            .iter()
            .map(|c| json!({"category": c, "threshold": "BLOCK_NONE"}))
            .collect();
        obj.insert("safety_settings".into(), Value::Array(settings));
    }
    body
}

fn classify(status: u16, body: String) -> BackendError {
    match status {
        401 | 403 => BackendError::Auth(body),
        408 | 429 | 500..=599 => BackendError::Transient {
            status: Some(status),
            message: body,
        },
        _ => BackendError::Fatal { status, body },
    }
}

/// Blocking chat-completions client.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    keys: HashMap<String, String>,
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Other(e.to_string()))?;
        Ok(Self {
            client,
            keys: HashMap::new(),
        })
    }

    /// Uses `key` for `provider_id` instead of reading the environment.
    pub fn with_key(mut self, provider_id: impl Into<String>, key: impl Into<String>) -> Self {
        self.keys.insert(provider_id.into(), key.into());
        self
    }

    fn key_for(&self, provider_id: &str) -> Result<String, BackendError> {
        if let Some(k) = self.keys.get(provider_id) {
            return Ok(k.clone());
        }
        let var = credential_var(provider_id);
        std::env::var(&var).map_err(|_| BackendError::Auth(format!("{var} is not set")))
    }
}

impl Backend for HttpBackend {
    fn send(&self, req: &CompletionRequest, _key: &CacheKey) -> Result<String, BackendError> {
        let api_key = self.key_for(&req.profile.provider_id)?;
        let url = format!("{}/chat/completions", req.profile.base_url.trim_end_matches('/'));
        let response = self
            .client
            .post(&url)
            .bearer_auth(api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(request_body(req).to_string())
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() || e.is_request() {
                    BackendError::Transient {
                        status: None,
                        message: e.to_string(),
                    }
                } else {
                    BackendError::Other(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| BackendError::Transient {
            status: Some(status),
            message: e.to_string(),
        })?;
        if (200..300).contains(&status) {
            Ok(body)
        } else {
            Err(classify(status, body))
        }
    }
}
