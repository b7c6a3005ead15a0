// SPDX-License-Identifier: Apache-2.0

//! Chat-completions client for an external translator.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::prompt::render_system_prompt;
use super::{TranslateError, TranslationRequest, Translator};

#[derive(Clone)]
pub struct ServiceEndpoint {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl std::fmt::Debug for ServiceEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceEndpoint")
            .field("url", &self.url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ServiceEndpoint {
    /// Reads `LOOPBENCH_LLM_URL`, `LOOPBENCH_LLM_KEY` and `LOOPBENCH_LLM_MODEL`;
    /// `None` unless a URL is set.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        let url = std::env::var("LOOPBENCH_LLM_URL").ok().filter(|u| !u.is_empty())?;
        Some(ServiceEndpoint {
            url,
            api_key: std::env::var("LOOPBENCH_LLM_KEY").ok().filter(|k| !k.is_empty()),
            model: std::env::var("LOOPBENCH_LLM_MODEL").unwrap_or_else(|_| "default".into()),
            timeout,
        })
    }

    fn completions_url(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Counting gate bounding concurrent requests across clones.
#[derive(Clone)]
struct InFlight(Arc<(Mutex<usize>, Condvar)>, usize);

impl InFlight {
    fn acquire(&self) -> InFlightGuard {
        let (lock, cv) = &*self.0;
        let mut n = lock.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.1 {
            n = cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InFlightGuard(self.clone())
    }
}

struct InFlightGuard(InFlight);

impl Drop for InFlightGuard {
    fn drop(&mut self) {
        let (lock, cv) = &*(self.0).0;
        let mut n = lock.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        cv.notify_one();
    }
}

#[derive(Clone)]
pub struct ExternalTranslator {
    endpoint: ServiceEndpoint,
    temperature: f64,
    agent: ureq::Agent,
    gate: InFlight,
    last_exchange: Option<Value>,
}

impl ExternalTranslator {
    pub fn new(endpoint: ServiceEndpoint, temperature: f64, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        ExternalTranslator {
            endpoint,
            temperature,
            agent,
            gate: InFlight(Arc::new((Mutex::new(0), Condvar::new())), max_in_flight.max(1)),
            last_exchange: None,
        }
    }

    pub fn request_body(&self, req: &TranslationRequest) -> Value {
        let user = match &req.correction {
            Some(c) => c.instruction_text.clone(),
            None => req.source_text.clone(),
        };
        json!({
            "model": self.endpoint.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": render_system_prompt(&req.context_examples)},
                {"role": "user", "content": user},
            ],
        })
    }
}

/// First fenced code block of `text`, else the whole text, parsed as JSON.
pub fn decode_document(text: &str) -> Result<Value, TranslateError> {
    let fenced = text.find("```").and_then(|start| {
        let rest = &text[start + 3..];
        let body_start = rest.find('\n').map_or(0, |i| i + 1);
        let body = &rest[body_start..];
        body.find("```").map(|end| &body[..end])
    });
    let candidate = fenced.unwrap_or(text).trim();
    match serde_json::from_str::<Value>(candidate) {
        Ok(v) if v.is_object() => Ok(v),
        Ok(_) => Err(TranslateError::Decode("top-level value is not an object".into())),
        Err(e) => Err(TranslateError::Decode(e.to_string())),
    }
}

/// Extracts the assistant message from a chat-completions response body, or
/// treats the whole body as the message.
pub fn response_content(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v["choices"][0]["message"]["content"].as_str().map(str::to_string))
        .unwrap_or_else(|| body.to_string())
}

impl Translator for ExternalTranslator {
    fn id(&self) -> &str {
        "external"
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn translate(&mut self, req: &TranslationRequest) -> Result<Value, TranslateError> {
        let body = self.request_body(req);
        let _slot = self.gate.acquire();
        let mut call = self.agent.post(self.endpoint.completions_url());
        if let Some(key) = &self.endpoint.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let result = call.send_json(&body);
        let mut exchange = json!({
            "url": self.endpoint.completions_url(),
            "authorization": self.endpoint.api_key.as_ref().map(|_| "Bearer <redacted>"),
            "request": body,
        });
        let outcome = match result {
            Err(e) => Err(TranslateError::Transport(e.to_string())),
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                exchange["status"] = json!(status);
                exchange["response"] = json!(text);
                if (200..300).contains(&status) {
                    decode_document(&response_content(&text))
                } else {
                    Err(TranslateError::Transport(format!("HTTP {status}")))
                }
            }
        };
        self.last_exchange = Some(exchange);
        outcome
    }

    fn take_exchange(&mut self) -> Option<Value> {
        self.last_exchange.take()
    }
}
