//! HTTP backends: an embedding client (`POST /embed`) and an
//! OpenAI-compatible chat client whose first message content is the raw
//! turn. API keys come from the environment variable named in the endpoint
//! config, never from flags or files. Both clients retry transient failures
//! up to the configured count.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use omnirag_core::embed::{DeterministicEmbedder, EmbedBackend, EmbedError};
use omnirag_core::episode::{PolicyBackend, PolicyError, ScriptedPolicy};

use crate::config::{ConfigError, HttpEndpoint};

fn build_agent(endpoint: &HttpEndpoint) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
        .build()
        .into()
}

/// POSTs `payload` and parses the JSON response, retrying up to
/// `endpoint.retries` additional attempts on any failure.
fn post_json(
    agent: &ureq::Agent,
    endpoint: &HttpEndpoint,
    api_key: Option<&str>,
    payload: &Value,
) -> Result<Value, String> {
    let mut last_err = String::new();
    for _ in 0..=endpoint.retries {
        let mut req = agent.post(&endpoint.url);
        if let Some(key) = api_key {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        match req.send_json(payload) {
            Ok(mut resp) => match resp.body_mut().read_json::<Value>() {
                Ok(v) => return Ok(v),
                Err(e) => last_err = format!("malformed response body: {e}"),
            },
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(last_err)
}

// ---------------------------------------------------------------------------
// Embedding client
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    inputs: Vec<&'a str>,
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Embedding service client. Vectors are L2-normalized on receipt so the
/// unit-norm invariant holds regardless of what the service returns.
pub struct HttpEmbedBackend {
    id: String,
    endpoint: HttpEndpoint,
    api_key: Option<String>,
    dimension: usize,
    agent: ureq::Agent,
}

impl HttpEmbedBackend {
    pub fn new(endpoint: HttpEndpoint, dimension: usize) -> Result<Self, ConfigError> {
        let api_key = endpoint.api_key()?;
        Ok(HttpEmbedBackend {
            id: format!("http:{}:{}", endpoint.url, endpoint.model),
            agent: build_agent(&endpoint),
            endpoint,
            api_key,
            dimension,
        })
    }

    fn embed_one(&self, input: &str) -> Result<Vec<f32>, EmbedError> {
        let payload = serde_json::to_value(EmbedRequest {
            model: &self.endpoint.model,
            inputs: vec![input],
        })
        .expect("embed request serializes");
        let body = post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &payload)
            .map_err(|detail| EmbedError::BackendUnavailable { detail })?;
        let parsed: EmbedResponse = serde_json::from_value(body)
            .map_err(|e| EmbedError::BackendUnavailable { detail: format!("bad schema: {e}") })?;
        let row = parsed
            .vectors
            .into_iter()
            .next()
            .ok_or_else(|| EmbedError::BackendUnavailable { detail: "empty vectors".into() })?;
        if row.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch { expected: self.dimension, got: row.len() });
        }
        let norm = row.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(EmbedError::BackendUnavailable {
                detail: format!("non-normalizable vector (norm {norm})"),
            });
        }
        Ok(row.into_iter().map(|x| (x as f64 / norm) as f32).collect())
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        self.embed_one(text)
    }

    fn embed_image(&self, asset_path: &str) -> Result<Vec<f32>, EmbedError> {
        // Images are referenced by path; the service resolves the content.
        self.embed_one(asset_path)
    }
}

/// Static dispatch over the two embedding backends the CLI can run with.
pub enum AnyEmbedBackend {
    Deterministic(DeterministicEmbedder),
    Http(HttpEmbedBackend),
}

impl EmbedBackend for AnyEmbedBackend {
    fn backend_id(&self) -> &str {
        match self {
            AnyEmbedBackend::Deterministic(b) => b.backend_id(),
            AnyEmbedBackend::Http(b) => b.backend_id(),
        }
    }

    fn dimension(&self) -> usize {
        match self {
            AnyEmbedBackend::Deterministic(b) => b.dimension(),
            AnyEmbedBackend::Http(b) => b.dimension(),
        }
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        match self {
            AnyEmbedBackend::Deterministic(b) => b.embed_text(text),
            AnyEmbedBackend::Http(b) => b.embed_text(text),
        }
    }

    fn embed_image(&self, asset_path: &str) -> Result<Vec<f32>, EmbedError> {
        match self {
            AnyEmbedBackend::Deterministic(b) => b.embed_image(asset_path),
            AnyEmbedBackend::Http(b) => b.embed_image(asset_path),
        }
    }
}

// ---------------------------------------------------------------------------
// Chat client
// ---------------------------------------------------------------------------

/// Chat-completions policy: the rendered context goes out as a single user
/// message; the first choice's message content comes back as the raw turn.
pub struct HttpChatPolicy {
    endpoint: HttpEndpoint,
    api_key: Option<String>,
    temperature: f64,
    max_tokens: usize,
    agent: ureq::Agent,
}

impl HttpChatPolicy {
    pub fn new(
        endpoint: HttpEndpoint,
        temperature: f64,
        max_tokens: usize,
    ) -> Result<Self, ConfigError> {
        let api_key = endpoint.api_key()?;
        Ok(HttpChatPolicy {
            agent: build_agent(&endpoint),
            api_key,
            endpoint,
            temperature,
            max_tokens,
        })
    }
}

impl PolicyBackend for HttpChatPolicy {
    fn complete(&mut self, context: &str) -> Result<String, PolicyError> {
        let payload = serde_json::json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": context}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        });
        let body = post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &payload)
            .map_err(|detail| PolicyError { detail })?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| PolicyError {
                detail: "response carries no choices[0].message.content".into(),
            })
    }
}

/// Static dispatch over the policy backends the CLI can run with.
pub enum AnyPolicy {
    Scripted(ScriptedPolicy),
    Chat(HttpChatPolicy),
}

impl PolicyBackend for AnyPolicy {
    fn complete(&mut self, context: &str) -> Result<String, PolicyError> {
        match self {
            AnyPolicy::Scripted(p) => p.complete(context),
            AnyPolicy::Chat(p) => p.complete(context),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serves `body` as a JSON 200 for `hits` requests on a fresh local port,
    /// returning the endpoint URL. Captures each request's payload.
    fn canned_server(body: String, hits: usize) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for _ in 0..hits {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = vec![0u8; 65536];
                let mut total = 0;
                // Read until the JSON payload is complete (headers + body),
                // accepting either content-length or chunked framing.
                let payload = loop {
                    let n = stream.read(&mut buf[total..]).unwrap();
                    total += n;
                    let text = String::from_utf8_lossy(&buf[..total]).into_owned();
                    if let Some(split) = text.find("\r\n\r\n") {
                        let headers = text[..split].to_ascii_lowercase();
                        let body = &text[split + 4..];
                        if headers.contains("transfer-encoding: chunked") {
                            if body.ends_with("0\r\n\r\n") {
                                // Strip the chunk-size framing lines.
                                break body
                                    .split("\r\n")
                                    .skip(1)
                                    .step_by(2)
                                    .collect::<String>();
                            }
                        } else {
                            let content_len = headers
                                .lines()
                                .find_map(|l| {
                                    l.strip_prefix("content-length:")
                                        .map(|v| v.trim().parse::<usize>().unwrap())
                                })
                                .unwrap_or(0);
                            if body.len() >= content_len {
                                break body.to_string();
                            }
                        }
                    }
                    if n == 0 {
                        break String::new();
                    }
                };
                seen.push(payload);
                let resp = format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
            seen
        });
        (url, handle)
    }

    #[test]
    fn embed_backend_normalizes_and_checks_dimension() {
        let (url, handle) = canned_server("{\"vectors\": [[3.0, 4.0]]}".to_string(), 1);
        let backend = HttpEmbedBackend::new(HttpEndpoint::new(url, "clip"), 2).unwrap();
        let v = backend.embed_text("a query").unwrap();
        assert_eq!(v, vec![0.6, 0.8]);
        let seen = handle.join().unwrap();
        let payload: Value = serde_json::from_str(&seen[0]).unwrap();
        assert_eq!(payload["model"], "clip");
        assert_eq!(payload["inputs"][0], "a query");
    }

    #[test]
    fn embed_backend_rejects_wrong_dimension() {
        let (url, handle) = canned_server("{\"vectors\": [[1.0, 0.0, 0.0]]}".to_string(), 1);
        let backend = HttpEmbedBackend::new(HttpEndpoint::new(url, "clip"), 2).unwrap();
        assert_eq!(
            backend.embed_text("q").unwrap_err(),
            EmbedError::DimensionMismatch { expected: 2, got: 3 }
        );
        handle.join().unwrap();
    }

    #[test]
    fn chat_policy_extracts_first_choice_content() {
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "<think>x</think><answer>B</answer>"}}]
        })
        .to_string();
        let (url, handle) = canned_server(body, 1);
        let mut policy =
            HttpChatPolicy::new(HttpEndpoint::new(url, "omni"), 0.2, 512).unwrap();
        let raw = policy.complete("context").unwrap();
        assert_eq!(raw, "<think>x</think><answer>B</answer>");
        let seen = handle.join().unwrap();
        let payload: Value = serde_json::from_str(&seen[0]).unwrap();
        assert_eq!(payload["temperature"], 0.2);
        assert_eq!(payload["max_tokens"], 512);
        assert_eq!(payload["messages"][0]["content"], "context");
    }

    #[test]
    fn unreachable_endpoint_reports_backend_unavailable() {
        let mut ep = HttpEndpoint::new("http://127.0.0.1:1/", "m");
        ep.retries = 0;
        ep.timeout_ms = 500;
        let backend = HttpEmbedBackend::new(ep, 2).unwrap();
        assert!(matches!(
            backend.embed_text("q"),
            Err(EmbedError::BackendUnavailable { .. })
        ));
    }
}
