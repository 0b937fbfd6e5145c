//! HTTP backend speaking the common chat-completions wire shape.
//!
//! Requests POST `{model, messages, temperature, max_tokens}` and replies
//! carry `choices[0].message.content` plus a `finish_reason`; a reason of
//! `"length"` marks the completion as truncated. Transient failures (socket
//! errors, 5xx) are retried with exponential backoff; authentication
//! failures are not.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatMessage, Completion, CompletionBackend, CompletionParams, GatewayError, TaskKind};

/// Connection settings for a remote completion endpoint.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Full URL of the completions route.
    pub endpoint: String,
    /// Model sent when the call's [`CompletionParams::model_id`] is empty.
    pub model_id: String,
    /// Environment variable holding the API token; `None` sends no auth header.
    pub auth_env: Option<String>,
    /// Header the token is sent in.
    pub auth_header: String,
    /// Prefix prepended to the token value.
    pub auth_prefix: String,
    /// Per-request timeout.
    pub timeout: Duration,
    /// Total attempts per call, counting the first.
    pub max_attempts: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model_id: String::new(),
            auth_env: None,
            auth_header: "Authorization".to_owned(),
            auth_prefix: "Bearer ".to_owned(),
            timeout: Duration::from_secs(120),
            max_attempts: 3,
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

#[derive(Debug, Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    content: String,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::TransportError {
                detail: e.to_string(),
            })?;
        Ok(RemoteBackend { config, client })
    }

    fn auth_value(&self) -> Result<Option<String>, GatewayError> {
        let Some(var) = &self.config.auth_env else {
            return Ok(None);
        };
        let token = std::env::var(var).map_err(|_| GatewayError::AuthError {
            detail: format!("environment variable {var} is not set"),
        })?;
        Ok(Some(format!("{}{token}", self.config.auth_prefix)))
    }

    fn send_once(
        &self,
        body: &serde_json::Value,
        auth: Option<&str>,
    ) -> Result<Completion, Attempt> {
        let mut request = self.client.post(&self.config.endpoint).json(body);
        if let Some(value) = auth {
            request = request.header(self.config.auth_header.as_str(), value);
        }
        let response = request.send().map_err(|e| {
            Attempt::Retry(GatewayError::TransportError {
                detail: e.to_string(),
            })
        })?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Attempt::Fatal(GatewayError::AuthError {
                detail: format!("endpoint returned {status}"),
            }));
        }
        if !status.is_success() {
            let error = GatewayError::TransportError {
                detail: format!("endpoint returned {status}"),
            };
            return Err(if status.is_server_error() {
                Attempt::Retry(error)
            } else {
                Attempt::Fatal(error)
            });
        }
        let reply: WireReply = response.json().map_err(|e| {
            Attempt::Fatal(GatewayError::TransportError {
                detail: format!("malformed reply: {e}"),
            })
        })?;
        let choice = reply.choices.into_iter().next().ok_or_else(|| {
            Attempt::Fatal(GatewayError::TransportError {
                detail: "reply carries no choices".to_owned(),
            })
        })?;
        Ok(Completion {
            text: choice.message.content,
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }
}

enum Attempt {
    Retry(GatewayError),
    Fatal(GatewayError),
}

impl CompletionBackend for RemoteBackend {
    fn complete(
        &self,
        _task: TaskKind,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<Completion, GatewayError> {
        let auth = self.auth_value()?;
        let model = if params.model_id.is_empty() {
            self.config.model_id.as_str()
        } else {
            params.model_id.as_str()
        };
        let body = json!({
            "model": model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            match self.send_once(&body, auth.as_deref()) {
                Ok(completion) => return Ok(completion),
                Err(Attempt::Fatal(error)) => return Err(error),
                Err(Attempt::Retry(error)) => last = Some(error),
            }
            if attempt + 1 < attempts {
                std::thread::sleep(Duration::from_millis(100 << attempt));
            }
        }
        Err(last.expect("at least one attempt always runs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves canned HTTP responses, one per listed status/body pair, and
    /// forwards each request's body text to the returned channel.
    fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test listener");
        let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().expect("accept test connection");
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                let request = loop {
                    let n = stream.read(&mut chunk).expect("read request");
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf).into_owned();
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|line| {
                                line.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= header_end + 4 + content_length {
                            break text;
                        }
                    }
                };
                tx.send(request).ok();
                let reason = if status == 200 { "OK" } else { "Error" };
                let reply = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).expect("write reply");
            }
        });
        (endpoint, rx)
    }

    fn reply_body(content: &str, finish_reason: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content},
                         "finish_reason": finish_reason}]
        })
        .to_string()
    }

    fn backend_for(endpoint: String) -> RemoteBackend {
        RemoteBackend::new(RemoteConfig {
            endpoint,
            model_id: "spec-model".to_owned(),
            timeout: Duration::from_secs(5),
            ..RemoteConfig::default()
        })
        .unwrap()
    }

    fn call(backend: &RemoteBackend) -> Result<Completion, GatewayError> {
        backend.complete(
            TaskKind::DirectSpecgen,
            &[ChatMessage::system("sys"), ChatMessage::user("usr")],
            &CompletionParams::default(),
        )
    }

    #[test]
    fn sends_wire_shape_and_reads_content() {
        let (endpoint, rx) = serve(vec![(200, reply_body("the spec", "stop"))]);
        let completion = call(&backend_for(endpoint)).unwrap();
        assert_eq!(completion.text, "the spec");
        assert!(!completion.truncated);

        let request = rx.recv().unwrap();
        let body_start = request.find("\r\n\r\n").unwrap() + 4;
        let body: serde_json::Value = serde_json::from_str(&request[body_start..]).unwrap();
        assert_eq!(body["model"], "spec-model");
        assert_eq!(body["temperature"], 0.3);
        assert_eq!(body["max_tokens"], 10_000);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "usr");
    }

    #[test]
    fn length_finish_reason_marks_truncation() {
        let (endpoint, _rx) = serve(vec![(200, reply_body("cut off", "length"))]);
        let completion = call(&backend_for(endpoint)).unwrap();
        assert!(completion.truncated);
    }

    #[test]
    fn server_errors_are_retried_and_auth_errors_are_not() {
        let (endpoint, rx) = serve(vec![
            (500, "{}".to_owned()),
            (200, reply_body("second try", "stop")),
        ]);
        let completion = call(&backend_for(endpoint)).unwrap();
        assert_eq!(completion.text, "second try");
        assert_eq!(rx.try_iter().count(), 2);

        let (endpoint, rx) = serve(vec![(401, "{}".to_owned())]);
        let err = call(&backend_for(endpoint)).unwrap_err();
        assert!(matches!(err, GatewayError::AuthError { .. }));
        assert_eq!(rx.try_iter().count(), 1);
    }

    #[test]
    fn missing_token_variable_fails_before_any_request() {
        let backend = RemoteBackend::new(RemoteConfig {
            endpoint: "http://127.0.0.1:9/never".to_owned(),
            auth_env: Some("SPECFORGE_TEST_TOKEN_UNSET".to_owned()),
            ..RemoteConfig::default()
        })
        .unwrap();
        let err = call(&backend).unwrap_err();
        assert!(matches!(err, GatewayError::AuthError { .. }));
    }
}
