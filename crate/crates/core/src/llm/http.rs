use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use url::Url;

use super::{CompletionBackend, CompletionRequest, LlmError};
use crate::clock::Clock;
use crate::net::{HttpResponse, Transport, TransportError};

/// Exponential backoff: the n-th retry waits `base * factor^(n-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` is 1-based.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = attempt.saturating_sub(1) as i32;
        self.base_delay.mul_f64(self.factor.powi(exp))
    }
}

/// OpenAI-compatible `chat/completions` client.
pub struct HttpBackend {
    endpoint: Url,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Transient(String),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(endpoint: Url, api_key: Option<String>, transport: Arc<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        Self {
            endpoint,
            api_key,
            transport,
            clock,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn wire_body(request: &CompletionRequest) -> serde_json::Value {
        let mut body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        if let Some(max_tokens) = request.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        body
    }

    fn attempt(&self, body: &[u8]) -> Attempt {
        match self.transport.post_json(&self.endpoint, self.api_key.as_deref(), body) {
            Ok(response) => classify(response),
            Err(e) if e.is_transient() => Attempt::Transient(e.to_string()),
            Err(TransportError::Other(msg) | TransportError::Connect(msg) | TransportError::Timeout(msg)) => {
                Attempt::Fatal(LlmError::Transport(msg))
            }
        }
    }
}

fn classify(response: HttpResponse) -> Attempt {
    let status = response.status;
    if response.is_success() {
        return match parse_content(&response.body) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fatal(e),
        };
    }
    let body = String::from_utf8_lossy(&response.body).chars().take(500).collect::<String>();
    if status == 429 || (500..600).contains(&status) {
        Attempt::Transient(format!("HTTP {status}: {body}"))
    } else {
        Attempt::Fatal(LlmError::Http { status, body })
    }
}

fn parse_content(body: &[u8]) -> Result<String, LlmError> {
    let parsed: WireResponse = serde_json::from_slice(body).map_err(|e| LlmError::Protocol(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::Protocol("response has no choices".into()))?;
    Ok(choice.message.content.unwrap_or_default())
}

impl CompletionBackend for HttpBackend {
    fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let body = serde_json::to_vec(&Self::wire_body(request)).map_err(|e| LlmError::Protocol(e.to_string()))?;
        let max_attempts = self.retry.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            match self.attempt(&body) {
                Attempt::Done(content) => return Ok(content),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(msg) => {
                    tracing::warn!(attempt, error = %msg, "transient completion failure");
                    last_error = msg;
                    if attempt < max_attempts {
                        self.clock.sleep(self.retry.delay_after(attempt));
                    }
                }
            }
        }
        Err(LlmError::BackendExhausted {
            attempts: max_attempts,
            last_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::llm::ChatMessage;
    use chrono::{TimeZone, Utc};
    use std::sync::Mutex;

    /// (clock at send time, body, bearer token)
    type Seen = (Duration, Vec<u8>, Option<String>);

    struct Scripted {
        clock: Arc<ManualClock>,
        replies: Mutex<Vec<Result<HttpResponse, TransportError>>>,
        seen: Mutex<Vec<Seen>>,
    }

    impl Transport for Scripted {
        fn get(&self, _: &Url) -> Result<HttpResponse, TransportError> {
            unreachable!()
        }

        fn post_json(&self, _: &Url, bearer: Option<&str>, body: &[u8]) -> Result<HttpResponse, TransportError> {
            self.seen
                .lock()
                .unwrap()
                .push((self.clock.elapsed(), body.to_vec(), bearer.map(str::to_owned)));
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn ok_body(content: &str) -> HttpResponse {
        HttpResponse {
            status: 200,
            body: serde_json::to_vec(&json!({"choices": [{"message": {"role": "assistant", "content": content}}]})).unwrap(),
        }
    }

    fn status(code: u16) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse { status: code, body: b"busy".to_vec() })
    }

    fn setup(replies: Vec<Result<HttpResponse, TransportError>>) -> (HttpBackend, Arc<Scripted>, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap()));
        let transport = Arc::new(Scripted {
            clock: clock.clone(),
            replies: Mutex::new(replies),
            seen: Mutex::new(Vec::new()),
        });
        let backend = HttpBackend::new(
            Url::parse("http://llm.local/v1/chat/completions").unwrap(),
            Some("sk-test".into()),
            transport.clone(),
            clock.clone(),
        );
        (backend, transport, clock)
    }

    #[test]
    fn wire_body_has_the_three_protocol_fields() {
        let req = CompletionRequest::user_prompt("gpt-4", "hello");
        let body = HttpBackend::wire_body(&req);
        assert_eq!(
            body,
            json!({"model": "gpt-4", "messages": [{"role": "user", "content": "hello"}], "temperature": 0.0})
        );
    }

    #[test]
    fn retries_transient_failures_with_exponential_backoff() {
        let (backend, transport, clock) = setup(vec![
            status(429),
            status(503),
            Err(TransportError::Timeout("slow".into())),
            Ok(ok_body("finally")),
        ]);
        let out = backend.complete(&CompletionRequest::user_prompt("m", "q")).unwrap();
        assert_eq!(out, "finally");
        assert_eq!(
            clock.sleeps(),
            vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)]
        );
        let stamps: Vec<Duration> = transport.seen.lock().unwrap().iter().map(|s| s.0).collect();
        let scheduled = [1, 2, 4];
        for (i, pair) in stamps.windows(2).enumerate() {
            assert!(pair[1] >= pair[0]);
            assert!(pair[1] - pair[0] >= Duration::from_secs(scheduled[i]));
        }
        assert_eq!(transport.seen.lock().unwrap()[0].2.as_deref(), Some("sk-test"));
    }

    #[test]
    fn exhausts_after_five_attempts() {
        let (backend, transport, clock) = setup((0..5).map(|_| status(500)).collect());
        let err = backend.complete(&CompletionRequest::user_prompt("m", "q")).unwrap_err();
        assert!(matches!(err, LlmError::BackendExhausted { attempts: 5, .. }));
        assert_eq!(transport.seen.lock().unwrap().len(), 5);
        assert_eq!(clock.elapsed(), Duration::from_secs(1 + 2 + 4 + 8));
    }

    #[test]
    fn client_errors_fail_fast() {
        let (backend, transport, _) = setup(vec![status(401)]);
        let err = backend.complete(&CompletionRequest::user_prompt("m", "q")).unwrap_err();
        assert!(matches!(err, LlmError::Http { status: 401, .. }));
        assert_eq!(transport.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn malformed_body_is_a_protocol_error() {
        let (backend, _, _) = setup(vec![Ok(HttpResponse { status: 200, body: b"{\"choices\": []}".to_vec() })]);
        let err = backend
            .complete(&CompletionRequest {
                model: "m".into(),
                messages: vec![ChatMessage::system("s"), ChatMessage::user("u")],
                temperature: 0.0,
                max_tokens: Some(10),
            })
            .unwrap_err();
        assert!(matches!(err, LlmError::Protocol(_)));
    }
}
