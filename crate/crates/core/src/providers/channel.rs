use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

use super::{ProviderDescriptor, ProviderError, TransportKind};

/// Endpoint of the provider wire protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Analyze,
    MlmTopK,
    Embed,
    Generate,
}

impl Route {
    pub fn path(self) -> &'static str {
        match self {
            Route::Analyze => "/analyze",
            Route::MlmTopK => "/mlm_topk",
            Route::Embed => "/embed",
            Route::Generate => "/generate",
        }
    }
}

/// Request/response transport under a typed client.
pub trait Channel: Send + Sync {
    fn call(&self, route: Route, request: &Value) -> Result<Value, ProviderError>;
}

pub fn open_channel(desc: &ProviderDescriptor) -> Result<Box<dyn Channel>, ProviderError> {
    desc.validate()?;
    match desc.transport {
        TransportKind::Fixture => {
            let path = desc.fixture.as_deref().expect("validated");
            Ok(Box::new(FixtureChannel::load(&desc.id, path)?))
        }
        TransportKind::Http => Ok(Box::new(HttpChannel::new(desc)?)),
    }
}

/// Canonical request key: compact JSON with object keys sorted.
pub fn canonical_key(request: &Value) -> String {
    // serde_json's default map is ordered by key, so a round trip through
    // `Value` sorts every nested object.
    serde_json::to_string(request).expect("json value serializes")
}

/// Replays responses recorded in a JSONL file of
/// `{"request": ..., "response": ...}` lines.
#[derive(Debug, Clone)]
pub struct FixtureChannel {
    provider_id: String,
    responses: HashMap<String, Value>,
}

impl FixtureChannel {
    pub fn load(provider_id: &str, path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Fixture {
            provider_id: provider_id.to_string(),
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(provider_id, &text)
    }

    pub fn parse(provider_id: &str, text: &str) -> Result<Self, ProviderError> {
        let mut responses = HashMap::new();
        let text = text.strip_prefix('\u{FEFF}').unwrap_or(text);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| ProviderError::Fixture {
                provider_id: provider_id.to_string(),
                message: format!("line {}: {message}", i + 1),
            };
            let mut record: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let request = record
                .get_mut("request")
                .map(Value::take)
                .ok_or_else(|| bad("missing `request`".into()))?;
            let response = record
                .get_mut("response")
                .map(Value::take)
                .ok_or_else(|| bad("missing `response`".into()))?;
            responses.insert(canonical_key(&request), response);
        }
        Ok(Self {
            provider_id: provider_id.to_string(),
            responses,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Channel for FixtureChannel {
    fn call(&self, _route: Route, request: &Value) -> Result<Value, ProviderError> {
        let key = canonical_key(request);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| ProviderError::FixtureMiss {
                provider_id: self.provider_id.clone(),
                key,
            })
    }
}

/// Counting semaphore bounding concurrent requests per descriptor.
#[derive(Debug)]
struct InFlight {
    available: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            available: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self.freed.wait(available).unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a InFlight);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// JSON-over-HTTP transport. Requests beyond `max_in_flight` wait for a free
/// slot.
pub struct HttpChannel {
    provider_id: String,
    base: String,
    bearer: Option<String>,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl HttpChannel {
    pub fn new(desc: &ProviderDescriptor) -> Result<Self, ProviderError> {
        let base = desc.resolved_endpoint().ok_or_else(|| ProviderError::Descriptor {
            provider_id: desc.id.clone(),
            message: "HTTP transport requires an endpoint".into(),
        })?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(desc.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            provider_id: desc.id.clone(),
            base: base.trim_end_matches('/').to_string(),
            bearer: desc.bearer_token.clone(),
            agent,
            in_flight: InFlight::new(desc.max_in_flight),
        })
    }

    fn transport(&self, message: impl Into<String>) -> ProviderError {
        ProviderError::Transport {
            provider_id: self.provider_id.clone(),
            message: message.into(),
        }
    }
}

impl Channel for HttpChannel {
    fn call(&self, route: Route, request: &Value) -> Result<Value, ProviderError> {
        let _permit = self.in_flight.acquire();
        let url = format!("{}{}", self.base, route.path());
        let mut builder = self.agent.post(&url);
        if let Some(token) = &self.bearer {
            builder = builder.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = builder
            .send_json(request)
            .map_err(|e| self.transport(format!("POST {url}: {e}")))?;
        let status = response.status();
        let mut body = String::new();
        response
            .body_mut()
            .as_reader()
            .read_to_string(&mut body)
            .map_err(|e| self.transport(format!("reading {url}: {e}")))?;
        if !status.is_success() {
            let snippet: String = body.chars().take(200).collect();
            return Err(self.transport(format!("POST {url}: HTTP {status}: {snippet}")));
        }
        serde_json::from_str(&body).map_err(|e| ProviderError::Protocol {
            provider_id: self.provider_id.clone(),
            message: format!("{url} returned invalid JSON: {e}"),
        })
    }
}
