use std::time::Duration;

use super::ChatRequest;

/// Raw HTTP outcome before status classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportFailure {
    #[error("request timed out")]
    Timeout,
    #[error("connection error: {0}")]
    Connection(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest, timeout: Duration) -> Result<WireResponse, TransportFailure>;
}

/// Blocking HTTP transport posting JSON to a chat-completions URL.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub endpoint: String,
    pub api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        HttpTransport {
            endpoint: endpoint.into(),
            api_key,
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest, timeout: Duration) -> Result<WireResponse, TransportFailure> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(request) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| TransportFailure::Connection(e.to_string()))?;
                Ok(WireResponse { status, body })
            }
            Err(ureq::Error::Timeout(_)) => Err(TransportFailure::Timeout),
            Err(e) => Err(TransportFailure::Connection(e.to_string())),
        }
    }
}
