//! Client for HTTP entropy services that serve `uint16` word arrays.
//!
//! Request: `GET <endpoint>?length=<n>&type=uint16`.
//! Response: `{"success": true, "data": [w0, w1, ...]}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::Deserialize;

use super::descriptor::{RandomSourceDescriptor, SourceKind};
use super::{SourceError, API_KEY_ENV};
use crate::bits::BitBuffer;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Upper bound on words requested per call.
    pub max_words: usize,
    /// Retries after the first failed attempt.
    pub retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff: Duration,
    pub api_key: Option<String>,
    pub api_key_header: String,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            max_words: 1024,
            retries: 3,
            backoff: Duration::from_millis(500),
            api_key: None,
            api_key_header: "x-api-key".into(),
        }
    }

    fn url(&self, length: usize) -> String {
        let sep = if self.endpoint.contains('?') { '&' } else { '?' };
        format!("{}{sep}length={length}&type=uint16", self.endpoint)
    }
}

/// Minimal HTTP GET abstraction so the batching and parsing logic can be
/// exercised without a network.
pub trait Transport: Send + Sync {
    /// Returns the response body, or a transport-level failure message.
    fn get(&self, url: &str, header: Option<(&str, &str)>) -> Result<String, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, header: Option<(&str, &str)>) -> Result<String, String> {
        let mut request = self.agent.get(url);
        if let Some((name, value)) = header {
            request = request.header(name, value);
        }
        let mut response = request.call().map_err(|e| e.to_string())?;
        response.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

#[derive(Deserialize)]
struct WordResponse {
    success: bool,
    #[serde(default)]
    data: Option<Vec<serde_json::Value>>,
    #[serde(default)]
    message: Option<String>,
}

pub struct RemoteClient<T = UreqTransport> {
    config: RemoteConfig,
    transport: T,
}

impl RemoteClient<UreqTransport> {
    pub fn http(config: RemoteConfig) -> Self {
        Self::new(config, UreqTransport::default())
    }
}

impl<T: Transport> RemoteClient<T> {
    pub fn new(config: RemoteConfig, transport: T) -> Self {
        Self { config, transport }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Fetches `count` 16-bit words in batches of at most `max_words`,
    /// expanding each MSB-first. Calls for one endpoint are serialized
    /// process-wide so batches land in request order.
    pub fn fetch(&self, count: usize) -> Result<BitBuffer, SourceError> {
        if count == 0 {
            return Err(SourceError::InvalidDescriptor("word count must be at least 1".into()));
        }
        let lock = endpoint_lock(&self.config.endpoint);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

        let mut bits = BitBuffer::new(Vec::with_capacity(count * 16), self.config.endpoint.clone())?;
        let mut remaining = count;
        while remaining > 0 {
            let n = remaining.min(self.config.max_words);
            for word in self.fetch_batch(n)? {
                for i in (0..16).rev() {
                    bits.push((word >> i) & 1 == 1);
                }
            }
            remaining -= n;
        }
        Ok(bits)
    }

    fn fetch_batch(&self, n: usize) -> Result<Vec<u16>, SourceError> {
        let url = self.config.url(n);
        let header = self
            .config
            .api_key
            .as_deref()
            .map(|key| (self.config.api_key_header.as_str(), key));
        let mut attempt = 0u32;
        let body = loop {
            match self.transport.get(&url, header) {
                Ok(body) => break body,
                Err(message) if attempt >= self.config.retries => {
                    return Err(SourceError::Network {
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err(_) => {
                    std::thread::sleep(self.config.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        };
        parse_words(&body, n)
    }
}

fn parse_words(body: &str, expected: usize) -> Result<Vec<u16>, SourceError> {
    let response: WordResponse =
        serde_json::from_str(body).map_err(|e| SourceError::MalformedResponse(e.to_string()))?;
    if !response.success {
        return Err(SourceError::Provider(
            response.message.unwrap_or_else(|| "success flag is false".into()),
        ));
    }
    let data = response
        .data
        .ok_or_else(|| SourceError::MalformedResponse("missing data array".into()))?;
    if data.len() != expected {
        return Err(SourceError::MalformedResponse(format!(
            "requested {expected} words, received {}",
            data.len()
        )));
    }
    data.iter()
        .map(|v| {
            v.as_u64()
                .and_then(|w| u16::try_from(w).ok())
                .ok_or_else(|| SourceError::MalformedResponse(format!("word {v} outside [0, 65535]")))
        })
        .collect()
}

fn endpoint_lock(endpoint: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut locks = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    locks.entry(endpoint.to_string()).or_default().clone()
}

/// Fetches `count` words from a `remote-http` descriptor. The API key comes
/// from the `QRISK_API_KEY` environment variable when set.
pub fn fetch_remote(descriptor: &RandomSourceDescriptor, count: usize) -> Result<BitBuffer, SourceError> {
    if descriptor.kind != SourceKind::RemoteHttp {
        return Err(SourceError::InvalidDescriptor(format!(
            "{} is a {} source, not remote-http",
            descriptor.id, descriptor.kind
        )));
    }
    let mut config = descriptor.remote_config()?;
    config.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
    RemoteClient::http(config).fetch(count)
}
