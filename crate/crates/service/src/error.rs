use std::path::PathBuf;

use qrisk_core::market::MarketError;
use qrisk_core::pool::PoolError;
use qrisk_core::randtest::TestError;
use qrisk_core::risk::RiskError;
use qrisk_core::source::SourceError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("not ready: {0}")]
    NotReady(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt document {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Test(#[from] TestError),
}

/// Wire form of an error: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

/// Bits needed and bits available when an error is an entropy shortfall.
fn exhaustion_pool(e: &PoolError) -> Option<Value> {
    match e {
        PoolError::Exhausted { requested, remaining } => {
            Some(json!({ "requested_bytes": requested, "remaining_bytes": remaining }))
        }
        PoolError::PartialFill { obtained, requested } => {
            Some(json!({ "requested_bytes": requested, "obtained_bytes": obtained }))
        }
        PoolError::Source(inner) => exhaustion_source(inner),
        _ => None,
    }
}

fn exhaustion_source(e: &SourceError) -> Option<Value> {
    match e {
        SourceError::Exhausted {
            needed_bits,
            available_bits,
        } => Some(json!({ "needed_bits": needed_bits, "available_bits": available_bits })),
        SourceError::Bits(qrisk_core::bits::BitsError::InsufficientEntropy { required, available }) => {
            Some(json!({ "needed_bits": required, "available_bits": available }))
        }
        SourceError::Pool(p) => exhaustion_pool(p),
        _ => None,
    }
}

fn exhaustion_risk(e: &RiskError) -> Option<Value> {
    match e {
        RiskError::EntropyExhausted { required, available } => {
            Some(json!({ "needed_variates": required, "available_variates": available }))
        }
        RiskError::Source(s) => exhaustion_source(s),
        RiskError::PartialStudy { source, .. } => exhaustion_risk(source),
        _ => None,
    }
}

impl ServiceError {
    pub fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        ServiceError::NotFound { kind, id: id.into() }
    }

    fn exhaustion(&self) -> Option<Value> {
        match self {
            ServiceError::Source(e) => exhaustion_source(e),
            ServiceError::Pool(e) => exhaustion_pool(e),
            ServiceError::Risk(e) => exhaustion_risk(e),
            _ => None,
        }
    }

    /// HTTP status class of the error.
    pub fn status(&self) -> u16 {
        if self.exhaustion().is_some() {
            return 422;
        }
        match self {
            ServiceError::NotFound { .. } => 404,
            ServiceError::Conflict(_) | ServiceError::NotReady(_) => 409,
            ServiceError::Invalid(_) | ServiceError::Market(_) | ServiceError::Test(_) => 400,
            ServiceError::Risk(RiskError::Source(s)) | ServiceError::Source(s) => source_status(s),
            ServiceError::Risk(RiskError::Market(_)) => 400,
            ServiceError::Risk(RiskError::PartialStudy { .. }) => 500,
            ServiceError::Risk(_) => 400,
            ServiceError::Pool(PoolError::Io { .. }) => 500,
            ServiceError::Pool(_) => 400,
            ServiceError::Io { .. } | ServiceError::Json { .. } => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        if self.exhaustion().is_some() {
            return "entropy-exhausted";
        }
        match self.status() {
            404 => "not-found",
            409 if matches!(self, ServiceError::NotReady(_)) => "not-ready",
            409 => "conflict",
            400 => "validation",
            502 => "upstream",
            _ => "internal",
        }
    }

    pub fn body(&self) -> ErrorBody {
        let detail = match self {
            ServiceError::NotFound { kind, id } => json!({ "kind": kind, "id": id }),
            ServiceError::Risk(RiskError::InsufficientPaths { required, available }) => {
                json!({ "required_paths": required, "paths": available })
            }
            ServiceError::Test(TestError::InsufficientSamples { needed, got }) => {
                json!({ "required_samples": needed, "samples": got })
            }
            _ => self.exhaustion().unwrap_or(Value::Null),
        };
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            detail,
        }
    }
}

fn source_status(e: &SourceError) -> u16 {
    match e {
        SourceError::Network { .. } | SourceError::Provider(_) | SourceError::MalformedResponse(_) => 502,
        SourceError::Io { .. } => 500,
        _ => 400,
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
