//! Randomness providers: seeded pseudo streams, remote entropy services,
//! QPU measurement records, persisted pools, and biased mocks for testing.
//!
//! All providers are exposed through [`BitStore`], a random-access view of
//! a bit sequence. Random access lets the scenario engine hand disjoint
//! variate ranges to parallel workers without any shared cursor.

mod descriptor;
mod mock;
mod open;
mod records;
mod remote;
mod store;

use std::path::PathBuf;

use thiserror::Error;

use crate::bits::BitsError;
use crate::pool::PoolError;

pub use descriptor::{RandomSourceDescriptor, SourceKind};
pub use mock::{mock_source, MockSource};
pub use open::{draw_uniforms, open_store, OpenRequest};
pub use records::{ingest_measurement_records, parse_measurement_records, records_to_bits, MeasurementRecordSet};
pub use remote::{fetch_remote, RemoteClient, RemoteConfig, Transport, UreqTransport};
pub use store::{fill_uniforms, variate_capacity, BitStore, ChaChaBits, MemoryBits};

/// Environment variable consulted for the remote-source API key.
pub const API_KEY_ENV: &str = "QRISK_API_KEY";

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid source descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("bias must lie in [0, 1], got {0}")]
    BiasOutOfRange(f64),
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("provider reported failure: {0}")]
    Provider(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("record file format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("record file contains no shots")]
    EmptyInput,
    #[error("entropy exhausted: {needed_bits} bits needed, {available_bits} available")]
    Exhausted { needed_bits: u64, available_bits: u64 },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Bits(#[from] BitsError),
    #[error(transparent)]
    Pool(#[from] PoolError),
}
