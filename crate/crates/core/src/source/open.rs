use std::sync::Arc;

use super::descriptor::{RandomSourceDescriptor, SourceKind};
use super::records::{ingest_measurement_records, records_to_bits};
use super::remote::RemoteClient;
use super::store::{fill_uniforms, BitStore, ChaChaBits, MemoryBits};
use super::{SourceError, API_KEY_ENV};
use crate::bits::{von_neumann_pairs, BitBuffer, UNIFORM_BITS};
use crate::pool::EntropyPool;

/// What a consumer needs from a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenRequest {
    /// Independent substream index. Seeded sources switch generator stream;
    /// record files skip `substream * bits_needed` bits. Pools and remote
    /// services always hand out fresh entropy and ignore it.
    pub substream: u64,
    /// Bits the consumer intends to read from offset 0.
    pub bits_needed: u64,
}

impl OpenRequest {
    pub fn variates(substream: u64, count: u64) -> Self {
        Self {
            substream,
            bits_needed: count * UNIFORM_BITS as u64,
        }
    }
}

/// Opens a random-access store for `descriptor`.
///
/// Pool sources reserve `ceil(bits_needed / 8)` bytes, advancing the
/// persisted cursor; the reservation is consumed even if the caller fails
/// afterwards. Extracting sources and remote services are materialized in
/// memory up to `bits_needed`.
pub fn open_store(
    descriptor: &RandomSourceDescriptor,
    request: &OpenRequest,
) -> Result<Arc<dyn BitStore>, SourceError> {
    let id = descriptor.id.clone();
    let store: Arc<dyn BitStore> = match descriptor.kind {
        SourceKind::Pseudo => Arc::new(ChaChaBits::new(id, descriptor.seed()?, request.substream)),
        SourceKind::Mock => {
            let raw = ChaChaBits::biased(id.clone(), descriptor.seed()?, request.substream, descriptor.bias()?)?;
            if descriptor.extract()? {
                Arc::new(extract_unbounded(&raw, request.bits_needed)?)
            } else {
                Arc::new(raw)
            }
        }
        SourceKind::Pool => {
            let pool = EntropyPool::open(descriptor.path()?)?;
            Arc::new(pool.reserve(request.bits_needed.div_ceil(8))?)
        }
        SourceKind::MeasurementFile => {
            let records = ingest_measurement_records(descriptor.path()?)?;
            let bits = records_to_bits(&records, descriptor.extract()?);
            let start = (request.substream * request.bits_needed).min(bits.len() as u64) as usize;
            let end = if request.bits_needed == 0 {
                bits.len()
            } else {
                (start + request.bits_needed as usize).min(bits.len())
            };
            let slice = BitBuffer::new(bits.bits()[start..end].to_vec(), id.clone())?;
            Arc::new(MemoryBits::from_bits(id, &slice))
        }
        SourceKind::RemoteHttp => {
            let mut config = descriptor.remote_config()?;
            config.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
            let client = RemoteClient::http(config);
            let bits = if descriptor.extract()? {
                let mut out = BitBuffer::new(Vec::new(), id.clone())?;
                while (out.len() as u64) < request.bits_needed {
                    // unbiased input yields a quarter of its bits
                    let missing = request.bits_needed - out.len() as u64;
                    let words = (missing * 4).div_ceil(16) as usize + 1;
                    let raw = client.fetch(words)?;
                    for bit in von_neumann_pairs(raw.into_bits()) {
                        out.push(bit);
                    }
                }
                out
            } else {
                let words = request.bits_needed.div_ceil(16).max(1) as usize;
                client.fetch(words)?
            };
            Arc::new(MemoryBits::from_bits(id, &bits))
        }
    };
    Ok(store)
}

/// Runs the extractor over an unbounded raw stream until `target` output
/// bits exist.
fn extract_unbounded(raw: &ChaChaBits, target: u64) -> Result<MemoryBits, SourceError> {
    const CHUNK: usize = 1 << 16;
    let mut out = BitBuffer::new(Vec::with_capacity(target as usize), raw.source_id())?;
    let mut offset = 0u64;
    let mut chunk = vec![0u8; CHUNK];
    while (out.len() as u64) < target {
        raw.read_bytes_at(offset, &mut chunk)?;
        offset += CHUNK as u64;
        let expanded = chunk.iter().flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1));
        for bit in von_neumann_pairs(expanded) {
            if out.len() as u64 == target {
                break;
            }
            out.push(bit);
        }
    }
    Ok(MemoryBits::from_bits(raw.source_id(), &out))
}

/// Draws `count` fresh uniforms from a source.
pub fn draw_uniforms(
    descriptor: &RandomSourceDescriptor,
    count: usize,
    substream: u64,
) -> Result<Vec<f64>, SourceError> {
    let store = open_store(descriptor, &OpenRequest::variates(substream, count as u64))?;
    let mut out = vec![0.0; count];
    fill_uniforms(store.as_ref(), 0, &mut out)?;
    Ok(out)
}
