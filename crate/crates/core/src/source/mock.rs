use super::store::{BitStore, ChaChaBits};
use super::SourceError;
use crate::bits::BitBuffer;

const CHUNK: usize = 64;

/// Deterministic, unbounded bit stream where each bit is 1 with probability
/// `p`. Stands in for QPU output in tests; the same seed always yields the
/// same stream.
#[derive(Debug, Clone)]
pub struct MockSource {
    bits: ChaChaBits,
    chunk: [u8; CHUNK],
    chunk_offset: u64,
    position: u64,
}

pub fn mock_source(seed: u64, bias_p: f64) -> Result<MockSource, SourceError> {
    MockSource::new(format!("mock:seed={seed},p={bias_p}"), seed, bias_p)
}

impl MockSource {
    pub fn new(id: impl Into<String>, seed: u64, bias_p: f64) -> Result<Self, SourceError> {
        Ok(Self {
            bits: ChaChaBits::biased(id, seed, 0, bias_p)?,
            chunk: [0; CHUNK],
            chunk_offset: u64::MAX,
            position: 0,
        })
    }

    /// Draws the next `n` bits.
    pub fn take_bits(&mut self, n: usize) -> BitBuffer {
        let bits = self.by_ref().take(n).collect();
        BitBuffer::new(bits, self.bits.source_id()).expect("mock id is non-empty")
    }

    pub fn bits_drawn(&self) -> u64 {
        self.position
    }
}

impl Iterator for MockSource {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        let byte = self.position / 8;
        let chunk_offset = byte - byte % CHUNK as u64;
        if chunk_offset != self.chunk_offset {
            self.bits
                .read_bytes_at(chunk_offset, &mut self.chunk)
                .expect("unbounded stores never exhaust");
            self.chunk_offset = chunk_offset;
        }
        let value = self.chunk[(byte - chunk_offset) as usize];
        let bit = (value >> (7 - self.position % 8)) & 1 == 1;
        self.position += 1;
        Some(bit)
    }
}
