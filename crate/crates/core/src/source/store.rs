use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SourceError;
use crate::bits::{decode_uniforms, BitBuffer, UNIFORM_BITS};

/// Random-access view of a bit sequence, packed MSB-first into bytes.
pub trait BitStore: Send + Sync {
    fn source_id(&self) -> &str;

    /// Readable bytes, or `None` for unbounded generators.
    fn len_bytes(&self) -> Option<u64>;

    /// Readable bits; only differs from `8 * len_bytes` for stores whose
    /// last byte is partially filled.
    fn len_bits(&self) -> Option<u64> {
        self.len_bytes().map(|b| b * 8)
    }

    /// Copies `buf.len()` bytes starting at byte `offset`.
    fn read_bytes_at(&self, offset: u64, buf: &mut [u8]) -> Result<(), SourceError>;
}

/// How many whole 53-bit variates the store can supply.
pub fn variate_capacity(store: &dyn BitStore) -> Option<u64> {
    store.len_bits().map(|bits| bits / UNIFORM_BITS as u64)
}

/// Fills `out` with the uniforms at variate indices `first..first + out.len()`.
///
/// Variate `i` is decoded from bits `[53 i, 53 i + 53)` of the store, so any
/// partition of the index range reads disjoint bits.
pub fn fill_uniforms(store: &dyn BitStore, first: u64, out: &mut [f64]) -> Result<(), SourceError> {
    if out.is_empty() {
        return Ok(());
    }
    let width = UNIFORM_BITS as u64;
    let bit_start = first * width;
    let bit_end = (first + out.len() as u64) * width;
    if let Some(available_bits) = store.len_bits() {
        if bit_end > available_bits {
            return Err(SourceError::Exhausted {
                needed_bits: bit_end,
                available_bits,
            });
        }
    }
    let byte_start = bit_start / 8;
    let byte_end = bit_end.div_ceil(8);
    let mut bytes = vec![0u8; (byte_end - byte_start) as usize];
    store.read_bytes_at(byte_start, &mut bytes)?;
    decode_uniforms(&bytes, (bit_start % 8) as usize, out);
    Ok(())
}

/// Seekable ChaCha8 bit stream; unbounded.
///
/// Unbiased streams are the raw keystream bytes. A biased stream spends one
/// 64-bit output per bit, emitting 1 when its top 53 bits as a uniform fall
/// below `p`. Both forms support random access through the word position,
/// so a read at any offset equals the corresponding slice of a sequential
/// read.
#[derive(Debug, Clone)]
pub struct ChaChaBits {
    id: String,
    seed: u64,
    stream: u64,
    bias: Option<f64>,
}

impl ChaChaBits {
    pub fn new(id: impl Into<String>, seed: u64, stream: u64) -> Self {
        Self {
            id: id.into(),
            seed,
            stream,
            bias: None,
        }
    }

    /// Each bit is 1 with probability `p`. `p = 0.5` uses the raw keystream.
    pub fn biased(id: impl Into<String>, seed: u64, stream: u64, p: f64) -> Result<Self, SourceError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SourceError::BiasOutOfRange(p));
        }
        Ok(Self {
            id: id.into(),
            seed,
            stream,
            bias: (p != 0.5).then_some(p),
        })
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl BitStore for ChaChaBits {
    fn source_id(&self) -> &str {
        &self.id
    }

    fn len_bytes(&self) -> Option<u64> {
        None
    }

    fn read_bytes_at(&self, offset: u64, buf: &mut [u8]) -> Result<(), SourceError> {
        let mut rng = self.rng();
        match self.bias {
            None => {
                // Keystream words are 4 bytes; seek to the containing word.
                rng.set_word_pos(u128::from(offset / 4));
                let skip = (offset % 4) as usize;
                if skip == 0 && buf.len().is_multiple_of(4) {
                    rng.fill_bytes(buf);
                } else {
                    let mut tmp = vec![0u8; (skip + buf.len()).div_ceil(4) * 4];
                    rng.fill_bytes(&mut tmp);
                    buf.copy_from_slice(&tmp[skip..skip + buf.len()]);
                }
            }
            Some(p) => {
                // Bit j uses the 64-bit output at word position 2 j.
                rng.set_word_pos(u128::from(offset) * 16);
                for byte in buf.iter_mut() {
                    let mut value = 0u8;
                    for _ in 0..8 {
                        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                        value = (value << 1) | u8::from(u < p);
                    }
                    *byte = value;
                }
            }
        }
        Ok(())
    }
}

/// In-memory bits, e.g. fetched words or measurement records.
#[derive(Debug, Clone)]
pub struct MemoryBits {
    id: String,
    bytes: Vec<u8>,
    bit_len: u64,
}

impl MemoryBits {
    pub fn new(id: impl Into<String>, bytes: Vec<u8>) -> Self {
        let bit_len = bytes.len() as u64 * 8;
        Self {
            id: id.into(),
            bytes,
            bit_len,
        }
    }

    pub fn from_bits(id: impl Into<String>, bits: &BitBuffer) -> Self {
        Self {
            id: id.into(),
            bytes: bits.to_bytes(),
            bit_len: bits.len() as u64,
        }
    }
}

impl BitStore for MemoryBits {
    fn source_id(&self) -> &str {
        &self.id
    }

    fn len_bytes(&self) -> Option<u64> {
        Some(self.bytes.len() as u64)
    }

    fn len_bits(&self) -> Option<u64> {
        Some(self.bit_len)
    }

    fn read_bytes_at(&self, offset: u64, buf: &mut [u8]) -> Result<(), SourceError> {
        let start = offset as usize;
        let end = start + buf.len();
        if end > self.bytes.len() {
            return Err(SourceError::Exhausted {
                needed_bits: end as u64 * 8,
                available_bits: self.bit_len,
            });
        }
        buf.copy_from_slice(&self.bytes[start..end]);
        Ok(())
    }
}
