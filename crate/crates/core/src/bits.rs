//! Raw bits to uniform and standard-normal variates.
//!
//! Every uniform variate is decoded from a fixed-width group of 53 bits (the
//! full `f64` mantissa), most significant bit first, so `u = m / 2^53` and the
//! entropy cost of a batch is always `53 * len`.

use thiserror::Error;

use crate::normal;

/// Bits consumed per uniform variate.
pub const UNIFORM_BITS: usize = 53;

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

/// Substitute for `u = 0` before the inverse normal transform (2^-54).
pub const ZERO_REMAP: f64 = 1.0 / 18_014_398_509_481_984.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitsError {
    #[error("insufficient entropy: need at least {required} bits, {available} available")]
    InsufficientEntropy { required: usize, available: usize },
    #[error("bit buffer origin must not be empty")]
    EmptyOrigin,
    #[error("invalid bit character {found:?} at position {position}")]
    InvalidDigit { position: usize, found: char },
}

/// An ordered run of bits tagged with the source that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBuffer {
    bits: Vec<bool>,
    origin: String,
}

impl BitBuffer {
    pub fn new(bits: Vec<bool>, origin: impl Into<String>) -> Result<Self, BitsError> {
        let origin = origin.into();
        if origin.is_empty() {
            return Err(BitsError::EmptyOrigin);
        }
        Ok(Self { bits, origin })
    }

    /// Expands bytes into bits, most significant bit of each byte first.
    pub fn from_bytes(bytes: &[u8], origin: impl Into<String>) -> Result<Self, BitsError> {
        let bits = bytes
            .iter()
            .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
            .collect();
        Self::new(bits, origin)
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(text: &str, origin: impl Into<String>) -> Result<Self, BitsError> {
        let bits = text
            .chars()
            .enumerate()
            .map(|(position, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                found => Err(BitsError::InvalidDigit { position, found }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(bits, origin)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn extend_from(&mut self, other: &BitBuffer) {
        self.bits.extend_from_slice(&other.bits);
    }

    /// Packs the bits MSB-first. A trailing partial byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
            })
            .collect()
    }
}

/// Uniform variates in `[0, 1)` decoded from a bit buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBatch {
    pub values: Vec<f64>,
    pub source: String,
    pub bits_consumed: usize,
    /// Trailing bits that did not fill a whole 53-bit group.
    pub remainder_bits: usize,
}

/// Standard-normal variates.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalBatch {
    pub values: Vec<f64>,
    pub source: String,
}

/// Decodes consecutive 53-bit groups into uniforms `m / 2^53`.
pub fn bits_to_uniform(bits: &BitBuffer) -> Result<UniformBatch, BitsError> {
    if bits.len() < UNIFORM_BITS {
        return Err(BitsError::InsufficientEntropy {
            required: UNIFORM_BITS,
            available: bits.len(),
        });
    }
    let values: Vec<f64> = bits
        .bits
        .chunks_exact(UNIFORM_BITS)
        .map(|group| {
            let m = group.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b));
            m as f64 / TWO_POW_53
        })
        .collect();
    let bits_consumed = values.len() * UNIFORM_BITS;
    Ok(UniformBatch {
        remainder_bits: bits.len() - bits_consumed,
        bits_consumed,
        values,
        source: bits.origin.clone(),
    })
}

/// Decodes `out.len()` uniforms from packed MSB-first bytes, starting
/// `bit_offset` bits into `bytes`.
///
/// `bytes` must cover every bit touched; bytes past its end read as zero,
/// which only matters for callers that under-allocate.
pub fn decode_uniforms(bytes: &[u8], bit_offset: usize, out: &mut [f64]) {
    for (i, slot) in out.iter_mut().enumerate() {
        let bit = bit_offset + i * UNIFORM_BITS;
        let byte = bit / 8;
        let shift = bit % 8;
        let mut word = [0u8; 8];
        let end = (byte + 8).min(bytes.len());
        word[..end - byte].copy_from_slice(&bytes[byte..end]);
        // shift <= 7, so the 53 wanted bits sit inside the 64-bit window.
        let m = (u64::from_be_bytes(word) << shift) >> (64 - UNIFORM_BITS);
        *slot = m as f64 / TWO_POW_53;
    }
}

/// Pairs bits left to right: `01 -> 0`, `10 -> 1`, equal pairs are dropped.
pub fn von_neumann_pairs<I>(bits: I) -> impl Iterator<Item = bool>
where
    I: IntoIterator<Item = bool>,
{
    let mut it = bits.into_iter();
    std::iter::from_fn(move || loop {
        let first = it.next()?;
        let second = it.next()?;
        if first != second {
            return Some(first);
        }
    })
}

/// Von Neumann debiasing of an i.i.d. bitstream. A trailing odd bit is dropped.
pub fn von_neumann_extract(bits: &BitBuffer) -> BitBuffer {
    BitBuffer {
        bits: von_neumann_pairs(bits.bits.iter().copied()).collect(),
        origin: bits.origin.clone(),
    }
}

/// Elementwise inverse normal CDF; exact zeros are remapped to 2^-54 first.
pub fn uniforms_to_normals(batch: &UniformBatch) -> NormalBatch {
    NormalBatch {
        values: batch.values.iter().map(|&u| uniform_to_normal(u)).collect(),
        source: batch.source.clone(),
    }
}

/// Inverse transform of a single `[0, 1)` uniform.
#[inline]
pub fn uniform_to_normal(u: f64) -> f64 {
    let u = if u == 0.0 { ZERO_REMAP } else { u };
    normal::quantile_unchecked(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn buf(bits: &[u8]) -> BitBuffer {
        BitBuffer::new(bits.iter().map(|&b| b == 1).collect(), "test").unwrap()
    }

    #[test]
    fn zero_bits_decode_to_zero() {
        let batch = bits_to_uniform(&buf(&[0; 53])).unwrap();
        assert_eq!(batch.values, vec![0.0]);
        assert_eq!(batch.bits_consumed, 53);
        assert_eq!(batch.remainder_bits, 0);
    }

    #[test]
    fn one_bits_decode_to_largest_value() {
        let batch = bits_to_uniform(&buf(&[1; 53])).unwrap();
        assert_eq!(batch.values, vec![(TWO_POW_53 - 1.0) / TWO_POW_53]);
        assert!(batch.values[0] < 1.0);
    }

    #[test]
    fn leading_one_is_one_half() {
        let mut bits = vec![0u8; 53];
        bits[0] = 1;
        assert_eq!(bits_to_uniform(&buf(&bits)).unwrap().values, vec![0.5]);
    }

    #[test]
    fn short_buffer_is_rejected() {
        let err = bits_to_uniform(&buf(&[1; 52])).unwrap_err();
        assert_eq!(
            err,
            BitsError::InsufficientEntropy {
                required: 53,
                available: 52
            }
        );
    }

    #[test]
    fn remainder_is_reported() {
        let batch = bits_to_uniform(&buf(&[1; 120])).unwrap();
        assert_eq!(batch.values.len(), 2);
        assert_eq!(batch.bits_consumed, 106);
        assert_eq!(batch.remainder_bits, 14);
    }

    #[test]
    fn empty_origin_rejected() {
        assert_eq!(BitBuffer::new(vec![], "").unwrap_err(), BitsError::EmptyOrigin);
    }

    #[test]
    fn extractor_examples() {
        assert_eq!(von_neumann_extract(&buf(&[0, 1, 1, 0])), buf(&[0, 1]));
        assert_eq!(von_neumann_extract(&buf(&[0, 0, 1, 1])), buf(&[]));
        assert_eq!(von_neumann_extract(&buf(&[1, 0, 0, 1, 0, 1])), buf(&[1, 0, 0]));
        // trailing odd bit dropped
        assert_eq!(von_neumann_extract(&buf(&[1, 0, 1])), buf(&[1]));
    }

    #[test]
    fn normals_from_uniforms() {
        let batch = UniformBatch {
            values: vec![0.5, 0.5],
            source: "t".into(),
            bits_consumed: 106,
            remainder_bits: 0,
        };
        assert_eq!(uniforms_to_normals(&batch).values, vec![0.0, 0.0]);

        let batch = UniformBatch {
            values: vec![0.975],
            source: "t".into(),
            bits_consumed: 53,
            remainder_bits: 0,
        };
        assert!((uniforms_to_normals(&batch).values[0] - 1.959964).abs() < 1e-6);

        let empty = UniformBatch {
            values: vec![],
            source: "t".into(),
            bits_consumed: 0,
            remainder_bits: 0,
        };
        assert!(uniforms_to_normals(&empty).values.is_empty());
    }

    #[test]
    fn zero_uniform_is_remapped() {
        let z = uniform_to_normal(0.0);
        assert!(z.is_finite());
        assert!((z - normal::quantile_unchecked(ZERO_REMAP)).abs() == 0.0);
    }

    #[test]
    fn bytes_round_trip_through_bits() {
        let bytes = [0xA5u8, 0x01, 0xFF];
        let bits = BitBuffer::from_bytes(&bytes, "t").unwrap();
        assert_eq!(&bits.bits()[..8], &[true, false, true, false, false, true, false, true]);
        assert_eq!(bits.to_bytes(), bytes);
    }

    proptest! {
        #[test]
        fn uniforms_lie_in_unit_interval(bits in proptest::collection::vec(any::<bool>(), 53..2000)) {
            let batch = bits_to_uniform(&BitBuffer::new(bits.clone(), "p").unwrap()).unwrap();
            prop_assert!(batch.values.iter().all(|&u| (0.0..1.0).contains(&u)));
            prop_assert_eq!(batch.bits_consumed + batch.remainder_bits, bits.len());
            prop_assert_eq!(batch.bits_consumed, 53 * batch.values.len());
        }

        #[test]
        fn packed_decoding_matches_bitwise(bytes in proptest::collection::vec(any::<u8>(), 7..200), skip in 0usize..8) {
            let bits = BitBuffer::from_bytes(&bytes, "p").unwrap();
            let n = (bits.len() - skip) / 53;
            prop_assume!(n > 0);
            let shifted = BitBuffer::new(bits.bits()[skip..].to_vec(), "p").unwrap();
            let expected = bits_to_uniform(&shifted).unwrap().values;
            let mut out = vec![0.0; n];
            decode_uniforms(&bytes, skip, &mut out);
            prop_assert_eq!(out, expected);
        }

        #[test]
        fn extractor_output_bounded(bits in proptest::collection::vec(any::<bool>(), 0..500)) {
            let input = BitBuffer::new(bits.clone(), "p").unwrap();
            prop_assert!(von_neumann_extract(&input).len() <= bits.len() / 2);
        }
    }
}
