//! Pre-generated entropy persisted to disk and consumed exactly once.
//!
//! File layout (all integers big-endian):
//!
//! ```text
//! 0..8    magic "QPOOL\0\0\0"
//! 8..10   format version (u16)
//! 10..16  reserved, zero
//! 16..20  metadata length in bytes (u32)
//! 20..    metadata: UTF-8 `key=value` lines (source, created_at, extractor,
//!         optional validation_report)
//! ...     raw entropy payload, bits MSB-first within each byte
//! ```
//!
//! The consumption cursor lives in a sidecar `<pool>.cursor` holding a
//! decimal byte offset. Reservations take an exclusive lock on the sidecar,
//! so concurrent handles (threads or processes) never receive overlapping
//! ranges.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{SecondsFormat, Utc};
use thiserror::Error;

use crate::bits::BitBuffer;
use crate::source::{open_store, BitStore, OpenRequest, RandomSourceDescriptor, SourceError};

pub const MAGIC: [u8; 8] = *b"QPOOL\0\0\0";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: u64 = 16;
const WRITE_CHUNK: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid pool file {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("pool size must be positive")]
    ZeroSize,
    #[error("source exhausted while filling pool: obtained {obtained} of {requested} bytes")]
    PartialFill { obtained: u64, requested: u64 },
    #[error("pool exhausted: {requested} bytes requested, {remaining} remaining")]
    Exhausted { requested: u64, remaining: u64 },
    #[error("source error while filling pool: {0}")]
    Source(Box<SourceError>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolMetadata {
    pub source_id: String,
    /// RFC 3339 timestamp.
    pub created_at: String,
    pub extractor_applied: bool,
    pub validation_report_id: Option<String>,
}

impl PoolMetadata {
    pub fn new(source_id: impl Into<String>, extractor_applied: bool) -> Self {
        Self {
            source_id: source_id.into(),
            created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            extractor_applied,
            validation_report_id: None,
        }
    }

    fn encode(&self) -> Result<String, String> {
        let mut fields = vec![
            ("source", self.source_id.as_str()),
            ("created_at", self.created_at.as_str()),
            ("extractor", if self.extractor_applied { "true" } else { "false" }),
        ];
        if let Some(id) = &self.validation_report_id {
            fields.push(("validation_report", id));
        }
        let mut text = String::new();
        for (key, value) in fields {
            if value.contains('\n') {
                return Err(format!("metadata value for {key} contains a newline"));
            }
            text.push_str(&format!("{key}={value}\n"));
        }
        Ok(text)
    }

    fn decode(text: &str) -> Result<Self, String> {
        let mut source_id = None;
        let mut created_at = None;
        let mut extractor_applied = None;
        let mut validation_report_id = None;
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("metadata line {line:?} lacks '='"))?;
            match key {
                "source" => source_id = Some(value.to_string()),
                "created_at" => created_at = Some(value.to_string()),
                "extractor" => {
                    extractor_applied = Some(value.parse().map_err(|_| format!("bad extractor flag {value:?}"))?)
                }
                "validation_report" => validation_report_id = Some(value.to_string()),
                // unknown keys are tolerated for forward compatibility
                _ => {}
            }
        }
        Ok(Self {
            source_id: source_id.ok_or("metadata lacks source")?,
            created_at: created_at.ok_or("metadata lacks created_at")?,
            extractor_applied: extractor_applied.ok_or("metadata lacks extractor")?,
            validation_report_id,
        })
    }
}

/// Handle to a pool file.
#[derive(Debug)]
pub struct EntropyPool {
    path: PathBuf,
    file: Arc<File>,
    payload_offset: u64,
    total_bytes: u64,
    metadata: PoolMetadata,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PoolError + '_ {
    move |source| PoolError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn cursor_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".cursor");
    PathBuf::from(name)
}

impl EntropyPool {
    /// Fills a new pool with `bytes` bytes drawn from `source`.
    pub fn create(path: impl AsRef<Path>, source: &RandomSourceDescriptor, bytes: u64) -> Result<Self, PoolError> {
        if bytes == 0 {
            return Err(PoolError::ZeroSize);
        }
        let wrap = |e: SourceError| match e {
            SourceError::Pool(inner) => inner,
            other => PoolError::Source(Box::new(other)),
        };
        let store = open_store(
            source,
            &OpenRequest {
                substream: 0,
                bits_needed: bytes * 8,
            },
        )
        .map_err(wrap)?;
        if let Some(available) = store.len_bytes() {
            if available < bytes {
                return Err(PoolError::PartialFill {
                    obtained: available,
                    requested: bytes,
                });
            }
        }
        let metadata = PoolMetadata::new(&source.id, source.extract().map_err(wrap)?);
        Self::write_with(path.as_ref(), &metadata, bytes, |offset, buf| {
            store.read_bytes_at(offset, buf).map_err(wrap)
        })
    }

    /// Writes a pool holding exactly `payload`.
    pub fn write(path: impl AsRef<Path>, metadata: &PoolMetadata, payload: &[u8]) -> Result<Self, PoolError> {
        if payload.is_empty() {
            return Err(PoolError::ZeroSize);
        }
        Self::write_with(path.as_ref(), metadata, payload.len() as u64, |offset, buf| {
            let start = offset as usize;
            buf.copy_from_slice(&payload[start..start + buf.len()]);
            Ok(())
        })
    }

    fn write_with(
        path: &Path,
        metadata: &PoolMetadata,
        total: u64,
        mut fill: impl FnMut(u64, &mut [u8]) -> Result<(), PoolError>,
    ) -> Result<Self, PoolError> {
        let encoded = metadata.encode().map_err(|message| PoolError::Format {
            path: path.to_path_buf(),
            message,
        })?;
        let mut tmp_name = path.as_os_str().to_owned();
        tmp_name.push(".partial");
        let tmp = PathBuf::from(tmp_name);

        let result = (|| {
            let file = File::create(&tmp).map_err(io_err(&tmp))?;
            let mut out = BufWriter::new(file);
            let mut header = [0u8; HEADER_LEN as usize];
            header[..8].copy_from_slice(&MAGIC);
            header[8..10].copy_from_slice(&FORMAT_VERSION.to_be_bytes());
            out.write_all(&header).map_err(io_err(&tmp))?;
            out.write_all(&(encoded.len() as u32).to_be_bytes())
                .map_err(io_err(&tmp))?;
            out.write_all(encoded.as_bytes()).map_err(io_err(&tmp))?;

            let mut chunk = vec![0u8; WRITE_CHUNK];
            let mut written = 0u64;
            while written < total {
                let n = (total - written).min(WRITE_CHUNK as u64) as usize;
                fill(written, &mut chunk[..n])?;
                out.write_all(&chunk[..n]).map_err(io_err(&tmp))?;
                written += n as u64;
            }
            out.into_inner()
                .map_err(|e| io_err(&tmp)(e.into_error()))?
                .sync_all()
                .map_err(io_err(&tmp))
        })();
        if let Err(e) = result {
            let _ = std::fs::remove_file(&tmp);
            return Err(e);
        }
        std::fs::rename(&tmp, path).map_err(io_err(path))?;
        let cursor = cursor_path(path);
        std::fs::write(&cursor, "0").map_err(io_err(&cursor))?;
        Self::open(path)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, PoolError> {
        let path = path.as_ref().to_path_buf();
        let format_err = |message: String| PoolError::Format {
            path: path.clone(),
            message,
        };
        let mut file = File::open(&path).map_err(io_err(&path))?;
        let mut header = [0u8; HEADER_LEN as usize + 4];
        file.read_exact(&mut header)
            .map_err(|_| format_err("file shorter than header".into()))?;
        if header[..8] != MAGIC {
            return Err(format_err("bad magic".into()));
        }
        let version = u16::from_be_bytes([header[8], header[9]]);
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let meta_len = u32::from_be_bytes(header[16..20].try_into().expect("4 bytes")) as u64;
        let mut meta = vec![0u8; meta_len as usize];
        file.read_exact(&mut meta)
            .map_err(|_| format_err("truncated metadata".into()))?;
        let metadata = String::from_utf8(meta)
            .map_err(|_| format_err("metadata is not UTF-8".into()))
            .and_then(|text| PoolMetadata::decode(&text).map_err(format_err))?;
        let payload_offset = HEADER_LEN + 4 + meta_len;
        let file_len = file.seek(SeekFrom::End(0)).map_err(io_err(&path))?;
        Ok(Self {
            total_bytes: file_len - payload_offset,
            payload_offset,
            metadata,
            file: Arc::new(file),
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn metadata(&self) -> &PoolMetadata {
        &self.metadata
    }

    /// Bytes already handed out.
    pub fn cursor(&self) -> Result<u64, PoolError> {
        let cursor = cursor_path(&self.path);
        match std::fs::read_to_string(&cursor) {
            Ok(text) => parse_cursor(&cursor, &text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(io_err(&cursor)(e)),
        }
    }

    pub fn remaining(&self) -> Result<u64, PoolError> {
        Ok(self.total_bytes - self.cursor()?)
    }

    /// Atomically claims the next `bytes` bytes.
    pub fn reserve(&self, bytes: u64) -> Result<PoolRange, PoolError> {
        let cursor = cursor_path(&self.path);
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&cursor)
            .map_err(io_err(&cursor))?;
        file.lock().map_err(io_err(&cursor))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io_err(&cursor))?;
        let start = if text.trim().is_empty() {
            0
        } else {
            parse_cursor(&cursor, &text)?
        };
        let remaining = self.total_bytes.saturating_sub(start);
        if bytes > remaining {
            return Err(PoolError::Exhausted {
                requested: bytes,
                remaining,
            });
        }
        file.set_len(0).map_err(io_err(&cursor))?;
        file.write_all_at((start + bytes).to_string().as_bytes(), 0)
            .map_err(io_err(&cursor))?;
        file.sync_data().map_err(io_err(&cursor))?;
        // dropping the handle releases the lock
        Ok(PoolRange {
            id: self.metadata.source_id.clone(),
            file: Arc::clone(&self.file),
            path: self.path.clone(),
            base: self.payload_offset,
            start,
            len: bytes,
        })
    }

    /// Consumes the next `bytes` bytes and expands them to bits.
    pub fn read(&self, bytes: u64) -> Result<BitBuffer, PoolError> {
        let range = self.reserve(bytes)?;
        let mut buf = vec![0u8; bytes as usize];
        range
            .read_bytes_at(0, &mut buf)
            .map_err(|e| PoolError::Source(Box::new(e)))?;
        Ok(BitBuffer::from_bytes(&buf, &self.metadata.source_id).expect("pool source id is non-empty"))
    }
}

fn parse_cursor(path: &Path, text: &str) -> Result<u64, PoolError> {
    text.trim().parse().map_err(|_| PoolError::Format {
        path: path.to_path_buf(),
        message: format!("bad cursor value {text:?}"),
    })
}

/// A claimed, exclusively owned slice of a pool's payload.
#[derive(Debug, Clone)]
pub struct PoolRange {
    id: String,
    file: Arc<File>,
    path: PathBuf,
    /// File offset of the payload.
    base: u64,
    /// Payload offset of the range.
    start: u64,
    len: u64,
}

impl PoolRange {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Offset of the first byte within the payload.
    pub fn payload_start(&self) -> u64 {
        self.start
    }
}

impl BitStore for PoolRange {
    fn source_id(&self) -> &str {
        &self.id
    }

    fn len_bytes(&self) -> Option<u64> {
        Some(self.len)
    }

    fn read_bytes_at(&self, offset: u64, buf: &mut [u8]) -> Result<(), SourceError> {
        if offset + buf.len() as u64 > self.len {
            return Err(SourceError::Exhausted {
                needed_bits: (offset + buf.len() as u64) * 8,
                available_bits: self.len * 8,
            });
        }
        self.file
            .read_exact_at(buf, self.base + self.start + offset)
            .map_err(|source| SourceError::Io {
                path: self.path.clone(),
                source,
            })
    }
}
