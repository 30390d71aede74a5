//! QPU measurement-record files.
//!
//! ```text
//! #shots=<n> bits=<k> backend=<label>
//! 0110...   (k characters, one line per shot)
//! ```
//!
//! Record lines are numbered from 1, not counting the header.

use std::path::Path;

use super::SourceError;
use crate::bits::{von_neumann_extract, BitBuffer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementRecordSet {
    pub shots: usize,
    pub bits_per_shot: usize,
    pub records: Vec<Vec<bool>>,
    pub backend_label: String,
}

pub fn ingest_measurement_records(path: impl AsRef<Path>) -> Result<MeasurementRecordSet, SourceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SourceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_measurement_records(&text)
}

pub fn parse_measurement_records(text: &str) -> Result<MeasurementRecordSet, SourceError> {
    let mut lines = text.lines();
    let header = loop {
        match lines.next() {
            None => return Err(SourceError::EmptyInput),
            Some(line) if line.trim().is_empty() => continue,
            Some(line) => break line.trim(),
        }
    };
    let (shots, bits_per_shot, backend_label) = parse_header(header)?;

    let mut records = Vec::with_capacity(shots);
    for (index, line) in lines.enumerate() {
        let line_no = index + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if line.chars().count() != bits_per_shot {
            return Err(SourceError::Format {
                line: line_no,
                message: format!("expected {bits_per_shot} bits, found {}", line.chars().count()),
            });
        }
        let record = line
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(SourceError::Format {
                    line: line_no,
                    message: format!("invalid character {other:?}"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        records.push(record);
    }

    if shots == 0 || records.is_empty() {
        return Err(SourceError::EmptyInput);
    }
    if records.len() != shots {
        return Err(SourceError::Format {
            line: 0,
            message: format!("header declares {shots} shots, file has {}", records.len()),
        });
    }
    Ok(MeasurementRecordSet {
        shots,
        bits_per_shot,
        records,
        backend_label,
    })
}

fn parse_header(header: &str) -> Result<(usize, usize, String), SourceError> {
    let bad = |message: String| SourceError::Format { line: 0, message };
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| bad(format!("expected header line, found {header:?}")))?;
    let (mut shots, mut bits, mut backend) = (None, None, None);
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field {field:?}")))?;
        match key {
            "shots" => shots = Some(value.parse().map_err(|_| bad(format!("bad shots {value:?}")))?),
            "bits" => bits = Some(value.parse().map_err(|_| bad(format!("bad bits {value:?}")))?),
            "backend" => backend = Some(value.to_string()),
            _ => return Err(bad(format!("unknown header field {key:?}"))),
        }
    }
    let bits: usize = bits.ok_or_else(|| bad("header lacks bits=".into()))?;
    if bits == 0 {
        return Err(bad("bits per shot must be positive".into()));
    }
    Ok((
        shots.ok_or_else(|| bad("header lacks shots=".into()))?,
        bits,
        backend.ok_or_else(|| bad("header lacks backend=".into()))?,
    ))
}

/// Concatenates records in shot order, optionally through the Von Neumann
/// extractor.
pub fn records_to_bits(records: &MeasurementRecordSet, apply_extractor: bool) -> BitBuffer {
    let origin = if records.backend_label.is_empty() {
        "measurement-records".to_string()
    } else {
        records.backend_label.clone()
    };
    let raw = BitBuffer::new(records.records.concat(), origin).expect("origin is non-empty");
    if apply_extractor {
        von_neumann_extract(&raw)
    } else {
        raw
    }
}
