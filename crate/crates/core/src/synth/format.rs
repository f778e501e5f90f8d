//! On-disk recording and ground-truth formats.
//!
//! Recording: 32-byte little-endian header followed by channel-major i16
//! samples.
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `ZYDR`                   |
//! | 4      | 2    | format version (u16)           |
//! | 6      | 2    | channel count (u16)            |
//! | 8      | 4    | sampling rate, Hz (u32)        |
//! | 12     | 8    | samples per channel (u64)      |
//! | 20     | 2    | noise level dB × 100 (i16)     |
//! | 22     | 10   | reserved, zero                 |

use std::io::{Read, Write};
use std::path::Path;

use super::{Recording, TruthEvent};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ZYDR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

pub fn encode_recording(rec: &Recording) -> Result<Vec<u8>> {
    let channels = u16::try_from(rec.channels)
        .map_err(|_| Error::Size(format!("{} channels exceeds u16", rec.channels)))?;
    let level = (rec.noise_level_db * 100.0).round();
    if level.abs() > i16::MAX as f64 {
        return Err(Error::config("noise_level_db", "not representable as i16 x100"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + rec.samples.len() * 2);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&rec.fs.to_le_bytes());
    out.extend_from_slice(&(rec.len() as u64).to_le_bytes());
    out.extend_from_slice(&(level as i16).to_le_bytes());
    out.resize(HEADER_LEN, 0);
    for s in &rec.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    Ok(out)
}

/// Decodes samples and header; the ground truth is left empty.
pub fn decode_recording(bytes: &[u8]) -> Result<Recording> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("recording", "shorter than header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format("recording", "bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::format("recording", format!("unsupported version {version}")));
    }
    let channels = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let fs = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let level = i16::from_le_bytes([bytes[20], bytes[21]]) as f64 / 100.0;
    let expected = (n as usize)
        .checked_mul(channels)
        .and_then(|v| v.checked_mul(2))
        .ok_or_else(|| Error::format("recording", "sample count overflows"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::format(
            "recording",
            format!("body has {} bytes, header implies {expected}", body.len()),
        ));
    }
    let samples = body
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(Recording {
        fs,
        noise_level_db: level,
        channels,
        samples,
        ground_truth: Vec::new(),
    })
}

pub fn write_recording(path: &Path, rec: &Recording) -> Result<()> {
    let bytes = encode_recording(rec)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn read_recording(path: &Path) -> Result<Recording> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_recording(&bytes)
}

pub fn write_truth_csv(path: &Path, truth: &[TruthEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for e in truth {
        w.serialize(e).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthEvent>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["neuron_id", "channel", "sample_index"] {
        return Err(Error::format("truth csv", format!("unexpected header {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format("csv", format!("{}: {other:?}", path.display())),
    }
}
