//! Versioned binary container for one [`EpochSet`].
//!
//! Layout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `EEGEPOCH` |
//! | 4     | header length `h`, u32 little-endian |
//! | h     | UTF-8 JSON header |
//! | rest  | f32 little-endian payload, trial-major, then channel, then sample |

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Condition, EpochSet, Montage, Paradigm};

pub const MAGIC: &[u8; 8] = b"EEGEPOCH";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "epo";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub version: u32,
    pub subject: String,
    pub paradigm: Paradigm,
    pub condition: Condition,
    pub fs: f64,
    pub epoch_window_ms: (f64, f64),
    pub montage: Vec<String>,
    /// (trials, channels, samples)
    pub shape: (usize, usize, usize),
    pub dtype: String,
    pub byte_order: String,
}

impl ContainerHeader {
    fn for_set(e: &EpochSet) -> Self {
        Self {
            version: VERSION,
            subject: e.subject().to_string(),
            paradigm: e.paradigm(),
            condition: e.condition().clone(),
            fs: e.fs(),
            epoch_window_ms: e.epoch_window(),
            montage: e.montage().labels().to_vec(),
            shape: e.data().dim(),
            dtype: "f32".into(),
            byte_order: "little".into(),
        }
    }

    pub fn payload_len(&self) -> usize {
        4 * self.shape.0 * self.shape.1 * self.shape.2
    }
}

pub fn encode(e: &EpochSet) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&ContainerHeader::for_set(e))?;
    let mut out = Vec::with_capacity(12 + header.len() + 4 * e.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    // Standard layout iteration order is trial, channel, sample.
    for v in e.data().iter() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    Ok(out)
}

fn parse_header(bytes: &[u8]) -> Result<ContainerHeader> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::MalformedHeader("missing version".into()))?;
    if version != VERSION as u64 {
        return Err(Error::UnsupportedVersion(version.min(u32::MAX as u64) as u32));
    }
    let header: ContainerHeader =
        serde_json::from_value(value).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.dtype != "f32" || header.byte_order != "little" {
        return Err(Error::MalformedHeader(format!(
            "unsupported payload {} / {}",
            header.dtype, header.byte_order
        )));
    }
    if header.montage.len() != header.shape.1 {
        return Err(Error::ShapeMismatch(format!(
            "{} montage labels for {} channels",
            header.montage.len(),
            header.shape.1
        )));
    }
    Ok(header)
}

fn read_prefix<R: Read>(r: &mut R) -> Result<ContainerHeader> {
    let mut magic = [0u8; 8];
    let mut len = [0u8; 4];
    let malformed = |_| Error::MalformedHeader("file too short".into());
    r.read_exact(&mut magic).map_err(malformed)?;
    if &magic != MAGIC {
        return Err(Error::MalformedHeader("bad magic".into()));
    }
    r.read_exact(&mut len).map_err(malformed)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header).map_err(malformed)?;
    parse_header(&header)
}

pub fn decode(bytes: &[u8]) -> Result<EpochSet> {
    let mut cursor = bytes;
    let header = read_prefix(&mut cursor)?;
    set_from_payload(header, cursor)
}

fn set_from_payload(header: ContainerHeader, payload: &[u8]) -> Result<EpochSet> {
    if payload.len() != header.payload_len() {
        return Err(Error::ShapeMismatch(format!(
            "payload has {} bytes, header shape {:?} needs {}",
            payload.len(),
            header.shape,
            header.payload_len()
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let data = Array3::from_shape_vec(header.shape, values).expect("length checked");
    let montage = Montage::new(&header.montage).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    Ok(EpochSet::new(
        montage,
        header.fs,
        header.subject,
        header.paradigm,
        header.condition,
        header.epoch_window_ms,
        data,
    ))
}

pub fn write_container(path: &Path, e: &EpochSet) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|err| Error::io(parent, err))?;
    }
    let bytes = encode(e)?;
    let file = fs::File::create(path).map_err(|err| Error::io(path, err))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|err| Error::io(path, err))?;
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn read_container(path: &Path) -> Result<EpochSet> {
    let bytes = fs::read(path).map_err(|err| Error::io(path, err))?;
    decode(&bytes)
}

/// Reads only the header, leaving the payload on disk.
pub fn read_header(path: &Path) -> Result<ContainerHeader> {
    let file = fs::File::open(path).map_err(|err| Error::io(path, err))?;
    read_prefix(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EpochSet {
        let m = Montage::new(&["Fp1", "Cz", "O2"]).unwrap();
        let data = Array3::from_shape_fn((2, 3, 5), |(t, c, s)| (t * 100 + c * 10 + s) as f32 * 0.5);
        EpochSet::new(
            m,
            256.0,
            "S07",
            Paradigm::VisualImagery,
            Condition::new("thank-you").unwrap(),
            (-500.0, 2000.0),
            data,
        )
    }

    #[test]
    fn header_records_metadata() {
        let bytes = encode(&sample()).unwrap();
        let decoded = decode(&bytes).unwrap();
        assert_eq!(decoded, sample());
        assert_eq!(&bytes[..8], MAGIC);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = encode(&sample()).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode(&bytes), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn future_version() {
        let bytes = encode(&sample()).unwrap();
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[12..12 + hlen]).unwrap().replace("\"version\":1", "\"version\":99");
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&bytes[12 + hlen..]);
        assert!(matches!(decode(&out), Err(Error::UnsupportedVersion(99))));
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(decode(b"NOTEPOCHxxxx"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode(b"EEG"), Err(Error::MalformedHeader(_))));
        let mut bad = MAGIC.to_vec();
        bad.extend_from_slice(&4u32.to_le_bytes());
        bad.extend_from_slice(b"{{{{");
        assert!(matches!(decode(&bad), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/set.epo");
        write_container(&path, &sample()).unwrap();
        assert_eq!(read_container(&path).unwrap(), sample());
        assert_eq!(read_header(&path).unwrap().shape, (2, 3, 5));
    }
}
