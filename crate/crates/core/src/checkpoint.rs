//! Single-file model archives.
//!
//! Layout: the magic `ECPECKPT`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header, then every tensor as
//! raw little-endian `f64` values in header order. The header records each
//! tensor's name, shape and offset plus a SHA-256 digest of the data block.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::{StateDict, Tensor};

const MAGIC: &[u8; 8] = b"ECPECKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the data block, in values.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
    data_sha256: String,
}

pub fn encode<M: Serialize>(kind: &str, meta: &M, tensors: &StateDict) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut data = Vec::new();
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape.clone(),
            offset,
        });
        offset += t.data.len();
        data.extend(t.data.iter().flat_map(|v| v.to_le_bytes()));
    }
    let header = Header {
        kind: kind.to_string(),
        meta: serde_json::to_value(meta).map_err(|e| Error::Checkpoint(e.to_string()))?,
        tensors: entries,
        data_sha256: hex::encode(Sha256::digest(&data)),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    Ok(out)
}

/// Returns the metadata and tensors of an archive of the given `kind`.
pub fn decode<M: DeserializeOwned>(bytes: &[u8], kind: &str) -> Result<(M, StateDict)> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a model archive"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported archive version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated archive header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])
        .map_err(|e| Error::Checkpoint(format!("bad archive header: {e}")))?;
    if header.kind != kind {
        return Err(Error::Checkpoint(format!(
            "archive holds a {} model, expected {kind}",
            header.kind
        )));
    }
    let data = &bytes[header_end..];
    if hex::encode(Sha256::digest(data)) != header.data_sha256 {
        return Err(bad("archive data is corrupted (digest mismatch)"));
    }
    let mut dict = StateDict::new();
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let start = entry.offset * 8;
        let end = start + n * 8;
        if end > data.len() {
            return Err(Error::Checkpoint(format!("tensor {} exceeds the data block", entry.name)));
        }
        let values = data[start..end]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        dict.insert(
            entry.name,
            Tensor {
                shape: entry.shape,
                data: values,
            },
        );
    }
    let meta = serde_json::from_value(header.meta)
        .map_err(|e| Error::Checkpoint(format!("bad archive metadata: {e}")))?;
    Ok((meta, dict))
}

pub fn save<M: Serialize>(path: &Path, kind: &str, meta: &M, tensors: &StateDict) -> Result<()> {
    write_atomic(path, &encode(kind, meta, tensors)?)
}

pub fn load<M: DeserializeOwned>(path: &Path, kind: &str) -> Result<(M, StateDict)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, kind).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
