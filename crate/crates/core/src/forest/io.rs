//! Model files: a one-line JSON header followed by the JSON payload.
//!
//! ```text
//! {"format":"selqa-forest","version":1,"sha256":"<hex of payload bytes>","bytes":<payload length>}
//! {"trees":[...],"config":{...},"schema_id":"full/v1/30","mode":"full","n_features":30}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RandomForest;
use crate::error::{Error, Result};

const FORMAT: &str = "selqa-forest";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    sha256: String,
    bytes: usize,
}

pub fn write_forest(f: &RandomForest) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(f)?;
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        sha256: hex::encode(Sha256::digest(&payload)),
        bytes: payload.len(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(&payload);
    out.push(b'\n');
    Ok(out)
}

pub fn read_forest(bytes: &[u8]) -> Result<RandomForest> {
    let corrupt = |m: &str| Error::CorruptModel(m.to_string());
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[..nl]).map_err(|_| corrupt("unreadable header"))?;
    if header.format != FORMAT {
        return Err(corrupt("not a forest model file"));
    }
    if header.version != VERSION {
        return Err(Error::ModelVersion {
            found: header.version,
            expected: VERSION,
        });
    }
    let rest = &bytes[nl + 1..];
    let payload = rest.strip_suffix(b"\n").unwrap_or(rest);
    if payload.len() != header.bytes {
        return Err(corrupt("payload length does not match header (truncated?)"));
    }
    if hex::encode(Sha256::digest(payload)) != header.sha256 {
        return Err(corrupt("checksum mismatch"));
    }
    let forest: RandomForest =
        serde_json::from_slice(payload).map_err(|e| Error::CorruptModel(e.to_string()))?;
    forest.validate()?;
    Ok(forest)
}

pub fn save_forest(f: &RandomForest, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_forest(f)?)?;
    Ok(())
}

pub fn load_forest(path: impl AsRef<Path>) -> Result<RandomForest> {
    read_forest(&fs::read(path)?)
}
