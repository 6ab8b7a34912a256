//! Checkpoint files.
//!
//! Layout: the magic bytes `LAE1`, a little-endian `u64` header length, a
//! JSON header, then every parameter as little-endian `f32` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{LeadAe, ModelConfig};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LAE1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into the payload.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub params: Vec<ParamEntry>,
    /// Free-form training metadata; not used by the loader.
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn to_bytes(model: &LeadAe, meta: serde_json::Value) -> Vec<u8> {
    let mut offset = 0;
    let params = model
        .store
        .iter()
        .map(|p| {
            let e = ParamEntry {
                name: p.name.clone(),
                shape: [p.rows, p.cols],
                offset,
                len: p.value.len(),
            };
            offset += 4 * p.value.len();
            e
        })
        .collect();
    let header = Header {
        config: model.config.clone(),
        params,
        meta,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.store.iter() {
        for &v in &p.value {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing LAE1 magic"));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let json = bytes
        .get(12..12usize.saturating_add(len))
        .ok_or_else(|| bad("header length exceeds file"))?;
    let header: Header = serde_json::from_slice(json)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    Ok((header, &bytes[12 + len..]))
}

/// Loads a checkpoint, checking every parameter against the shapes implied
/// by its config.
pub fn from_bytes(bytes: &[u8]) -> Result<LeadAe> {
    let (header, payload) = read_header(bytes)?;
    let mut model = LeadAe::new(header.config.clone(), 0)?;
    if header.params.len() != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, config implies {}",
            header.params.len(),
            model.store.len()
        )));
    }
    for (entry, p) in header.params.iter().zip(model.store.iter_mut()) {
        if entry.name != p.name || entry.shape != [p.rows, p.cols] || entry.len != p.value.len() {
            return Err(Error::Checkpoint(format!(
                "parameter {} {:?} does not match expected {} {:?}",
                entry.name,
                entry.shape,
                p.name,
                [p.rows, p.cols]
            )));
        }
        let raw = payload
            .get(entry.offset..entry.offset + 4 * entry.len)
            .ok_or_else(|| Error::Checkpoint(format!("payload truncated at {}", entry.name)))?;
        for (v, b) in p.value.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap()) as f64;
        }
    }
    if !model.store.all_finite() {
        return Err(Error::Checkpoint("non-finite parameter values".into()));
    }
    Ok(model)
}

pub fn save(model: &LeadAe, meta: serde_json::Value, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model, meta))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<LeadAe> {
    from_bytes(&std::fs::read(path)?)
}

/// Loads and additionally requires the stored config to equal `expected`.
pub fn load_compatible(path: &Path, expected: &ModelConfig) -> Result<LeadAe> {
    let model = load(path)?;
    if &model.config != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint config {:?} does not match requested {:?}",
            model.config, expected
        )));
    }
    Ok(model)
}

/// Rounds every parameter to `f32` precision, as a save/load cycle would.
pub fn round_to_storage(model: &mut LeadAe) {
    for p in model.store.iter_mut() {
        for v in &mut p.value {
            *v = *v as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            layers: 1,
            d_model: 8,
            heads: 2,
            max_len: 16,
            max_beat: 8,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_exact_after_rounding() {
        let mut m = LeadAe::new(tiny(), 3).unwrap();
        round_to_storage(&mut m);
        let bytes = to_bytes(&m, serde_json::json!({"phase": "test"}));
        assert_eq!(&bytes[..4], b"LAE1");
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.store, m.store);
        assert_eq!(to_bytes(&back, serde_json::json!({"phase": "test"})), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let m = LeadAe::new(tiny(), 3).unwrap();
        let bytes = to_bytes(&m, serde_json::Value::Null);
        assert!(matches!(from_bytes(b"LAE0xxxxxxxxxxxx"), Err(Error::Checkpoint(_))));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));

        let (mut header, payload) = read_header(&bytes).unwrap();
        header.params[0].shape = [1, 1];
        let json = serde_json::to_vec(&header).unwrap();
        let mut forged = MAGIC.to_vec();
        forged.extend_from_slice(&(json.len() as u64).to_le_bytes());
        forged.extend_from_slice(&json);
        forged.extend_from_slice(payload);
        assert!(matches!(from_bytes(&forged), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn config_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lae");
        save(&LeadAe::new(tiny(), 1).unwrap(), serde_json::Value::Null, &path).unwrap();
        let other = ModelConfig { d_model: 16, ..tiny() };
        assert!(matches!(load_compatible(&path, &other), Err(Error::Checkpoint(_))));
        assert!(load_compatible(&path, &tiny()).is_ok());
    }
}
