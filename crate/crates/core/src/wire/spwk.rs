use serde::{Deserialize, Serialize};

use super::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{IngestRow, Modality};

pub const SPWK_MAGIC: &[u8; 4] = b"SPWK";
pub const SPWK_VERSION: u32 = 1;

/// Per-record metadata object, in row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub modality: Modality,
    #[serde(default)]
    pub payload: String,
    /// Only ever written by the store.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub foreign: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpwkFile {
    pub dim: usize,
    pub vectors: Vec<f32>,
    pub meta: Vec<RecordMeta>,
}

impl SpwkFile {
    pub fn count(&self) -> usize {
        self.meta.len()
    }

    pub fn from_rows(dim: usize, rows: &[IngestRow]) -> Result<Self> {
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        let mut meta = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(Error::DimMismatch {
                    row: i,
                    expected: dim,
                    actual: r.vector.len(),
                });
            }
            vectors.extend_from_slice(&r.vector);
            meta.push(RecordMeta {
                id: r.id.clone(),
                label: r.label.clone(),
                modality: r.modality,
                payload: r.payload.clone(),
                foreign: r.foreign,
            });
        }
        Ok(SpwkFile { dim, vectors, meta })
    }

    /// Splits into ingestion rows. `keep_foreign` preserves the store-only
    /// foreign marker; external uploads always clear it.
    pub fn into_rows(self, keep_foreign: bool) -> Vec<IngestRow> {
        let dim = self.dim;
        self.meta
            .into_iter()
            .zip(self.vectors.chunks_exact(dim.max(1)))
            .map(|(m, v)| IngestRow {
                id: m.id,
                vector: v.to_vec(),
                label: m.label,
                modality: m.modality,
                payload: m.payload,
                foreign: keep_foreign && m.foreign,
            })
            .collect()
    }
}

pub fn encode_spwk(file: &SpwkFile) -> Vec<u8> {
    let meta = serde_json::to_vec(&file.meta).expect("in-memory serialization");
    let mut w = Writer::with_capacity(28 + file.vectors.len() * 4 + meta.len());
    w.bytes(SPWK_MAGIC)
        .u32(SPWK_VERSION)
        .u32(file.dim as u32)
        .u64(file.count() as u64)
        .f32s(&file.vectors)
        .u64(meta.len() as u64)
        .bytes(&meta);
    w.buf
}

pub fn decode_spwk(bytes: &[u8]) -> Result<SpwkFile> {
    let mut r = Reader::new(bytes, "SPWK");
    r.magic(SPWK_MAGIC)?;
    let version = r.u32()?;
    if version != SPWK_VERSION {
        return Err(Error::malformed("SPWK", format!("unsupported version {version}")));
    }
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::malformed("SPWK", "dimension is zero"));
    }
    let count = r.len_u64()?;
    let total = count
        .checked_mul(dim)
        .ok_or_else(|| Error::malformed("SPWK", "length overflow"))?;
    let vectors = r.f32s(total)?;
    let meta_len = r.len_u64()?;
    let meta: Vec<RecordMeta> = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::malformed("SPWK", format!("metadata: {e}")))?;
    r.finish()?;
    if meta.len() != count {
        return Err(Error::malformed(
            "SPWK",
            format!("{count} rows but {} metadata objects", meta.len()),
        ));
    }
    Ok(SpwkFile { dim, vectors, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let f = SpwkFile {
            dim: 2,
            vectors: vec![1.0, 2.0],
            meta: vec![RecordMeta {
                id: "a".into(),
                label: None,
                modality: Modality::Text,
                payload: "hi".into(),
                foreign: false,
            }],
        };
        let b = encode_spwk(&f);
        assert_eq!(&b[0..4], b"SPWK");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 1);
        assert_eq!(f32::from_le_bytes(b[20..24].try_into().unwrap()), 1.0);
        let meta = br#"[{"id":"a","modality":"text","payload":"hi"}]"#;
        assert_eq!(u64::from_le_bytes(b[28..36].try_into().unwrap()), meta.len() as u64);
        assert_eq!(&b[36..], meta);
        assert_eq!(decode_spwk(&b).unwrap(), f);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let f = SpwkFile {
            dim: 1,
            vectors: vec![1.0],
            meta: vec![RecordMeta {
                id: "a".into(),
                label: None,
                modality: Modality::Text,
                payload: String::new(),
                foreign: false,
            }],
        };
        let b = encode_spwk(&f);
        assert!(decode_spwk(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_spwk(&bad).is_err());
        let mut extra = b;
        extra.push(0);
        assert!(decode_spwk(&extra).is_err());
    }

    #[test]
    fn foreign_marker_is_cleared_for_uploads() {
        let f = SpwkFile {
            dim: 1,
            vectors: vec![1.0],
            meta: vec![RecordMeta {
                id: "a".into(),
                label: None,
                modality: Modality::Text,
                payload: String::new(),
                foreign: true,
            }],
        };
        assert!(f.clone().into_rows(true)[0].foreign);
        assert!(!f.into_rows(false)[0].foreign);
    }
}
