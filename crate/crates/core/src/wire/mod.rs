//! Bit-exact file and stream formats.
//!
//! * NDJSON ingestion: one `{"id","vector","label"?,"modality","payload"}` object per line.
//! * `SPWK`: binary ingestion (`"SPWK"`, u32 version, u32 dim, u64 count,
//!   count×dim f32, u64 metadata length, UTF-8 JSON metadata array).
//! * `SPWP`: layout point stream (`"SPWP"`, u32 out_dim, u64 count, f32 coords).
//!
//! All integers and floats are little-endian.

pub(crate) mod bytes;
mod ndjson;
mod points;
mod spwk;

pub use ndjson::{parse_ndjson, write_ndjson};
pub use points::{decode_points, encode_points, points_len, PointStream, SPWP_MAGIC};
pub use spwk::{decode_spwk, encode_spwk, RecordMeta, SpwkFile, SPWK_MAGIC, SPWK_VERSION};

use crate::error::{Error, Result};
use crate::model::IngestRow;

/// Parses an ingestion payload, picking the format from its leading bytes.
pub fn parse_ingest(bytes: &[u8]) -> Result<Vec<IngestRow>> {
    if bytes.starts_with(SPWK_MAGIC) {
        Ok(decode_spwk(bytes)?.into_rows(false))
    } else {
        parse_ndjson(bytes)
    }
}

/// Parses an ingestion payload in an explicitly named format
/// (`ndjson` or `spwk`, also accepting the matching content types).
pub fn parse_ingest_as(format: &str, bytes: &[u8]) -> Result<Vec<IngestRow>> {
    let f = format.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    match f.as_str() {
        "ndjson" | "jsonl" | "application/x-ndjson" | "application/ndjson"
        | "application/jsonl" | "application/json" => parse_ndjson(bytes),
        "spwk" | "application/octet-stream" | "application/x-spwk" => {
            Ok(decode_spwk(bytes)?.into_rows(false))
        }
        _ => Err(Error::UnsupportedFormat(format.to_string())),
    }
}
