use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IngestRow, Modality};

#[derive(Deserialize)]
struct Line {
    id: String,
    vector: Vec<f32>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    modality: Modality,
    #[serde(default)]
    payload: String,
}

#[derive(Serialize)]
struct LineOut<'a> {
    id: &'a str,
    vector: &'a [f32],
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    modality: Modality,
    payload: &'a str,
}

/// Parses NDJSON ingestion lines. Blank lines are skipped.
pub fn parse_ndjson(bytes: &[u8]) -> Result<Vec<IngestRow>> {
    let mut rows = Vec::new();
    for (n, line) in bytes.split(|b| *b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let l: Line = serde_json::from_slice(line)
            .map_err(|e| Error::malformed("ndjson", format!("line {}: {e}", n + 1)))?;
        rows.push(IngestRow {
            id: l.id,
            vector: l.vector,
            label: l.label,
            modality: l.modality,
            payload: l.payload,
            foreign: false,
        });
    }
    Ok(rows)
}

pub fn write_ndjson(rows: &[IngestRow]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        let line = LineOut {
            id: &r.id,
            vector: &r.vector,
            label: r.label.as_deref(),
            modality: r.modality,
            payload: &r.payload,
        };
        serde_json::to_writer(&mut out, &line).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}
