use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::project::{AnnotationSource, Modality, ProjectData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Ndjson,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "ndjson" | "jsonl" => Ok(ExportFormat::Ndjson),
            _ => Err(Error::UnsupportedFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOptions {
    /// Include records added by corruption injection.
    pub include_foreign: bool,
}

pub const CSV_HEADER: [&str; 4] = ["record_id", "label", "revision", "source"];

#[derive(Serialize)]
struct NdjsonOut<'a> {
    id: &'a str,
    vector: &'a [f32],
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    modality: Modality,
    payload: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    revision: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<AnnotationSource>,
}

/// Serializes current annotations, ordered by record id.
///
/// CSV lists annotated records only. NDJSON mirrors the ingestion schema for
/// every record, with `label` taken from the current annotation.
pub fn export_annotations(
    data: &ProjectData,
    format: ExportFormat,
    opts: ExportOptions,
) -> Result<Vec<u8>> {
    let mut order: Vec<usize> = (0..data.len())
        .filter(|&i| opts.include_foreign || !data.records()[i].foreign)
        .collect();
    order.sort_by(|&a, &b| data.records()[a].record_id.cmp(&data.records()[b].record_id));
    let project = data.project();

    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).map_err(csv_err)?;
            for i in order {
                let Some(cur) = data.current_label_at(i) else {
                    continue;
                };
                let rec = &data.records()[i];
                w.write_record([
                    rec.record_id.as_str(),
                    project.label_name(cur.label).unwrap_or_default(),
                    &cur.revision.to_string(),
                    cur.source.as_str(),
                ])
                .map_err(csv_err)?;
            }
            w.into_inner()
                .map_err(|e| Error::InvalidInput(e.to_string()))
        }
        ExportFormat::Ndjson => {
            let mut out = Vec::new();
            for i in order {
                let rec = &data.records()[i];
                let cur = data.current_label_at(i);
                let line = NdjsonOut {
                    id: &rec.record_id,
                    vector: data.matrix().row(i),
                    label: cur.and_then(|c| project.label_name(c.label)),
                    modality: rec.modality,
                    payload: &rec.payload,
                    revision: cur.map(|c| c.revision),
                    source: cur.map(|c| c.source),
                };
                serde_json::to_writer(&mut out, &line)
                    .map_err(|e| Error::InvalidInput(e.to_string()))?;
                out.push(b'\n');
            }
            Ok(out)
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::malformed("csv", e.to_string())
}

#[derive(Deserialize)]
struct NdjsonLabelLine {
    id: String,
    #[serde(default)]
    label: Option<String>,
}

/// Applies an exported annotation file to `data` with source `import`.
/// Records are grouped by label; each group becomes one revision.
/// Returns the number of records labelled.
pub fn import_annotations(data: &mut ProjectData, format: ExportFormat, bytes: &[u8]) -> Result<usize> {
    let mut by_label: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut push = |data: &ProjectData, id: String, label: &str| -> Result<()> {
        let idx = data
            .project()
            .label_index(label)
            .ok_or_else(|| Error::InvalidLabel(label.to_string()))?;
        if data.record_index(&id).is_none() {
            return Err(Error::UnknownRecord(id));
        }
        by_label.entry(idx).or_default().push(id);
        Ok(())
    };

    match format {
        ExportFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(bytes);
            let headers = rdr.headers().map_err(csv_err)?.clone();
            if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
                return Err(Error::malformed("csv", "unexpected header"));
            }
            for row in rdr.records() {
                let row = row.map_err(csv_err)?;
                push(data, row[0].to_string(), &row[1])?;
            }
        }
        ExportFormat::Ndjson => {
            for (n, line) in bytes.split(|b| *b == b'\n').enumerate() {
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                let l: NdjsonLabelLine = serde_json::from_slice(line)
                    .map_err(|e| Error::malformed("ndjson", format!("line {}: {e}", n + 1)))?;
                if let Some(label) = l.label {
                    push(data, l.id, &label)?;
                }
            }
        }
    }

    let total = by_label.values().map(Vec::len).sum();
    for (label, ids) in by_label {
        data.apply_annotation(&ids, label, AnnotationSource::Import)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IngestRow, Project};

    fn fixture() -> ProjectData {
        let p = Project::new("p".into(), "p", 2, vec!["a".into(), "b".into()]).unwrap();
        let mut d = ProjectData::new(p).unwrap();
        d.ingest(vec![
            IngestRow::new("r2", vec![1.0, 2.0]),
            IngestRow::new("r1", vec![0.5, -1.0]),
            IngestRow::new("r3", vec![0.0, 0.0]),
        ])
        .unwrap();
        d
    }

    #[test]
    fn csv_header_only_when_nothing_annotated() {
        let d = fixture();
        let out = export_annotations(&d, ExportFormat::Csv, ExportOptions::default()).unwrap();
        assert_eq!(out, b"record_id,label,revision,source\n");
    }

    #[test]
    fn csv_rows_sorted_by_record_id() {
        let mut d = fixture();
        d.apply_annotation(&["r2".into(), "r1".into()], 1, AnnotationSource::SphereSelect)
            .unwrap();
        let out = export_annotations(&d, ExportFormat::Csv, ExportOptions::default()).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "record_id,label,revision,source\nr1,b,1,sphere_select\nr2,b,1,sphere_select\n"
        );
    }

    #[test]
    fn ndjson_mirrors_ingest_schema() {
        let mut d = fixture();
        d.apply_annotation(&["r3".into()], 0, AnnotationSource::SinglePick)
            .unwrap();
        let out = export_annotations(&d, ExportFormat::Ndjson, ExportOptions::default()).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            r#"{"id":"r1","vector":[0.5,-1.0],"modality":"text","payload":""}"#
        );
        assert_eq!(
            lines[2],
            r#"{"id":"r3","vector":[0.0,0.0],"label":"a","modality":"text","payload":"","revision":1,"source":"single_pick"}"#
        );
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(
            "xml".parse::<ExportFormat>(),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn round_trip_reproduces_current_labels() {
        for format in [ExportFormat::Csv, ExportFormat::Ndjson] {
            let mut d = fixture();
            d.apply_annotation(&["r1".into(), "r2".into()], 0, AnnotationSource::SphereSelect)
                .unwrap();
            d.apply_annotation(&["r2".into()], 1, AnnotationSource::SinglePick)
                .unwrap();
            let bytes = export_annotations(&d, format, ExportOptions::default()).unwrap();

            let mut fresh = fixture();
            assert_eq!(import_annotations(&mut fresh, format, &bytes).unwrap(), 2);
            let labels = |p: &ProjectData| {
                p.current_labels()
                    .into_iter()
                    .map(|(k, v)| (k, v.label))
                    .collect::<Vec<_>>()
            };
            assert_eq!(labels(&fresh), labels(&d));
        }
    }
}
