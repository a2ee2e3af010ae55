mod common;

use common::golden;
use embedscape::store::Store;
use embedscape::wire::{decode_points, decode_spwk, encode_points, encode_spwk, parse_ingest, parse_ingest_as, points_len, SpwkFile};
use embedscape::{ExportFormat, ExportOptions, Registry};

fn read(name: &str) -> Vec<u8> {
    std::fs::read(golden(name)).unwrap()
}

fn golden_points(out_dim: usize) -> Vec<f32> {
    let v: serde_json::Value = serde_json::from_slice(&read("points.json")).unwrap();
    v[out_dim.to_string()]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|p| p.as_array().unwrap().iter().map(|x| x.as_f64().unwrap() as f32).collect::<Vec<_>>())
        .collect()
}

#[test]
fn spwk_decode_encode_is_byte_exact() {
    let bytes = read("records.spwk");
    let file = decode_spwk(&bytes).unwrap();
    assert_eq!(file.dim, 3);
    assert_eq!(file.count(), 4);
    assert_eq!(file.meta[2].payload, "Café \"quoted\"\nline");
    assert_eq!(encode_spwk(&file), bytes);
}

#[test]
fn ndjson_and_spwk_goldens_agree() {
    let rows = parse_ingest(&read("records.ndjson")).unwrap();
    let from_ndjson = encode_spwk(&SpwkFile::from_rows(3, &rows).unwrap());
    assert_eq!(from_ndjson, read("records.spwk"));
    let via_spwk = parse_ingest_as("application/octet-stream", &read("records.spwk")).unwrap();
    assert_eq!(via_spwk, rows);
}

#[test]
fn spwp_goldens_round_trip() {
    for d in [2, 3] {
        let bytes = read(&format!("points_{d}d.spwp"));
        let ps = decode_points(&bytes).unwrap();
        assert_eq!(ps.out_dim, d);
        assert_eq!(ps.coords, golden_points(d));
        assert_eq!(bytes.len(), points_len(ps.count(), d));
        assert_eq!(encode_points(d, &ps.coords), bytes);
    }
}

#[test]
fn truncated_and_trailing_bytes_are_rejected() {
    let bytes = read("records.spwk");
    for cut in [3, 10, 27, bytes.len() - 1] {
        assert!(decode_spwk(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_spwk(&extra).is_err());
    let p = read("points_2d.spwp");
    assert!(decode_points(&p[..p.len() - 1]).is_err());
}

#[test]
fn store_serves_golden_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let store = Store::open(tmp.path(), Registry::with_defaults()).unwrap();
    store.create_project("g", 3, vec!["politics".into(), "sports".into()]).unwrap();
    let rows = parse_ingest(&read("records.spwk")).unwrap();
    assert_eq!(store.ingest("g", rows).unwrap(), 4);
    for d in [2, 3] {
        let l = store.import_layout("g", golden_points(d), d).unwrap();
        assert_eq!(l.points_bytes(), read(&format!("points_{d}d.spwp")));
    }
    let export = store.export("g", ExportFormat::Ndjson, ExportOptions::default()).unwrap();
    assert_eq!(parse_ingest(&export).unwrap().len(), 4);
}
