mod common;

use std::sync::Arc;

use common::{axis_centers, blobs, rows_from};
use embedscape::eval::{default_report_specs, layout_quality_report};
use embedscape::store::Store;
use embedscape::{AnnotationSource, Error, ExportFormat, ExportOptions, IngestRow, Registry, ReducerSpec};

fn store(dir: &std::path::Path) -> Store {
    Store::open(dir, Registry::with_defaults()).unwrap()
}

fn seeded(store: &Store, name: &str, n: usize) {
    let (data, labels) = blobs(&axis_centers(3, 6, 30.0), n / 3, 1.0, 11);
    store.create_project(name, 6, vec!["a".into(), "b".into(), "c".into()]).unwrap();
    store.ingest(name, rows_from(&data, 6, &labels, &["a", "b", "c"], "r")).unwrap();
}

#[test]
fn injected_records_are_hidden_from_default_export() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    seeded(&s, "p", 30);
    let pool: Vec<IngestRow> = (0..10).map(|i| IngestRow::new(format!("x{i}"), vec![100.0 + i as f32; 6]).with_label("a")).collect();
    let plain = s.export("p", ExportFormat::Ndjson, ExportOptions::default()).unwrap();
    let ids = s.inject("p", &pool, 4, 3..=5).unwrap();
    // Same seed, same picks: the ids already exist.
    assert!(matches!(s.inject("p", &pool, 4, 3..=5), Err(Error::DuplicateId(_))));
    assert_eq!(s.export("p", ExportFormat::Ndjson, ExportOptions::default()).unwrap(), plain);
    let all = String::from_utf8(s.export("p", ExportFormat::Ndjson, ExportOptions { include_foreign: true }).unwrap()).unwrap();
    for id in &ids {
        assert!(all.contains(&format!("\"id\":\"{id}\"")));
    }
    let snap = s.snapshot("p").unwrap();
    assert_eq!(snap.data.len(), 30 + ids.len());
    // Foreign rows survive a restart with their flag.
    drop(s);
    let s = store(tmp.path());
    assert_eq!(s.export("p", ExportFormat::Ndjson, ExportOptions::default()).unwrap(), plain);
    assert_eq!(s.snapshot("p").unwrap().data.records().iter().filter(|r| r.foreign).count(), ids.len());
}

#[test]
fn concurrent_fits_and_annotations() {
    let tmp = tempfile::tempdir().unwrap();
    let s = Arc::new(store(tmp.path()));
    for p in ["p1", "p2", "p3"] {
        seeded(&s, p, 300);
    }
    let handles: Vec<_> = ["p1", "p2", "p3", "p1"]
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let s = s.clone();
            std::thread::spawn(move || {
                let spec = ReducerSpec::new(if i % 2 == 0 { "hnne" } else { "pca" }, 3);
                let l = s.fit_layout(p, &spec).unwrap();
                s.annotate(p, &[format!("r{:05}", i)], "b", AnnotationSource::SinglePick).unwrap();
                l.id().to_string()
            })
        })
        .collect();
    let ids: Vec<String> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    for id in &ids {
        assert!(s.layout(id).is_ok());
    }
    assert_eq!(s.snapshot("p1").unwrap().data.project().revision, 2);
}

#[test]
fn reports_persist() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    seeded(&s, "p", 90);
    let snap = s.snapshot("p").unwrap();
    let report = layout_quality_report(&snap.data, s.registry(), &default_report_specs(), 10).unwrap();
    let id = s.save_report("p", report.clone()).unwrap();
    drop(s);
    let s = store(tmp.path());
    assert_eq!(*s.report(&id).unwrap(), report);
}

#[test]
fn stale_layout_files_are_discarded_on_open() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    seeded(&s, "p", 30);
    let l = s.fit_layout("p", &ReducerSpec::new("pca", 2)).unwrap();
    let layouts = tmp.path().join("projects/p/layouts");
    let saved: Vec<(std::path::PathBuf, Vec<u8>)> = std::fs::read_dir(&layouts)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let b = std::fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    s.ingest("p", vec![IngestRow::new("late", vec![0.0; 6])]).unwrap();
    drop(s);
    // Simulate a crash between rewriting records and deleting layouts.
    for (p, b) in saved {
        std::fs::write(p, b).unwrap();
    }
    let s = store(tmp.path());
    assert!(matches!(s.layout(l.id()), Err(Error::UnknownLayout(_))));
    assert_eq!(std::fs::read_dir(&layouts).unwrap().count(), 0);
}

#[test]
fn names_resolve_to_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    let p = s.create_project("Sports & News", 4, vec!["x".into()]).unwrap();
    assert_ne!(p.id, p.name);
    assert_eq!(s.resolve("Sports & News").unwrap(), p.id);
    assert_eq!(s.resolve(&p.id).unwrap(), p.id);
    assert!(matches!(s.create_project("Sports & News", 4, vec![]), Err(Error::AlreadyExists(_))));
    assert!(matches!(s.resolve("nope"), Err(Error::UnknownProject(_))));
}
