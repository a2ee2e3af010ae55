//! On-disk project store.
//!
//! ```text
//! DATA_DIR/projects/<project_id>/
//!     project.json          project metadata
//!     records.spwk          vectors + record metadata (SPWK)
//!     annotations.ndjson    annotation history, one entry per line
//!     layouts/<id>.json     layout metadata and spec
//!     layouts/<id>.spwp     layout coordinates (SPWP)
//!     layouts/<id>.spwr     fitted reducer state (SPWR)
//!     reports/<id>.json     layout-quality reports
//! ```
//!
//! Every file is replaced atomically (write to a temporary sibling, fsync,
//! rename). Each project has a single writer at a time; readers work on
//! immutable snapshots and never block on writers. A mutation validates
//! first, writes its files and only then publishes the new snapshot, so a
//! rejected request leaves both memory and disk untouched.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{inject_corruption, QualityReport};
use crate::hash::Fnv1a;
use crate::model::{
    export_annotations, import_annotations, Annotation, AnnotationOutcome, AnnotationSource,
    EmbeddingMatrix, ExportFormat, ExportOptions, IngestRow, Layout, Project, ProjectData, Record,
};
use crate::query::LayoutIndex;
use crate::reducers::{import_layout, FittedReducer, ReducerSpec, Registry};
use crate::selection::{self, Selector};
use crate::wire::{decode_points, decode_spwk, encode_points, encode_spwk, RecordMeta, SpwkFile};

/// A fitted layout with its reducer and a lazily built spatial index.
#[derive(Debug)]
pub struct StoredLayout {
    pub project_id: String,
    pub spec: ReducerSpec,
    pub layout: Layout,
    pub fitted: FittedReducer,
    index: OnceLock<Arc<LayoutIndex>>,
}

impl StoredLayout {
    fn new(project_id: &str, spec: ReducerSpec, layout: Layout, fitted: FittedReducer) -> Self {
        StoredLayout {
            project_id: project_id.to_string(),
            spec,
            layout,
            fitted,
            index: OnceLock::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.layout.layout_id
    }

    /// Nearest-point index over the layout; `data` must be the snapshot the
    /// layout belongs to.
    pub fn index(&self, data: &ProjectData) -> Arc<LayoutIndex> {
        self.index
            .get_or_init(|| {
                Arc::new(LayoutIndex::new(
                    self.layout.coords.clone(),
                    self.layout.out_dim,
                    data.id_ranks().to_vec(),
                ))
            })
            .clone()
    }

    /// Raw `SPWP` point stream.
    pub fn points_bytes(&self) -> Vec<u8> {
        encode_points(self.layout.out_dim, &self.layout.coords)
    }
}

/// Immutable view of one project.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub data: ProjectData,
    pub layouts: BTreeMap<String, Arc<StoredLayout>>,
    pub reports: BTreeMap<String, Arc<QualityReport>>,
}

struct ProjectSlot {
    dir: PathBuf,
    state: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl ProjectSlot {
    fn snapshot(&self) -> Arc<Snapshot> {
        self.state.read().clone()
    }
}

pub struct Store {
    root: PathBuf,
    registry: Registry,
    projects: RwLock<BTreeMap<String, Arc<ProjectSlot>>>,
    create_lock: Mutex<()>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct LayoutMeta {
    #[serde(flatten)]
    layout: Layout,
    spec: ReducerSpec,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root` and loads every
    /// project. Any unreadable file aborts with [`Error::CorruptStore`].
    pub fn open(root: impl Into<PathBuf>, registry: Registry) -> Result<Self> {
        let root = root.into();
        let projects_dir = root.join("projects");
        fs::create_dir_all(&projects_dir).map_err(|e| Error::io(&projects_dir, e))?;
        let mut projects = BTreeMap::new();
        let mut dirs: Vec<PathBuf> = fs::read_dir(&projects_dir)
            .map_err(|e| Error::io(&projects_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let snap = load_project(&dir, &registry)?;
            let id = snap.data.project().id.clone();
            projects.insert(
                id,
                Arc::new(ProjectSlot {
                    dir,
                    state: RwLock::new(Arc::new(snap)),
                    writer: Mutex::new(()),
                }),
            );
        }
        tracing::info!(root = %root.display(), projects = projects.len(), "store opened");
        Ok(Store {
            root,
            registry,
            projects: RwLock::new(projects),
            create_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn create_project(&self, name: &str, dim: usize, label_schema: Vec<String>) -> Result<Project> {
        let _guard = self.create_lock.lock();
        if name.trim().is_empty() {
            return Err(Error::InvalidArgument("project name is empty".into()));
        }
        if self.projects.read().values().any(|s| s.snapshot().data.project().name == name) {
            return Err(Error::AlreadyExists(name.to_string()));
        }
        let id = project_id(name);
        if self.projects.read().contains_key(&id) {
            return Err(Error::AlreadyExists(name.to_string()));
        }
        let project = Project::new(id.clone(), name, dim, label_schema)?;
        let data = ProjectData::new(project.clone())?;
        let dir = self.root.join("projects").join(&id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_records(&dir, &data)?;
        write_json(&dir.join("annotations.ndjson"), &[] as &[u8])?;
        // project.json last: its presence marks a complete project.
        write_json(&dir.join("project.json"), &serde_json::to_vec_pretty(&project).unwrap())?;
        let slot = ProjectSlot {
            dir,
            state: RwLock::new(Arc::new(Snapshot {
                data,
                layouts: BTreeMap::new(),
                reports: BTreeMap::new(),
            })),
            writer: Mutex::new(()),
        };
        self.projects.write().insert(id, Arc::new(slot));
        tracing::info!(project = %project.id, "project created");
        Ok(project)
    }

    pub fn list_projects(&self) -> Vec<Project> {
        self.projects
            .read()
            .values()
            .map(|s| s.snapshot().data.project().clone())
            .collect()
    }

    /// Resolves a project id, falling back to a project name.
    pub fn resolve(&self, id_or_name: &str) -> Result<String> {
        let projects = self.projects.read();
        if projects.contains_key(id_or_name) {
            return Ok(id_or_name.to_string());
        }
        projects
            .iter()
            .find(|(_, s)| s.snapshot().data.project().name == id_or_name)
            .map(|(id, _)| id.clone())
            .ok_or_else(|| Error::UnknownProject(id_or_name.to_string()))
    }

    fn slot(&self, id: &str) -> Result<Arc<ProjectSlot>> {
        let id = self.resolve(id)?;
        Ok(self.projects.read()[&id].clone())
    }

    pub fn snapshot(&self, project: &str) -> Result<Arc<Snapshot>> {
        Ok(self.slot(project)?.snapshot())
    }

    /// Runs `f` on a private copy of the project and publishes the result
    /// only if `f` (including its file writes) succeeds.
    fn mutate<T>(
        &self,
        project: &str,
        f: impl FnOnce(&Path, &mut Snapshot) -> Result<T>,
    ) -> Result<T> {
        let slot = self.slot(project)?;
        let _guard = slot.writer.lock();
        let mut next = (*slot.snapshot()).clone();
        let out = f(&slot.dir, &mut next)?;
        *slot.state.write() = Arc::new(next);
        Ok(out)
    }

    /// Appends records. Cached layouts no longer cover every record and are
    /// dropped.
    pub fn ingest(&self, project: &str, rows: Vec<IngestRow>) -> Result<usize> {
        self.mutate(project, |dir, snap| {
            let n = snap.data.ingest(rows)?;
            write_records(dir, &snap.data)?;
            drop_layouts(dir, snap)?;
            tracing::info!(project = %snap.data.project().id, count = n, "ingested");
            Ok(n)
        })
    }

    pub fn annotate(
        &self,
        project: &str,
        record_ids: &[String],
        label: &str,
        source: AnnotationSource,
    ) -> Result<AnnotationOutcome> {
        self.mutate(project, |dir, snap| {
            let out = snap.data.apply_annotation_named(record_ids, label, source)?;
            write_annotations(dir, &snap.data)?;
            Ok(out)
        })
    }

    pub fn annotate_selection(
        &self,
        layout_id: &str,
        selector: &Selector,
        label: &str,
    ) -> Result<AnnotationOutcome> {
        let (snap, stored) = self.layout(layout_id)?;
        let label_idx = snap
            .data
            .project()
            .label_index(label)
            .ok_or_else(|| Error::InvalidLabel(label.to_string()))?;
        self.mutate(&stored.project_id, |dir, snap| {
            // Re-resolve: an ingest may have dropped the layout meanwhile.
            let current = snap
                .layouts
                .get(layout_id)
                .cloned()
                .ok_or_else(|| Error::UnknownLayout(layout_id.to_string()))?;
            let revision = snap.data.project().revision;
            let out = selection::annotate_selection(&mut snap.data, &current.layout, selector, label_idx)?;
            if snap.data.project().revision != revision {
                write_annotations(dir, &snap.data)?;
            }
            Ok(out)
        })
    }

    pub fn import_annotations(&self, project: &str, format: ExportFormat, bytes: &[u8]) -> Result<usize> {
        self.mutate(project, |dir, snap| {
            let n = import_annotations(&mut snap.data, format, bytes)?;
            write_annotations(dir, &snap.data)?;
            Ok(n)
        })
    }

    pub fn export(&self, project: &str, format: ExportFormat, opts: ExportOptions) -> Result<Vec<u8>> {
        export_annotations(&self.snapshot(project)?.data, format, opts)
    }

    /// Injects foreign records (see [`inject_corruption`]).
    pub fn inject(
        &self,
        project: &str,
        pool: &[IngestRow],
        seed: u64,
        count_range: std::ops::RangeInclusive<usize>,
    ) -> Result<Vec<String>> {
        self.mutate(project, |dir, snap| {
            let ids = inject_corruption(&mut snap.data, pool, seed, count_range)?;
            write_records(dir, &snap.data)?;
            drop_layouts(dir, snap)?;
            Ok(ids)
        })
    }

    /// Fits a layout, or returns the cached one for an identical spec over
    /// identical records. The fit itself runs without holding the project's
    /// write lock.
    pub fn fit_layout(&self, project: &str, spec: &ReducerSpec) -> Result<Arc<StoredLayout>> {
        let slot = self.slot(project)?;
        loop {
            let snap = slot.snapshot();
            let pid = snap.data.project().id.clone();
            let id = store_layout_id(&pid, snap.data.matrix().fingerprint(), spec);
            if let Some(hit) = snap.layouts.get(&id) {
                return Ok(hit.clone());
            }
            let (mut layout, fitted) = self.registry.fit(snap.data.matrix(), spec)?;
            layout.layout_id = id.clone();
            let fingerprint = snap.data.matrix().fingerprint();
            let published = self.mutate(&pid, |dir, next| {
                if next.data.matrix().fingerprint() != fingerprint {
                    return Ok(None);
                }
                if let Some(hit) = next.layouts.get(&id) {
                    return Ok(Some(hit.clone()));
                }
                let stored = Arc::new(StoredLayout::new(&pid, spec.clone(), layout, fitted));
                write_layout(dir, &stored)?;
                next.layouts.insert(id.clone(), stored.clone());
                Ok(Some(stored))
            })?;
            match published {
                Some(s) => {
                    tracing::info!(project = %pid, layout = %s.id(), "layout fitted");
                    return Ok(s);
                }
                None => tracing::debug!(project = %pid, "records changed during fit, refitting"),
            }
        }
    }

    /// Stores externally computed coordinates as a layout.
    pub fn import_layout(&self, project: &str, coords: Vec<f32>, out_dim: usize) -> Result<Arc<StoredLayout>> {
        self.mutate(project, |dir, snap| {
            let pid = snap.data.project().id.clone();
            let (mut layout, fitted) = import_layout(coords, out_dim, snap.data.len())?;
            let id = store_layout_id(&pid, fitted.train_fingerprint, &fitted.spec);
            layout.layout_id = id.clone();
            let stored = Arc::new(StoredLayout::new(&pid, fitted.spec.clone(), layout, fitted));
            write_layout(dir, &stored)?;
            snap.layouts.insert(id, stored.clone());
            Ok(stored)
        })
    }

    /// Finds a layout by id across all projects.
    pub fn layout(&self, layout_id: &str) -> Result<(Arc<Snapshot>, Arc<StoredLayout>)> {
        let slots: Vec<Arc<ProjectSlot>> = self.projects.read().values().cloned().collect();
        for slot in slots {
            let snap = slot.snapshot();
            if let Some(l) = snap.layouts.get(layout_id).cloned() {
                return Ok((snap, l));
            }
        }
        Err(Error::UnknownLayout(layout_id.to_string()))
    }

    pub fn save_report(&self, project: &str, report: QualityReport) -> Result<String> {
        self.mutate(project, |dir, snap| {
            let id = format!("{}-r{}", snap.data.project().id, snap.reports.len() + 1);
            let path = dir.join("reports").join(format!("{id}.json"));
            write_json(&path, &report.to_json())?;
            snap.reports.insert(id.clone(), Arc::new(report));
            Ok(id)
        })
    }

    pub fn report(&self, report_id: &str) -> Result<Arc<QualityReport>> {
        let slots: Vec<Arc<ProjectSlot>> = self.projects.read().values().cloned().collect();
        slots
            .iter()
            .find_map(|s| s.snapshot().reports.get(report_id).cloned())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown report `{report_id}`")))
    }

    /// SHA-256 over every file under the store root (relative path and
    /// contents, in path order), as lowercase hex.
    pub fn checksum(&self) -> Result<String> {
        checksum_dir(&self.root)
    }
}

/// SHA-256 over every file below `root`, see [`Store::checksum`].
pub fn checksum_dir(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for path in files {
        let rel = path.strip_prefix(root).unwrap_or(&path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Filesystem-safe id derived from the project name.
fn project_id(name: &str) -> String {
    let slug: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '-' })
        .take(40)
        .collect();
    if slug == name && !slug.is_empty() {
        slug
    } else {
        let mut h = Fnv1a::new();
        h.write(name.as_bytes());
        format!("{}-{:08x}", slug.trim_matches('-'), h.finish() as u32)
            .trim_start_matches('-')
            .to_string()
    }
}

fn store_layout_id(project_id: &str, fingerprint: u64, spec: &ReducerSpec) -> String {
    let mut h = Fnv1a::new();
    h.write(project_id.as_bytes());
    h.write(&[0]);
    h.write_u64(fingerprint);
    h.write(spec.cache_key().as_bytes());
    format!("{}-{}d-{:016x}", spec.name, spec.out_dim, h.finish())
}

fn corrupt(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::CorruptStore {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

fn write_json(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write(path, bytes)
}

/// Writes `bytes` to a temporary sibling, syncs it and renames it over `path`.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("store paths have parents");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().unwrap().to_string_lossy()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_records(dir: &Path, data: &ProjectData) -> Result<()> {
    let project = data.project();
    let meta = data
        .records()
        .iter()
        .map(|r| RecordMeta {
            id: r.record_id.clone(),
            label: r.label_gt.and_then(|l| project.label_name(l)).map(String::from),
            modality: r.modality,
            payload: r.payload.clone(),
            foreign: r.foreign,
        })
        .collect();
    let file = SpwkFile {
        dim: project.dim,
        vectors: data.matrix().as_slice().to_vec(),
        meta,
    };
    atomic_write(&dir.join("records.spwk"), &encode_spwk(&file))
}

fn write_annotations(dir: &Path, data: &ProjectData) -> Result<()> {
    let mut out = Vec::new();
    for a in data.history() {
        serde_json::to_writer(&mut out, a).expect("annotation serializes");
        out.push(b'\n');
    }
    atomic_write(&dir.join("annotations.ndjson"), &out)?;
    write_json(
        &dir.join("project.json"),
        &serde_json::to_vec_pretty(data.project()).expect("project serializes"),
    )
}

fn write_layout(dir: &Path, stored: &StoredLayout) -> Result<()> {
    let base = dir.join("layouts");
    let id = stored.id();
    atomic_write(&base.join(format!("{id}.spwp")), &stored.points_bytes())?;
    atomic_write(&base.join(format!("{id}.spwr")), &stored.fitted.to_bytes())?;
    let meta = LayoutMeta {
        layout: stored.layout.clone(),
        spec: stored.spec.clone(),
    };
    // Metadata last: a layout without it is ignored on load.
    atomic_write(
        &base.join(format!("{id}.json")),
        &serde_json::to_vec_pretty(&meta).expect("layout serializes"),
    )
}

fn drop_layouts(dir: &Path, snap: &mut Snapshot) -> Result<()> {
    let base = dir.join("layouts");
    for id in std::mem::take(&mut snap.layouts).into_keys() {
        for ext in ["json", "spwp", "spwr"] {
            let p = base.join(format!("{id}.{ext}"));
            match fs::remove_file(&p) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(&p, e)),
            }
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| corrupt(path, e))
}

fn load_project(dir: &Path, registry: &Registry) -> Result<Snapshot> {
    // Leftovers of interrupted writes.
    remove_temp_files(dir)?;

    let pj = dir.join("project.json");
    let mut project: Project = serde_json::from_slice(&read(&pj)?).map_err(|e| corrupt(&pj, e))?;

    let rp = dir.join("records.spwk");
    let file = decode_spwk(&read(&rp)?).map_err(|e| corrupt(&rp, e))?;
    if file.dim != project.dim {
        return Err(corrupt(&rp, format!("dimension {} but project has {}", file.dim, project.dim)));
    }
    let mut records = Vec::with_capacity(file.meta.len());
    for (i, m) in file.meta.iter().enumerate() {
        let label_gt = match &m.label {
            Some(l) => Some(
                project
                    .label_index(l)
                    .ok_or_else(|| corrupt(&rp, format!("record `{}` has unknown label `{l}`", m.id)))?,
            ),
            None => None,
        };
        records.push(Record {
            record_id: m.id.clone(),
            label_gt,
            modality: m.modality,
            payload: m.payload.clone(),
            ingest_order: i,
            foreign: m.foreign,
        });
    }
    let matrix = EmbeddingMatrix::from_rows(file.dim, file.vectors).map_err(|e| corrupt(&rp, e))?;

    let ap = dir.join("annotations.ndjson");
    let raw = read(&ap)?;
    let mut history: Vec<Annotation> = Vec::new();
    for (n, line) in raw.split(|b| *b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let a: Annotation =
            serde_json::from_slice(line).map_err(|e| corrupt(&ap, format!("line {}: {e}", n + 1)))?;
        if history.last().is_some_and(|p| p.revision >= a.revision) {
            return Err(corrupt(&ap, format!("line {}: revisions must increase", n + 1)));
        }
        history.push(a);
    }
    if let Some(last) = history.last() {
        project.revision = project.revision.max(last.revision);
    }
    let data = ProjectData::from_parts(project, records, matrix, history).map_err(|e| corrupt(dir, e))?;
    let pid = data.project().id.clone();

    let mut layouts = BTreeMap::new();
    let ld = dir.join("layouts");
    for path in sorted_entries(&ld, "json")? {
        let meta: LayoutMeta = serde_json::from_slice(&read(&path)?).map_err(|e| corrupt(&path, e))?;
        let id = meta.layout.layout_id.clone();
        let pp = ld.join(format!("{id}.spwp"));
        let points = decode_points(&read(&pp)?).map_err(|e| corrupt(&pp, e))?;
        let rp = ld.join(format!("{id}.spwr"));
        let fitted = registry.decode(&read(&rp)?).map_err(|e| corrupt(&rp, e))?;
        if points.count() != data.len() {
            // Left behind by an ingest interrupted before cleanup.
            tracing::warn!(layout = %id, "discarding stale layout");
            for ext in ["json", "spwp", "spwr"] {
                let _ = fs::remove_file(ld.join(format!("{id}.{ext}")));
            }
            continue;
        }
        let mut layout = meta.layout;
        layout.coords = points.coords;
        layout.validate().map_err(|e| corrupt(&pp, e))?;
        layouts.insert(id, Arc::new(StoredLayout::new(&pid, meta.spec, layout, fitted)));
    }

    let mut reports = BTreeMap::new();
    for path in sorted_entries(&dir.join("reports"), "json")? {
        let report: QualityReport = serde_json::from_slice(&read(&path)?).map_err(|e| corrupt(&path, e))?;
        let id = path.file_stem().unwrap().to_string_lossy().into_owned();
        reports.insert(id, Arc::new(report));
    }
    Ok(Snapshot {
        data,
        layouts,
        reports,
    })
}

fn sorted_entries(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with('.'))
        .collect();
    out.sort();
    Ok(out)
}

fn remove_temp_files(dir: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    for f in files {
        let name = f.file_name().unwrap().to_string_lossy();
        if name.starts_with('.') && name.ends_with(".tmp") {
            fs::remove_file(&f).map_err(|e| Error::io(&f, e))?;
        }
    }
    Ok(())
}
