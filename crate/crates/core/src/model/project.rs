use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::matrix::{check_finite, EmbeddingMatrix};
use super::now_secs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub name: String,
    pub created_at: u64,
    pub dim: usize,
    pub label_schema: Vec<String>,
    pub revision: u64,
}

impl Project {
    pub fn new(id: String, name: &str, dim: usize, label_schema: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDim("dimension must be at least 1".into()));
        }
        validate_schema(&label_schema)?;
        Ok(Project {
            id,
            name: name.to_string(),
            created_at: now_secs(),
            dim,
            label_schema,
            revision: 0,
        })
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.label_schema.iter().position(|l| l == name)
    }

    pub fn label_name(&self, index: usize) -> Option<&str> {
        self.label_schema.get(index).map(String::as_str)
    }
}

fn validate_schema(schema: &[String]) -> Result<()> {
    if schema.is_empty() {
        return Err(Error::InvalidSchema("label schema is empty".into()));
    }
    let mut seen = HashSet::new();
    for name in schema {
        if name.is_empty() {
            return Err(Error::InvalidSchema("label names must be non-empty".into()));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::InvalidSchema(format!("duplicate label `{name}`")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    #[default]
    Text,
    Image,
    Video,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Video => "video",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Modality::Text),
            "image" => Ok(Modality::Image),
            "video" => Ok(Modality::Video),
            other => Err(Error::InvalidArgument(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub record_id: String,
    /// Ground-truth label, as an index into the project's label schema.
    pub label_gt: Option<usize>,
    pub modality: Modality,
    /// Inline text, or a media URI.
    pub payload: String,
    pub ingest_order: usize,
    /// Set for records added by corruption injection; hidden from default exports.
    pub foreign: bool,
}

/// One row of an ingestion stream.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestRow {
    pub id: String,
    pub vector: Vec<f32>,
    pub label: Option<String>,
    pub modality: Modality,
    pub payload: String,
    pub foreign: bool,
}

impl IngestRow {
    pub fn new(id: impl Into<String>, vector: Vec<f32>) -> Self {
        IngestRow {
            id: id.into(),
            vector,
            label: None,
            modality: Modality::Text,
            payload: String::new(),
            foreign: false,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_payload(mut self, modality: Modality, payload: impl Into<String>) -> Self {
        self.modality = modality;
        self.payload = payload.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    SinglePick,
    SphereSelect,
    Import,
}

impl AnnotationSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnnotationSource::SinglePick => "single_pick",
            AnnotationSource::SphereSelect => "sphere_select",
            AnnotationSource::Import => "import",
        }
    }
}

impl FromStr for AnnotationSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_pick" => Ok(AnnotationSource::SinglePick),
            "sphere_select" => Ok(AnnotationSource::SphereSelect),
            "import" => Ok(AnnotationSource::Import),
            other => Err(Error::InvalidArgument(format!(
                "unknown annotation source `{other}`"
            ))),
        }
    }
}

/// One entry of the append-only annotation history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    /// Sorted, de-duplicated.
    pub record_ids: Vec<String>,
    pub label: usize,
    pub revision: u64,
    pub source: AnnotationSource,
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurrentLabel {
    pub label: usize,
    pub revision: u64,
    pub source: AnnotationSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AnnotationOutcome {
    pub revision: u64,
    /// Records whose current label changed or was newly set.
    pub changed: usize,
}

/// Folds an annotation history (in revision order) into the current label
/// of every record. Later revisions win.
pub fn replay_history<'a>(
    history: impl IntoIterator<Item = &'a Annotation>,
) -> BTreeMap<String, CurrentLabel> {
    let mut current = BTreeMap::new();
    let mut entries: Vec<&Annotation> = history.into_iter().collect();
    entries.sort_by_key(|a| a.revision);
    for a in entries {
        for id in &a.record_ids {
            current.insert(
                id.clone(),
                CurrentLabel {
                    label: a.label,
                    revision: a.revision,
                    source: a.source,
                },
            );
        }
    }
    current
}

/// Complete in-memory state of one project.
///
/// Row `i` of the embedding matrix always belongs to the record with
/// `ingest_order == i`.
#[derive(Debug, Clone)]
pub struct ProjectData {
    pub(crate) project: Project,
    records: Arc<Vec<Record>>,
    index: Arc<HashMap<String, usize>>,
    matrix: Arc<EmbeddingMatrix>,
    history: Vec<Annotation>,
    current: Vec<Option<CurrentLabel>>,
    id_rank: Arc<OnceLock<Vec<u32>>>,
}

impl ProjectData {
    pub fn new(project: Project) -> Result<Self> {
        let matrix = EmbeddingMatrix::new(project.dim)?;
        Ok(ProjectData {
            project,
            records: Arc::new(Vec::new()),
            index: Arc::new(HashMap::new()),
            matrix: Arc::new(matrix),
            history: Vec::new(),
            current: Vec::new(),
            id_rank: Arc::default(),
        })
    }

    /// Reassembles a project from persisted parts.
    pub(crate) fn from_parts(
        project: Project,
        records: Vec<Record>,
        matrix: EmbeddingMatrix,
        history: Vec<Annotation>,
    ) -> Result<Self> {
        if matrix.dim() != project.dim {
            return Err(Error::InvalidDim(format!(
                "matrix dim {} does not match project dim {}",
                matrix.dim(),
                project.dim
            )));
        }
        if matrix.count() != records.len() {
            return Err(Error::CountMismatch {
                expected: records.len(),
                actual: matrix.count(),
            });
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.ingest_order != i {
                return Err(Error::InvalidInput(format!(
                    "record `{}` has ingest order {} at row {i}",
                    r.record_id, r.ingest_order
                )));
            }
            if index.insert(r.record_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.record_id.clone()));
            }
        }
        let mut data = ProjectData {
            project,
            records: Arc::new(records),
            index: Arc::new(index),
            matrix: Arc::new(matrix),
            history: Vec::new(),
            current: Vec::new(),
            id_rank: Arc::default(),
        };
        data.current = vec![None; data.records.len()];
        for a in &history {
            if data.project.label_name(a.label).is_none() {
                return Err(Error::InvalidLabel(a.label.to_string()));
            }
            for id in &a.record_ids {
                let i = data.require(id)?;
                data.current[i] = Some(CurrentLabel {
                    label: a.label,
                    revision: a.revision,
                    source: a.source,
                });
            }
        }
        data.history = history;
        Ok(data)
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn shared_matrix(&self) -> Arc<EmbeddingMatrix> {
        Arc::clone(&self.matrix)
    }

    pub fn history(&self) -> &[Annotation] {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn record(&self, id: &str) -> Option<&Record> {
        self.record_index(id).map(|i| &self.records[i])
    }

    pub fn record_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.record_id.clone()).collect()
    }

    fn require(&self, id: &str) -> Result<usize> {
        self.record_index(id)
            .ok_or_else(|| Error::UnknownRecord(id.to_string()))
    }

    pub fn current_label_at(&self, index: usize) -> Option<CurrentLabel> {
        self.current.get(index).copied().flatten()
    }

    pub fn current_label(&self, id: &str) -> Option<CurrentLabel> {
        self.record_index(id).and_then(|i| self.current_label_at(i))
    }

    /// Current label of every annotated record, keyed by record id.
    pub fn current_labels(&self) -> BTreeMap<String, CurrentLabel> {
        self.records
            .iter()
            .zip(&self.current)
            .filter_map(|(r, c)| c.map(|c| (r.record_id.clone(), c)))
            .collect()
    }

    /// `ranks()[i]` is the position of record `i` when records are sorted by
    /// record id. Geometry and kNN use it to break distance ties.
    pub fn id_ranks(&self) -> &[u32] {
        self.id_rank.get_or_init(|| {
            let mut order: Vec<usize> = (0..self.records.len()).collect();
            order.sort_by(|&a, &b| self.records[a].record_id.cmp(&self.records[b].record_id));
            let mut rank = vec![0u32; order.len()];
            for (r, i) in order.into_iter().enumerate() {
                rank[i] = r as u32;
            }
            rank
        })
    }

    pub fn has_ground_truth(&self) -> bool {
        self.records.iter().any(|r| r.label_gt.is_some())
    }

    /// Appends records atomically: either every row is accepted or the
    /// project is left untouched.
    pub fn ingest(&mut self, rows: Vec<IngestRow>) -> Result<usize> {
        let dim = self.project.dim;
        let mut seen = HashSet::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (row, r) in rows.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(Error::DimMismatch {
                    row,
                    expected: dim,
                    actual: r.vector.len(),
                });
            }
            check_finite(&r.vector, dim, row)?;
            if r.id.is_empty() {
                return Err(Error::InvalidArgument(format!("row {row}: empty record id")));
            }
            if self.index.contains_key(&r.id) || !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            let label = match &r.label {
                Some(name) => Some(
                    self.project
                        .label_index(name)
                        .ok_or_else(|| Error::InvalidLabel(name.clone()))?,
                ),
                None => None,
            };
            labels.push(label);
        }

        let count = rows.len();
        let base = self.records.len();
        let records = Arc::make_mut(&mut self.records);
        let index = Arc::make_mut(&mut self.index);
        let matrix = Arc::make_mut(&mut self.matrix);
        let mut flat = Vec::with_capacity(count * dim);
        for (k, (r, label_gt)) in rows.into_iter().zip(labels).enumerate() {
            flat.extend_from_slice(&r.vector);
            index.insert(r.id.clone(), base + k);
            records.push(Record {
                record_id: r.id,
                label_gt,
                modality: r.modality,
                payload: r.payload,
                ingest_order: base + k,
                foreign: r.foreign,
            });
        }
        matrix.extend_rows(&flat);
        self.current.resize(records.len(), None);
        self.id_rank = Arc::default();
        Ok(count)
    }

    /// Assigns `label` to every listed record as one new revision.
    pub fn apply_annotation(
        &mut self,
        record_ids: &[String],
        label: usize,
        source: AnnotationSource,
    ) -> Result<AnnotationOutcome> {
        if record_ids.is_empty() {
            return Err(Error::InvalidArgument("empty record id set".into()));
        }
        if self.project.label_name(label).is_none() {
            return Err(Error::InvalidLabel(label.to_string()));
        }
        let mut indices = Vec::with_capacity(record_ids.len());
        for id in record_ids {
            indices.push(self.require(id)?);
        }
        let mut ids: Vec<String> = record_ids.to_vec();
        ids.sort();
        ids.dedup();
        indices.sort_unstable();
        indices.dedup();

        let revision = self.project.revision + 1;
        let mut changed = 0;
        for &i in &indices {
            if self.current[i].map(|c| c.label) != Some(label) {
                changed += 1;
            }
            self.current[i] = Some(CurrentLabel {
                label,
                revision,
                source,
            });
        }
        self.history.push(Annotation {
            record_ids: ids,
            label,
            revision,
            source,
            created_at: now_secs(),
        });
        self.project.revision = revision;
        Ok(AnnotationOutcome { revision, changed })
    }

    /// Like [`apply_annotation`](Self::apply_annotation) with the label given by name.
    pub fn apply_annotation_named(
        &mut self,
        record_ids: &[String],
        label: &str,
        source: AnnotationSource,
    ) -> Result<AnnotationOutcome> {
        let idx = self
            .project
            .label_index(label)
            .ok_or_else(|| Error::InvalidLabel(label.to_string()))?;
        self.apply_annotation(record_ids, idx, source)
    }
}
