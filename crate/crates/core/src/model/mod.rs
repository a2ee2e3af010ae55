//! Domain types: projects, records, embeddings, layouts and annotations.

mod export;
mod layout;
mod matrix;
mod project;

pub use export::{export_annotations, import_annotations, ExportFormat, ExportOptions};
pub use layout::{Layout, ParamValue, Params};
pub use matrix::EmbeddingMatrix;
pub use project::{
    replay_history, Annotation, AnnotationOutcome, AnnotationSource, CurrentLabel, IngestRow,
    Modality, Project, ProjectData, Record,
};

pub(crate) use layout::{validate_coords, validate_out_dim};
pub(crate) use matrix::{check_finite, normalize};

pub(crate) fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
