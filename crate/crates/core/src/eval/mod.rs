//! Layout and annotation quality metrics.

mod corruption;
mod kmeans;
mod nmi;
mod report;
mod retrieval;

pub use corruption::{inject_corruption, plan_corruption, CorruptionPlan, DEFAULT_CORRUPTION_RANGE};
pub use kmeans::{kmeans, KMeansResult, DEFAULT_MAX_ITER};
pub use nmi::nmi;
pub use report::{
    default_report_specs, layout_quality_report, project_split, quality_report, QualityReport,
    ReportRow, DEFAULT_K_EVAL, REPORT_CSV_HEADER,
};
pub use retrieval::{
    average_precision, reciprocal_rank, retrieval_eval, retrieval_eval_points, RetrievalEval, Space,
};
