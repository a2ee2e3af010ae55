use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::retrieval::{retrieval_eval_points, Space};
use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, ProjectData};
use crate::reducers::{Registry, ReducerSpec};

pub const DEFAULT_K_EVAL: usize = 100;
pub const REPORT_CSV_HEADER: [&str; 5] = ["method", "out_dim", "map_adjusted", "mrr_adjusted", "fit_seconds"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `full_dim` for the baseline, otherwise the reducer name.
    pub method: String,
    pub out_dim: usize,
    pub map_adjusted: Option<f64>,
    pub mrr_adjusted: Option<f64>,
    pub fit_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub k_eval: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Baseline first, then one row per spec in the order given.
    pub rows: Vec<ReportRow>,
}

impl QualityReport {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_CSV_HEADER).expect("in-memory csv");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.out_dim.to_string(),
                opt(r.map_adjusted),
                opt(r.mrr_adjusted),
                r.fit_seconds.to_string(),
            ])
            .expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("report serializes")
    }

    pub fn row(&self, method: &str, out_dim: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.out_dim == out_dim)
    }
}

/// PCA and hNNE in 2D and 3D.
pub fn default_report_specs() -> Vec<ReducerSpec> {
    ["pca", "hnne"]
        .iter()
        .flat_map(|n| [2, 3].map(|d| ReducerSpec::new(*n, d)))
        .collect()
}

/// Train/test split used for project reports: labelled, non-foreign records
/// whose ingest order is 4 mod 5 are the test split, the rest train.
pub fn project_split(data: &ProjectData) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for r in data.records() {
        if r.foreign || r.label_gt.is_none() {
            continue;
        }
        if r.ingest_order % 5 == 4 {
            test.push(r.ingest_order);
        } else {
            train.push(r.ingest_order);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::MissingLabels(format!(
            "project `{}` needs ground-truth labels on at least 5 records to evaluate",
            data.project().id
        )));
    }
    Ok((train, test))
}

/// Layout-quality report for a project (see [`project_split`]).
pub fn layout_quality_report(
    data: &ProjectData,
    registry: &Registry,
    specs: &[ReducerSpec],
    k_eval: usize,
) -> Result<QualityReport> {
    let (train, test) = project_split(data)?;
    let label = |i: &usize| data.records()[*i].label_gt.expect("split keeps labelled rows");
    quality_report(
        &data.matrix().select(&train),
        &train.iter().map(label).collect::<Vec<_>>(),
        &data.matrix().select(&test),
        &test.iter().map(label).collect::<Vec<_>>(),
        registry,
        specs,
        k_eval,
    )
}

/// Scores the full-dimensional baseline and every spec on a fixed split.
/// Reducers are fitted on `train` only; `test` is projected through them. A
/// failing spec records its error and the remaining rows still run.
pub fn quality_report(
    train: &EmbeddingMatrix,
    train_labels: &[usize],
    test: &EmbeddingMatrix,
    test_labels: &[usize],
    registry: &Registry,
    specs: &[ReducerSpec],
    k_eval: usize,
) -> Result<QualityReport> {
    let dim = train.dim();
    let base = retrieval_eval_points(
        train.as_slice(),
        train_labels,
        test.as_slice(),
        test_labels,
        dim,
        k_eval,
        Space::FullDim,
    )?;
    let mut rows = vec![ReportRow {
        method: "full_dim".into(),
        out_dim: dim,
        map_adjusted: Some(base.map_adjusted),
        mrr_adjusted: Some(base.mrr_adjusted),
        fit_seconds: 0.0,
        error: None,
    }];
    for spec in specs {
        let started = Instant::now();
        let scored = registry.fit_coords(train, spec).and_then(|(coords, fitted)| {
            let fit_seconds = started.elapsed().as_secs_f64();
            let projected = fitted.transform_matrix(test)?;
            let e = retrieval_eval_points(
                &coords,
                train_labels,
                &projected,
                test_labels,
                spec.out_dim,
                k_eval,
                Space::Layout,
            )?;
            Ok((e, fit_seconds))
        });
        rows.push(match scored {
            Ok((e, fit_seconds)) => ReportRow {
                method: spec.name.clone(),
                out_dim: spec.out_dim,
                map_adjusted: Some(e.map_adjusted),
                mrr_adjusted: Some(e.mrr_adjusted),
                fit_seconds,
                error: None,
            },
            Err(err) => {
                tracing::warn!(reducer = %spec.name, out_dim = spec.out_dim, error = %err, "report row failed");
                ReportRow {
                    method: spec.name.clone(),
                    out_dim: spec.out_dim,
                    map_adjusted: None,
                    mrr_adjusted: None,
                    fit_seconds: started.elapsed().as_secs_f64(),
                    error: Some(err.to_string()),
                }
            }
        });
    }
    Ok(QualityReport {
        k_eval,
        train_count: train.count(),
        test_count: test.count(),
        rows,
    })
}
