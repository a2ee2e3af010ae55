use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EmbeddingMatrix;
use crate::par;
use crate::query::knn_rows;
use crate::reducers::FittedReducer;

/// Average precision of a ranked 0/1 relevance list:
/// `(1 / total_relevant) × Σ precision@i` over relevant positions `i`.
pub fn average_precision(relevance: &[u8], total_relevant: usize) -> Result<f64> {
    if total_relevant == 0 {
        return Err(Error::Undefined);
    }
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for (i, &r) in relevance.iter().enumerate() {
        match r {
            0 => {}
            1 => {
                hits += 1;
                sum += hits as f64 / (i + 1) as f64;
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "relevance entries must be 0 or 1, got {other} at {i}"
                )))
            }
        }
    }
    Ok(sum / total_relevant as f64)
}

/// Reciprocal rank of the first relevant entry, 0 when there is none.
pub fn reciprocal_rank(relevance: &[u8]) -> f64 {
    relevance
        .iter()
        .position(|&r| r == 1)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    FullDim,
    Layout,
}

/// Retrieval quality of a train/test split.
///
/// Every test query ranks all training points by distance (ties by training
/// index) and counts a hit when the labels match. AP is truncated at
/// `k_eval` with `min(class size in train, k_eval)` relevant items. The
/// adjusted scores average per-class means, so every class weighs the same
/// however frequent it is. Micro averages over queries are reported too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEval {
    pub space: Space,
    pub k_eval: usize,
    /// Label index → mean AP of that class's queries.
    pub per_class_ap: BTreeMap<usize, f64>,
    /// Label index → mean reciprocal rank of that class's queries.
    pub per_class_rr: BTreeMap<usize, f64>,
    pub map_adjusted: f64,
    pub mrr_adjusted: f64,
    pub map_micro: f64,
    pub mrr_micro: f64,
    pub queries: usize,
    /// Test classes with no training examples; their queries are excluded.
    pub skipped_classes: Vec<usize>,
}

/// Scores row-major `test` points against `train` points of the same width.
pub fn retrieval_eval_points(
    train: &[f32],
    train_labels: &[usize],
    test: &[f32],
    test_labels: &[usize],
    dim: usize,
    k_eval: usize,
    space: Space,
) -> Result<RetrievalEval> {
    if k_eval == 0 {
        return Err(Error::InvalidK("k_eval must be at least 1".into()));
    }
    if dim == 0 || train.len() != train_labels.len() * dim || test.len() != test_labels.len() * dim {
        return Err(Error::InvalidInput(
            "points and labels disagree in length".into(),
        ));
    }
    let mut class_size: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in train_labels {
        *class_size.entry(l).or_default() += 1;
    }
    let mut skipped: Vec<usize> = test_labels
        .iter()
        .filter(|l| !class_size.contains_key(l))
        .copied()
        .collect();
    skipped.sort_unstable();
    skipped.dedup();

    let scored: Vec<Option<(usize, f64, f64)>> = par::map_rows(test, dim, |q, point| {
        let label = test_labels[q];
        let size = *class_size.get(&label)?;
        let hits = knn_rows(train, dim, point, k_eval, None);
        let rel: Vec<u8> = hits.iter().map(|(i, _)| u8::from(train_labels[*i] == label)).collect();
        let ap = average_precision(&rel, size.min(k_eval)).expect("class present in train");
        Some((label, ap, reciprocal_rank(&rel)))
    });

    let mut per_class: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    let (mut ap_sum, mut rr_sum, mut queries) = (0.0f64, 0.0f64, 0usize);
    for (label, ap, rr) in scored.into_iter().flatten() {
        let e = per_class.entry(label).or_insert((0.0, 0.0, 0));
        e.0 += ap;
        e.1 += rr;
        e.2 += 1;
        ap_sum += ap;
        rr_sum += rr;
        queries += 1;
    }
    if queries == 0 {
        return Err(Error::InsufficientData(
            "no test query belongs to a class present in train".into(),
        ));
    }
    let per_class_ap: BTreeMap<usize, f64> = per_class.iter().map(|(l, e)| (*l, e.0 / e.2 as f64)).collect();
    let per_class_rr: BTreeMap<usize, f64> = per_class.iter().map(|(l, e)| (*l, e.1 / e.2 as f64)).collect();
    let classes = per_class.len() as f64;
    Ok(RetrievalEval {
        space,
        k_eval,
        map_adjusted: per_class_ap.values().sum::<f64>() / classes,
        mrr_adjusted: per_class_rr.values().sum::<f64>() / classes,
        per_class_ap,
        per_class_rr,
        map_micro: ap_sum / queries as f64,
        mrr_micro: rr_sum / queries as f64,
        queries,
        skipped_classes: skipped,
    })
}

/// Scores a split in the full embedding space, or in layout space when a
/// fitted reducer is given (both splits are projected through it).
pub fn retrieval_eval(
    train: &EmbeddingMatrix,
    train_labels: &[usize],
    test: &EmbeddingMatrix,
    test_labels: &[usize],
    reducer: Option<&FittedReducer>,
    k_eval: usize,
) -> Result<RetrievalEval> {
    if train.dim() != test.dim() {
        return Err(Error::DimMismatch {
            row: 0,
            expected: train.dim(),
            actual: test.dim(),
        });
    }
    for (m, labels) in [(train, train_labels), (test, test_labels)] {
        if m.count() != labels.len() {
            return Err(Error::CountMismatch {
                expected: m.count(),
                actual: labels.len(),
            });
        }
    }
    match reducer {
        None => retrieval_eval_points(
            train.as_slice(),
            train_labels,
            test.as_slice(),
            test_labels,
            train.dim(),
            k_eval,
            Space::FullDim,
        ),
        Some(f) => {
            let tr = f.transform_matrix(train)?;
            let te = f.transform_matrix(test)?;
            retrieval_eval_points(&tr, train_labels, &te, test_labels, f.out_dim(), k_eval, Space::Layout)
        }
    }
}
