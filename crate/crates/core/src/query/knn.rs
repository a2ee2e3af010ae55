use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::distance::squared_euclidean;
use crate::error::{Error, Result};
use crate::model::{check_finite, normalize, ProjectData};
use crate::par;

const BLOCK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Euclidean distance between L2-normalized copies.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub record_id: String,
    pub distance: f64,
}

/// A scored candidate: (distance, tie rank, row).
pub(crate) type Candidate = (f64, u32, usize);

pub(crate) fn cmp_candidate(a: &Candidate, b: &Candidate) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Keeps the `k` smallest candidates, sorted.
pub(crate) fn keep_smallest(mut v: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    if k == 0 {
        return Vec::new();
    }
    if v.len() > k {
        v.select_nth_unstable_by(k - 1, cmp_candidate);
        v.truncate(k);
    }
    v.sort_unstable_by(cmp_candidate);
    v
}

/// Exact k nearest rows of `data` to `query` by Euclidean distance.
///
/// Ties are ordered by `rank[row]` (row index when `rank` is `None`).
/// Returns `(row, distance)` ascending; at most `k` entries.
pub fn knn_rows(
    data: &[f32],
    dim: usize,
    query: &[f32],
    k: usize,
    rank: Option<&[u32]>,
) -> Vec<(usize, f64)> {
    let n = data.len() / dim;
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let rank_of = |i: usize| rank.map_or(i as u32, |r| r[i]);
    let blocks = n.div_ceil(BLOCK_ROWS);
    let partial: Vec<Vec<Candidate>> = par::map_range(blocks, |b| {
        let start = b * BLOCK_ROWS;
        let end = (start + BLOCK_ROWS).min(n);
        let cands = (start..end)
            .map(|i| {
                let d = squared_euclidean(&data[i * dim..(i + 1) * dim], query).sqrt();
                (d, rank_of(i), i)
            })
            .collect();
        keep_smallest(cands, k)
    });
    keep_smallest(partial.concat(), k)
        .into_iter()
        .map(|(d, _, i)| (i, d))
        .collect()
}

/// Exact k nearest records to `query` in the project's embedding space,
/// ties broken by record id. `k > N` returns all records.
pub fn knn(data: &ProjectData, query: &[f32], k: usize, metric: Metric) -> Result<Vec<Neighbor>> {
    let dim = data.matrix().dim();
    if query.len() != dim {
        return Err(Error::DimMismatch {
            row: 0,
            expected: dim,
            actual: query.len(),
        });
    }
    check_finite(query, dim, 0)?;
    let hits = match metric {
        Metric::Euclidean => knn_rows(data.matrix().as_slice(), dim, query, k, Some(data.id_ranks())),
        Metric::Cosine => {
            let m = data.matrix().normalized();
            let q: Vec<f32> = normalize(query).collect();
            knn_rows(m.as_slice(), dim, &q, k, Some(data.id_ranks()))
        }
    };
    Ok(hits
        .into_iter()
        .map(|(i, distance)| Neighbor {
            record_id: data.records()[i].record_id.clone(),
            distance,
        })
        .collect())
}
