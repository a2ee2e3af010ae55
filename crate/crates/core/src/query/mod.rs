//! Query embedding, out-of-sample placement and exact nearest-neighbour search.

mod embed;
mod grid;
mod knn;
mod provider;

pub use embed::{embed_text_builtin, MIN_BUILTIN_DIM};
pub use grid::{LayoutIndex, GRID_THRESHOLD};
pub use knn::{knn, knn_rows, Metric, Neighbor};
pub use provider::{
    BuiltinTextProvider, EmbeddingProvider, ProviderKind, RemoteProvider, DEFAULT_PROVIDER_TIMEOUT,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Layout, Modality, ProjectData};
use crate::reducers::FittedReducer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    /// Layout position, or `None` for layouts without out-of-sample support.
    pub position: Option<Vec<f32>>,
    /// Nearest records in the embedding space, ascending by distance.
    pub neighbors: Vec<Neighbor>,
    pub provider: String,
    pub query_echo: String,
}

/// Embeds `payload`, places it in the layout and finds its `k` nearest
/// records in the original embedding space.
pub fn query(
    data: &ProjectData,
    fitted: &FittedReducer,
    provider: &dyn EmbeddingProvider,
    modality: Modality,
    payload: &str,
    k: usize,
    metric: Metric,
) -> Result<QueryResult> {
    let vector = provider.embed(modality, payload, data.project().dim)?;
    let (position, neighbors) = query_vector(data, fitted, &vector, k, metric)?;
    Ok(QueryResult {
        position,
        neighbors,
        provider: provider.name().to_string(),
        query_echo: payload.to_string(),
    })
}

/// [`query`] for an already-embedded vector.
pub fn query_vector(
    data: &ProjectData,
    fitted: &FittedReducer,
    vector: &[f32],
    k: usize,
    metric: Metric,
) -> Result<(Option<Vec<f32>>, Vec<Neighbor>)> {
    let neighbors = knn(data, vector, k, metric)?;
    let position = if fitted.supports_transform() {
        Some(fitted.transform_one(vector)?)
    } else {
        None
    };
    Ok((position, neighbors))
}

/// Record ids of the `k` layout points nearest to `position`, ties by
/// record id.
pub fn nearest_in_layout(
    data: &ProjectData,
    layout: &Layout,
    position: &[f32],
    k: usize,
) -> Result<Vec<String>> {
    let index = LayoutIndex::new(layout.coords.clone(), layout.out_dim, data.id_ranks().to_vec());
    nearest_with_index(data, &index, position, k)
}

/// [`nearest_in_layout`] against a prebuilt index.
pub fn nearest_with_index(
    data: &ProjectData,
    index: &LayoutIndex,
    position: &[f32],
    k: usize,
) -> Result<Vec<String>> {
    Ok(index
        .nearest(position, k)?
        .into_iter()
        .map(|(i, _)| data.records()[i].record_id.clone())
        .collect())
}
