//! Explore embedding collections through 2D/3D layouts.
//!
//! The crate covers the data model, dimensionality reducers, nearest-neighbour
//! queries, spatial selection with annotation, layout-quality evaluation and
//! on-disk persistence. The HTTP service lives in a separate crate.

pub mod distance;
pub mod error;
pub mod eval;
pub mod hash;
pub mod model;
mod par;
pub mod query;
pub mod reducers;
pub mod selection;
pub mod store;
pub mod wire;

pub use error::{Error, Result};
pub use model::*;
pub use reducers::{import_layout, FittedReducer, Registry, ReducerSpec};

/// True when built with the `parallel` feature.
pub const fn is_parallel() -> bool {
    par::is_parallel()
}
