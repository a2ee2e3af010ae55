//! HTTP service and command-line front end over the `embedscape` core.

pub mod api;
pub mod cli;
pub mod jobs;
pub mod serve;

pub use api::{router, AppState, Providers};
