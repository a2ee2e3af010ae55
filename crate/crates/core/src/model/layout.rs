use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A reducer parameter: number or string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Number(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// A fitted 2D or 3D placement of every record in a project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub layout_id: String,
    pub reducer_name: String,
    pub out_dim: usize,
    /// `count × out_dim`, row-major, row `i` belongs to the record with ingest order `i`.
    #[serde(skip)]
    pub coords: Vec<f32>,
    pub params: Params,
    pub seed: u64,
    pub fitted_at: u64,
}

impl Layout {
    pub fn count(&self) -> usize {
        self.coords.len() / self.out_dim
    }

    pub fn point(&self, i: usize) -> &[f32] {
        &self.coords[i * self.out_dim..(i + 1) * self.out_dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f32> {
        self.coords.chunks_exact(self.out_dim)
    }

    pub fn validate(&self) -> Result<()> {
        validate_coords(&self.coords, self.out_dim)
    }
}

pub(crate) fn validate_out_dim(out_dim: usize) -> Result<()> {
    if out_dim == 2 || out_dim == 3 {
        Ok(())
    } else {
        Err(Error::InvalidDim(format!(
            "layouts are 2D or 3D, got out_dim {out_dim}"
        )))
    }
}

pub(crate) fn validate_coords(coords: &[f32], out_dim: usize) -> Result<()> {
    validate_out_dim(out_dim)?;
    if coords.len() % out_dim != 0 {
        return Err(Error::InvalidDim(format!(
            "{} coordinates do not form rows of {out_dim}",
            coords.len()
        )));
    }
    super::matrix::check_finite(coords, out_dim, 0)
}
