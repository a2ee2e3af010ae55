use std::sync::OnceLock;

use crate::distance::l2_norm;
use crate::error::{Error, Result};
use crate::hash::Fnv1a;

/// Row-major store of `dim`-dimensional f32 vectors, one row per record.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    norm_cache: OnceLock<Vec<f32>>,
}

impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.data == other.data
    }
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDim("dimension must be at least 1".into()));
        }
        Ok(EmbeddingMatrix {
            dim,
            data: Vec::new(),
            norm_cache: OnceLock::new(),
        })
    }

    /// Builds a matrix from row-major data, rejecting ragged input and
    /// non-finite entries.
    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        let mut m = Self::new(dim)?;
        if data.len() % dim != 0 {
            return Err(Error::DimMismatch {
                row: data.len() / dim,
                expected: dim,
                actual: data.len() % dim,
            });
        }
        check_finite(&data, dim, 0)?;
        m.data = data;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    /// Appends already-validated rows.
    pub(crate) fn extend_rows(&mut self, rows: &[f32]) {
        debug_assert_eq!(rows.len() % self.dim, 0);
        self.data.extend_from_slice(rows);
        self.norm_cache = OnceLock::new();
    }

    /// Per-row L2 norms, computed on first use.
    pub fn norms(&self) -> &[f32] {
        self.norm_cache
            .get_or_init(|| self.rows().map(|r| l2_norm(r) as f32).collect())
    }

    /// Copy with every row scaled to unit length (zero rows stay zero).
    pub fn normalized(&self) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(normalize(row));
        }
        EmbeddingMatrix {
            dim: self.dim,
            data,
            norm_cache: OnceLock::new(),
        }
    }

    /// Content hash over dimension, row count and raw bytes.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write_u64(self.dim as u64);
        h.write_u64(self.count() as u64);
        for x in &self.data {
            h.write(&x.to_le_bytes());
        }
        h.finish()
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            dim: self.dim,
            data,
            norm_cache: OnceLock::new(),
        }
    }
}

pub(crate) fn normalize(row: &[f32]) -> impl Iterator<Item = f32> + '_ {
    let n = l2_norm(row);
    row.iter()
        .map(move |x| if n > 0.0 { (f64::from(*x) / n) as f32 } else { 0.0 })
}

/// Checks every entry is finite. `row_offset` shifts reported row numbers.
pub(crate) fn check_finite(data: &[f32], dim: usize, row_offset: usize) -> Result<()> {
    if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            row: row_offset + pos / dim,
            col: pos % dim,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dim_and_ragged() {
        assert!(matches!(EmbeddingMatrix::new(0), Err(Error::InvalidDim(_))));
        assert!(matches!(
            EmbeddingMatrix::from_rows(3, vec![1.0; 4]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn reports_non_finite_position() {
        let err = EmbeddingMatrix::from_rows(2, vec![0.0, 1.0, 2.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 1 }));
    }

    #[test]
    fn norms_and_normalized_rows() {
        let m = EmbeddingMatrix::from_rows(2, vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.norms(), &[5.0, 0.0]);
        let n = m.normalized();
        assert_eq!(n.row(0), &[0.6, 0.8]);
        assert_eq!(n.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = EmbeddingMatrix::from_rows(2, vec![1.0, 2.0]).unwrap();
        let b = EmbeddingMatrix::from_rows(2, vec![1.0, 2.5]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
