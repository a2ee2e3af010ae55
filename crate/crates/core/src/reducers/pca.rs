use nalgebra::{DMatrix, SymmetricEigen};

use super::{Reducer, ReducerModel, ReducerSpec};
use crate::error::{Error, Result};
use crate::model::EmbeddingMatrix;
use crate::par;
use crate::wire::bytes::{Reader, Writer};

/// Principal component analysis via eigen-decomposition of the covariance
/// (or, when there are fewer rows than dimensions, of the Gram matrix).
#[derive(Debug, Clone, Copy, Default)]
pub struct Pca;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    dim: usize,
    out_dim: usize,
    mean: Vec<f64>,
    /// `out_dim × dim`, row-major. Axes beyond the data's rank are zero.
    components: Vec<f64>,
    /// Population covariance eigenvalues, descending, `dim` long.
    spectrum: Vec<f64>,
}

impl PcaModel {
    /// Fits `n_components` axes to row-major `data`. Any `n_components ≥ 1`
    /// is accepted, including more than `dim`.
    pub fn fit(data: &[f32], dim: usize, n_components: usize) -> Result<Self> {
        if dim == 0 || n_components == 0 {
            return Err(Error::InvalidDim("PCA needs dim and n_components ≥ 1".into()));
        }
        let n = data.len() / dim;
        if n == 0 {
            return Err(Error::InsufficientData("PCA on an empty matrix".into()));
        }
        let mean = column_mean(data.chunks_exact(dim).map(|r| r.iter().map(|x| f64::from(*x))), dim, n);
        let centered: Vec<f64> = data
            .chunks_exact(dim)
            .flat_map(|r| r.iter().zip(&mean).map(|(x, m)| f64::from(*x) - m))
            .collect();
        let (components, spectrum) = principal_axes(&centered, n, dim, n_components);
        Ok(PcaModel {
            dim,
            out_dim: n_components,
            mean,
            components,
            spectrum,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Axis `c`, a unit vector or all zeros.
    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c * self.dim..(c + 1) * self.dim]
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn project_row(&self, row: &[f32], out: &mut [f32]) {
        for (c, o) in out.iter_mut().enumerate() {
            let axis = self.component(c);
            let mut acc = 0.0f64;
            for ((x, m), a) in row.iter().zip(&self.mean).zip(axis) {
                acc += (f64::from(*x) - m) * a;
            }
            *o = acc as f32;
        }
    }

    /// Maps coordinates back into the input space.
    pub fn inverse_row(&self, coords: &[f32]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, v) in coords.iter().enumerate() {
            for (xi, a) in x.iter_mut().zip(self.component(c)) {
                *xi += f64::from(*v) * a;
            }
        }
        x
    }
}

impl Reducer for Pca {
    fn fit(&self, matrix: &EmbeddingMatrix, spec: &ReducerSpec) -> Result<(Vec<f32>, Box<dyn ReducerModel>)> {
        let model = PcaModel::fit(matrix.as_slice(), matrix.dim(), spec.out_dim)?;
        let coords = model.transform(matrix.as_slice())?;
        Ok((coords, Box::new(model)))
    }

    fn decode(&self, payload: &[u8]) -> Result<Box<dyn ReducerModel>> {
        let mut r = Reader::new(payload, "SPWR pca payload");
        let dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        if dim == 0 || out_dim == 0 {
            return Err(Error::malformed("SPWR pca payload", "zero dimension"));
        }
        let mean = r.f64s(dim)?;
        let components = r.f64s(out_dim * dim)?;
        let spectrum = r.f64s(dim)?;
        r.finish()?;
        Ok(Box::new(PcaModel {
            dim,
            out_dim,
            mean,
            components,
            spectrum,
        }))
    }
}

impl ReducerModel for PcaModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn transform(&self, vectors: &[f32]) -> Result<Vec<f32>> {
        let rows: Vec<Vec<f32>> = par::map_rows(vectors, self.dim, |_, row| {
            let mut out = vec![0.0f32; self.out_dim];
            self.project_row(row, &mut out);
            out
        });
        Ok(rows.concat())
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(self.dim as u32)
            .u32(self.out_dim as u32)
            .f64s(&self.mean)
            .f64s(&self.components)
            .f64s(&self.spectrum);
        w.buf
    }
}

fn column_mean<I, R>(rows: I, dim: usize, n: usize) -> Vec<f64>
where
    I: Iterator<Item = R>,
    R: Iterator<Item = f64>,
{
    let mut mean = vec![0.0f64; dim];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    mean
}

/// Top-`k` principal axes of centered row-major data plus the full
/// descending covariance spectrum (padded to `dim`).
///
/// Each eigenvector's largest-magnitude entry is made positive (first such
/// entry on ties). Axes with eigenvalue ≤ 1e-12 × the largest are zeroed.
pub(crate) fn principal_axes(centered: &[f64], n: usize, dim: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let gram = n < dim;
    let m = if gram { n } else { dim };
    // Each entry is a dot product summed in row order, independent of
    // scheduling.
    let upper: Vec<Vec<f64>> = if gram {
        par::map_range(m, |a| {
            let ra = &centered[a * dim..(a + 1) * dim];
            (a..m)
                .map(|b| {
                    let rb = &centered[b * dim..(b + 1) * dim];
                    ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>() / n as f64
                })
                .collect()
        })
    } else {
        par::map_range(m, |i| {
            let mut acc = vec![0.0f64; dim - i];
            for row in centered.chunks_exact(dim) {
                let xi = row[i];
                for (a, xj) in acc.iter_mut().zip(&row[i..]) {
                    *a += xi * xj;
                }
            }
            acc.iter_mut().for_each(|a| *a /= n as f64);
            acc
        })
    };
    let mut sym = DMatrix::<f64>::zeros(m, m);
    for (i, row) in upper.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            sym[(i, i + off)] = *v;
            sym[(i + off, i)] = *v;
        }
    }
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    spectrum.resize(dim, 0.0);
    let top = spectrum.first().copied().unwrap_or(0.0).max(0.0);
    let tol = top * 1e-12;

    let mut components = vec![0.0f64; k * dim];
    for (c, &src) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[src];
        if lambda <= tol || lambda <= 0.0 {
            continue;
        }
        let u = eig.eigenvectors.column(src);
        let axis = &mut components[c * dim..(c + 1) * dim];
        if gram {
            // v = Xᵀu / ‖Xᵀu‖ with ‖Xᵀu‖² = n·λ.
            for (r, row) in centered.chunks_exact(dim).enumerate() {
                for (a, x) in axis.iter_mut().zip(row) {
                    *a += x * u[r];
                }
            }
            let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
            axis.iter_mut().for_each(|a| *a /= norm);
        } else {
            axis.iter_mut().zip(u.iter()).for_each(|(a, v)| *a = *v);
        }
        let mut pivot = 0;
        for (j, a) in axis.iter().enumerate() {
            if a.abs() > axis[pivot].abs() {
                pivot = j;
            }
        }
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|a| *a = -*a);
        }
    }
    (components, spectrum)
}

/// Projects f64 points onto their own top `out_dim` principal axes, centered
/// on the unweighted mean. One point maps to the origin.
pub(crate) fn project_points(points: &[f64], dim: usize, out_dim: usize) -> Vec<f64> {
    let n = points.len() / dim;
    if n <= 1 {
        return vec![0.0; n * out_dim];
    }
    let mean = column_mean(points.chunks_exact(dim).map(|r| r.iter().copied()), dim, n);
    let centered: Vec<f64> = points
        .chunks_exact(dim)
        .flat_map(|r| r.iter().zip(&mean).map(|(x, m)| x - m))
        .collect();
    let (axes, _) = principal_axes(&centered, n, dim, out_dim);
    let mut out = Vec::with_capacity(n * out_dim);
    for row in centered.chunks_exact(dim) {
        for c in 0..out_dim {
            let axis = &axes[c * dim..(c + 1) * dim];
            out.push(row.iter().zip(axis).map(|(x, a)| x * a).sum());
        }
    }
    out
}
