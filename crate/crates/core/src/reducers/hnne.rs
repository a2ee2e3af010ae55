//! Hierarchical nearest-neighbour embedding.
//!
//! Build: repeatedly contract the connected components of the exact 1-NN
//! graph into weighted centroids until at most `out_dim + 1` nodes remain.
//!
//! Place, bottom-up: each parent's children get local coordinates from a PCA
//! of their centroids. From the second level upwards, sibling subtrees are
//! spread so that the balls enclosing them stay at least
//! `(extent_a + extent_b + gap) / decay` apart, where `gap` is the largest
//! 1-NN distance in the input. That keeps every cluster boundary wider than
//! any leaf-level neighbour distance, so isolated inputs stay isolated in the
//! layout. Positions are then accumulated top-down from the top-level PCA.

use super::pca::project_points;
use super::{param_f64, Reducer, ReducerModel, ReducerSpec};
use crate::distance::{squared_euclidean, squared_euclidean_f64};
use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, Params};
use crate::par;
use crate::wire::bytes::{Reader, Writer};

const SPREAD_QUANTILE: f64 = 0.9;
const RESOLVE_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, Default)]
pub struct Hnne;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnneParams {
    /// Training neighbours blended for out-of-sample placement.
    pub k_project: usize,
    /// Sibling spacing factor in (0, 1]; separation scales with its inverse.
    pub decay: f64,
}

impl Default for HnneParams {
    fn default() -> Self {
        HnneParams {
            k_project: 5,
            decay: 0.4,
        }
    }
}

impl HnneParams {
    pub fn from_params(params: &Params) -> Result<Self> {
        let d = Self::default();
        let k = param_f64(params, "k_project", d.k_project as f64)?;
        if !(k >= 1.0 && k.fract() == 0.0 && k <= u32::MAX as f64) {
            return Err(Error::InvalidArgument(format!(
                "k_project must be a positive integer, got {k}"
            )));
        }
        let decay = param_f64(params, "decay", d.decay)?;
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay must be in (0, 1], got {decay}"
            )));
        }
        Ok(HnneParams {
            k_project: k as usize,
            decay,
        })
    }
}

/// One contraction step: nodes of the level below → nodes of this level.
#[derive(Debug, Clone)]
struct Level {
    parent: Vec<usize>,
    centroids: Vec<f64>,
    weights: Vec<f64>,
}

/// The 1-NN contraction hierarchy over a point set.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    dim: usize,
    count: usize,
    levels: Vec<Level>,
    leaf_gap: f64,
}

impl Hierarchy {
    /// Number of contraction levels above the points.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Nodes at `level` (0 = the points themselves).
    pub fn node_count(&self, level: usize) -> usize {
        if level == 0 {
            self.count
        } else {
            self.levels[level - 1].weights.len()
        }
    }

    /// For level `level`, the node each point belongs to.
    pub fn partition(&self, level: usize) -> Vec<usize> {
        let mut labels: Vec<usize> = (0..self.count).collect();
        for l in &self.levels[..level] {
            for x in &mut labels {
                *x = l.parent[*x];
            }
        }
        labels
    }

    /// Parent (at `level + 1`) of each node at `level`.
    pub fn parents(&self, level: usize) -> &[usize] {
        &self.levels[level].parent
    }

    /// Member count of each node at `level ≥ 1`.
    pub fn weights(&self, level: usize) -> &[f64] {
        &self.levels[level - 1].weights
    }

    /// Largest 1-NN distance among the points (0 when no level was built).
    pub fn leaf_gap(&self) -> f64 {
        self.leaf_gap
    }

    fn centroids(&self, level: usize, points: &[f64]) -> Vec<f64> {
        if level == 0 {
            points.to_vec()
        } else {
            self.levels[level - 1].centroids.clone()
        }
    }
}

/// Builds the hierarchy for `matrix`, stopping at `out_dim + 1` nodes.
pub fn build_hierarchy(matrix: &EmbeddingMatrix, out_dim: usize) -> Hierarchy {
    let points: Vec<f64> = matrix.as_slice().iter().map(|x| f64::from(*x)).collect();
    build(&points, matrix.dim(), out_dim)
}

fn build(points: &[f64], dim: usize, out_dim: usize) -> Hierarchy {
    let count = points.len() / dim;
    let mut levels: Vec<Level> = Vec::new();
    let mut leaf_gap = 0.0f64;
    let mut cur = points.to_vec();
    let mut weights = vec![1.0f64; count];
    while weights.len() > out_dim + 1 {
        let n = weights.len();
        let nn = nearest_neighbours(&cur, dim);
        if levels.is_empty() {
            leaf_gap = nn.iter().map(|(_, d)| *d).fold(0.0, f64::max).sqrt();
        }
        let parent = components(nn.iter().map(|(j, _)| *j), n);
        let k = parent.iter().max().map_or(0, |m| m + 1);
        if k == n {
            break;
        }
        let mut centroids = vec![0.0f64; k * dim];
        let mut w = vec![0.0f64; k];
        for (i, &p) in parent.iter().enumerate() {
            w[p] += weights[i];
            let dst = &mut centroids[p * dim..(p + 1) * dim];
            for (c, x) in dst.iter_mut().zip(&cur[i * dim..(i + 1) * dim]) {
                *c += x * weights[i];
            }
        }
        for (p, wp) in w.iter().enumerate() {
            centroids[p * dim..(p + 1) * dim]
                .iter_mut()
                .for_each(|c| *c /= wp);
        }
        cur = centroids.clone();
        weights = w.clone();
        levels.push(Level {
            parent,
            centroids,
            weights: w,
        });
    }
    Hierarchy {
        dim,
        count,
        levels,
        leaf_gap,
    }
}

/// Exact 1-NN of every row: (index, squared distance), ties to the lowest index.
fn nearest_neighbours(rows: &[f64], dim: usize) -> Vec<(usize, f64)> {
    let n = rows.len() / dim;
    par::map_range(n, |i| {
        let ri = &rows[i * dim..(i + 1) * dim];
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = squared_euclidean_f64(ri, &rows[j * dim..(j + 1) * dim]);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    })
}

/// Weakly connected components of the graph `i → next[i]`, labelled in order
/// of each component's smallest member.
fn components(next: impl Iterator<Item = usize>, n: usize) -> Vec<usize> {
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    for (i, j) in next.enumerate() {
        let (a, b) = (find(&mut uf, i), find(&mut uf, j));
        if a != b {
            uf[a.max(b)] = a.min(b);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::with_capacity(n);
    let mut next_label = 0;
    for i in 0..n {
        let r = find(&mut uf, i);
        if label[r] == usize::MAX {
            label[r] = next_label;
            next_label += 1;
        }
        out.push(label[r]);
    }
    out
}

/// Computes layout positions (`count × out_dim`) for a built hierarchy.
fn place(h: &Hierarchy, points: &[f64], out_dim: usize, decay: f64) -> Vec<f64> {
    let depth = h.depth();
    let margin = 1.0 / decay;
    let gap = h.leaf_gap;

    // children[l][p]: nodes at level l-1 under node p at level l.
    let mut children: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for l in 1..=depth {
        let mut groups = vec![Vec::new(); h.node_count(l)];
        for (c, &p) in h.levels[l - 1].parent.iter().enumerate() {
            groups[p].push(c);
        }
        children.push(groups);
    }

    let mut extent: Vec<Vec<f64>> = vec![vec![0.0; h.count]];
    let mut local: Vec<Vec<f64>> = vec![Vec::new()];
    for lv in 1..=depth + 1 {
        let cents = h.centroids(lv - 1, points);
        let below = h.node_count(lv - 1);
        let groups: Vec<Vec<usize>> = if lv == depth + 1 {
            vec![(0..below).collect()]
        } else {
            std::mem::take(&mut children[lv])
        };
        let ext_below = &extent[lv - 1];
        let spread = lv > 1;

        let projected: Vec<Vec<f64>> = par::map_slice(&groups, |ch| {
            let sub: Vec<f64> = ch
                .iter()
                .flat_map(|&c| cents[c * h.dim..(c + 1) * h.dim].iter().copied())
                .collect();
            project_points(&sub, h.dim, out_dim)
        });

        let scale = if spread {
            let mut ratios: Vec<f64> = Vec::new();
            for (ch, q) in groups.iter().zip(&projected) {
                for a in 0..ch.len() {
                    for b in a + 1..ch.len() {
                        let need = (ext_below[ch[a]] + ext_below[ch[b]] + gap) * margin;
                        let d = dist(&q[a * out_dim..(a + 1) * out_dim], &q[b * out_dim..(b + 1) * out_dim]);
                        ratios.push(need / d.max(1e-12));
                    }
                }
            }
            quantile(&mut ratios, SPREAD_QUANTILE).map_or(1.0, |r| r.max(1.0))
        } else {
            1.0
        };

        let placed: Vec<(Vec<f64>, f64)> = par::map_range(groups.len(), |g| {
            let ch = &groups[g];
            let mut q: Vec<f64> = projected[g].iter().map(|x| x * scale).collect();
            let e: Vec<f64> = ch.iter().map(|&c| ext_below[c]).collect();
            if spread {
                let em: Vec<f64> = e.iter().map(|x| x * margin).collect();
                resolve(&mut q, out_dim, &em, gap * margin);
            }
            let reach = q
                .chunks_exact(out_dim)
                .zip(&e)
                .map(|(p, ec)| norm(p) + ec)
                .fold(0.0, f64::max);
            (q, reach)
        });

        let mut offsets = vec![0.0f64; below * out_dim];
        let mut ext = Vec::with_capacity(groups.len());
        for (ch, (q, reach)) in groups.iter().zip(placed) {
            for (k, &c) in ch.iter().enumerate() {
                offsets[c * out_dim..(c + 1) * out_dim].copy_from_slice(&q[k * out_dim..(k + 1) * out_dim]);
            }
            ext.push(reach);
        }
        if lv <= depth {
            children[lv] = groups;
        }
        extent.push(ext);
        local.push(offsets);
    }

    let mut pos = std::mem::take(&mut local[depth + 1]);
    for lv in (1..=depth).rev() {
        let offsets = &local[lv];
        let mut next = vec![0.0f64; h.node_count(lv - 1) * out_dim];
        for (p, ch) in children[lv].iter().enumerate() {
            let base = &pos[p * out_dim..(p + 1) * out_dim];
            for &c in ch {
                for k in 0..out_dim {
                    next[c * out_dim + k] = base[k] + offsets[c * out_dim + k];
                }
            }
        }
        pos = next;
    }
    pos
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean_f64(a, b).sqrt()
}

/// Linear-interpolated quantile (the common "type 7" definition).
fn quantile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(values[lo] + (values[hi] - values[lo]) * (pos - lo as f64))
}

/// Pushes sibling centres apart until each pair `(a, b)` is at least
/// `e[a] + e[b] + gap` apart. Falls back to uniform scaling if the sweeps
/// run out.
fn resolve(q: &mut [f64], d: usize, e: &[f64], gap: f64) {
    let m = e.len();
    if m < 2 {
        return;
    }
    let mut v = vec![0.0f64; d];
    for _ in 0..RESOLVE_SWEEPS {
        let mut moved = false;
        for a in 0..m {
            for b in a + 1..m {
                let need = e[a] + e[b] + gap;
                for k in 0..d {
                    v[k] = q[b * d + k] - q[a * d + k];
                }
                let mut len = norm(&v);
                if len < need * (1.0 - 1e-12) {
                    if len < 1e-12 {
                        let ang = std::f64::consts::TAU * b as f64 / m as f64;
                        v.iter_mut().for_each(|x| *x = 0.0);
                        v[0] = ang.cos();
                        if d > 1 {
                            v[1] = ang.sin();
                        }
                        len = norm(&v);
                    }
                    let step = (need - len) / 2.0 / len * 1.000_000_1;
                    for k in 0..d {
                        q[a * d + k] -= step * v[k];
                        q[b * d + k] += step * v[k];
                    }
                    moved = true;
                }
            }
        }
        if !moved {
            return;
        }
    }
    let mut k = 1.0f64;
    for a in 0..m {
        for b in a + 1..m {
            let len = dist(&q[a * d..(a + 1) * d], &q[b * d..(b + 1) * d]);
            k = k.max((e[a] + e[b] + gap) / len.max(1e-12));
        }
    }
    q.iter_mut().for_each(|x| *x *= k);
}

impl Hnne {
    /// Fits and also returns the hierarchy, for inspection.
    pub fn fit_with_hierarchy(
        matrix: &EmbeddingMatrix,
        out_dim: usize,
        params: HnneParams,
    ) -> (Vec<f32>, Hierarchy, HnneModel) {
        let points: Vec<f64> = matrix.as_slice().iter().map(|x| f64::from(*x)).collect();
        let h = build(&points, matrix.dim(), out_dim);
        let coords: Vec<f32> = place(&h, &points, out_dim, params.decay)
            .into_iter()
            .map(|x| x as f32)
            .collect();
        let model = HnneModel {
            dim: matrix.dim(),
            out_dim,
            k_project: params.k_project,
            train: matrix.as_slice().to_vec(),
            coords: coords.clone(),
        };
        (coords, h, model)
    }
}

impl Reducer for Hnne {
    fn fit(&self, matrix: &EmbeddingMatrix, spec: &ReducerSpec) -> Result<(Vec<f32>, Box<dyn ReducerModel>)> {
        let params = HnneParams::from_params(&spec.params)?;
        let (coords, _, model) = Self::fit_with_hierarchy(matrix, spec.out_dim, params);
        Ok((coords, Box::new(model)))
    }

    fn decode(&self, payload: &[u8]) -> Result<Box<dyn ReducerModel>> {
        let mut r = Reader::new(payload, "SPWR hnne payload");
        let dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let k_project = r.u32()? as usize;
        let count = r.len_u64()?;
        if dim == 0 || out_dim == 0 || k_project == 0 {
            return Err(Error::malformed("SPWR hnne payload", "zero dimension"));
        }
        let overflow = || Error::malformed("SPWR hnne payload", "length overflow");
        let train = r.f32s(count.checked_mul(dim).ok_or_else(overflow)?)?;
        let coords = r.f32s(count.checked_mul(out_dim).ok_or_else(overflow)?)?;
        r.finish()?;
        Ok(Box::new(HnneModel {
            dim,
            out_dim,
            k_project,
            train,
            coords,
        }))
    }
}

/// Out-of-sample state: the training vectors and their layout positions.
#[derive(Debug, Clone, PartialEq)]
pub struct HnneModel {
    dim: usize,
    out_dim: usize,
    k_project: usize,
    train: Vec<f32>,
    coords: Vec<f32>,
}

impl HnneModel {
    /// Inverse-distance blend of the `k_project` nearest training positions.
    /// An exact training match returns that row's position unchanged.
    pub fn project_row(&self, row: &[f32], out: &mut [f32]) {
        let n = self.train.len() / self.dim;
        let k = self.k_project.min(n);
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (j, t) in self.train.chunks_exact(self.dim).enumerate() {
            let d = squared_euclidean(row, t);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let at = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(at, (d, j));
            best.truncate(k);
        }
        let pos = |j: usize| &self.coords[j * self.out_dim..(j + 1) * self.out_dim];
        if best[0].0 == 0.0 {
            out.copy_from_slice(pos(best[0].1));
            return;
        }
        let mut acc = vec![0.0f64; self.out_dim];
        let mut total = 0.0f64;
        for &(d, j) in &best {
            let w = 1.0 / d.sqrt();
            total += w;
            for (a, p) in acc.iter_mut().zip(pos(j)) {
                *a += w * f64::from(*p);
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = (a / total) as f32;
        }
    }
}

impl ReducerModel for HnneModel {
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
        let mut w = Writer::with_capacity(20 + (self.train.len() + self.coords.len()) * 4);
        w.u32(self.dim as u32)
            .u32(self.out_dim as u32)
            .u32(self.k_project as u32)
            .u64((self.train.len() / self.dim) as u64)
            .f32s(&self.train)
            .f32s(&self.coords);
        w.buf
    }
}
