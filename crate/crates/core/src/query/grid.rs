use super::knn::{keep_smallest, Candidate};
use crate::distance::squared_euclidean;
use crate::error::{Error, Result};
use crate::par;

/// Point count at which [`LayoutIndex`] switches from a scan to a grid.
pub const GRID_THRESHOLD: usize = 200_000;

/// Exact nearest-neighbour index over layout points.
///
/// Below the threshold every query scans all points. Above it, points are
/// bucketed into a uniform grid and rings of cells are visited until no
/// unvisited cell can hold a closer point. Both paths return the same
/// result.
#[derive(Debug, Clone)]
pub struct LayoutIndex {
    out_dim: usize,
    coords: Vec<f32>,
    rank: Vec<u32>,
    grid: Option<Grid>,
}

#[derive(Debug, Clone)]
struct Grid {
    lo: Vec<f64>,
    cell: Vec<f64>,
    shape: Vec<usize>,
    start: Vec<u32>,
    items: Vec<u32>,
}

impl LayoutIndex {
    pub fn new(coords: Vec<f32>, out_dim: usize, rank: Vec<u32>) -> Self {
        Self::with_threshold(coords, out_dim, rank, GRID_THRESHOLD)
    }

    pub fn with_threshold(coords: Vec<f32>, out_dim: usize, rank: Vec<u32>, threshold: usize) -> Self {
        let n = coords.len() / out_dim;
        debug_assert_eq!(rank.len(), n);
        let grid = (n >= threshold && n > 0).then(|| Grid::build(&coords, out_dim));
        LayoutIndex {
            out_dim,
            coords,
            rank,
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank.is_empty()
    }

    pub fn uses_grid(&self) -> bool {
        self.grid.is_some()
    }

    /// `(row, distance)` of the `k` nearest points, ascending, ties by rank.
    pub fn nearest(&self, position: &[f32], k: usize) -> Result<Vec<(usize, f64)>> {
        if position.len() != self.out_dim {
            return Err(Error::DimMismatch {
                row: 0,
                expected: self.out_dim,
                actual: position.len(),
            });
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let hits = match &self.grid {
            Some(g) if k < self.len() => g.nearest(self, position, k),
            _ => self.scan(position, k),
        };
        Ok(hits.into_iter().map(|(d, _, i)| (i, d)).collect())
    }

    fn candidate(&self, i: usize, position: &[f32]) -> Candidate {
        let d = self.out_dim;
        (
            squared_euclidean(&self.coords[i * d..(i + 1) * d], position).sqrt(),
            self.rank[i],
            i,
        )
    }

    fn scan(&self, position: &[f32], k: usize) -> Vec<Candidate> {
        let all = par::map_range(self.len(), |i| self.candidate(i, position));
        keep_smallest(all, k)
    }
}

impl Grid {
    fn build(coords: &[f32], d: usize) -> Self {
        let n = coords.len() / d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in coords.chunks_exact(d) {
            for a in 0..d {
                lo[a] = lo[a].min(f64::from(p[a]));
                hi[a] = hi[a].max(f64::from(p[a]));
            }
        }
        // About two points per cell.
        let per_axis = ((n as f64 / 2.0).powf(1.0 / d as f64).ceil() as usize).max(1);
        let mut shape = vec![per_axis; d];
        let mut cell = vec![1.0f64; d];
        for a in 0..d {
            let span = hi[a] - lo[a];
            if span > 0.0 {
                cell[a] = span / per_axis as f64;
            } else {
                shape[a] = 1;
            }
        }
        let mut g = Grid {
            lo,
            cell,
            shape,
            start: Vec::new(),
            items: Vec::new(),
        };
        let cells: Vec<usize> = coords.chunks_exact(d).map(|p| g.flat(&g.cell_of(p))).collect();
        let total: usize = g.shape.iter().product();
        let mut start = vec![0u32; total + 1];
        for &c in &cells {
            start[c + 1] += 1;
        }
        for c in 0..total {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut items = vec![0u32; n];
        for (i, &c) in cells.iter().enumerate() {
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        g.start = start;
        g.items = items;
        g
    }

    fn cell_of(&self, p: &[f32]) -> Vec<usize> {
        (0..self.shape.len())
            .map(|a| {
                let t = ((f64::from(p[a]) - self.lo[a]) / self.cell[a]).floor();
                (t.max(0.0) as usize).min(self.shape[a] - 1)
            })
            .collect()
    }

    fn flat(&self, c: &[usize]) -> usize {
        c.iter()
            .zip(&self.shape)
            .fold(0, |acc, (i, s)| acc * s + i)
    }

    fn nearest(&self, index: &LayoutIndex, q: &[f32], k: usize) -> Vec<Candidate> {
        let d = self.shape.len();
        let center = self.cell_of(q);
        let mut found: Vec<Candidate> = Vec::new();
        let mut r = 0usize;
        loop {
            self.visit_ring(&center, r, |cell| {
                let (s, e) = (self.start[cell] as usize, self.start[cell + 1] as usize);
                for &i in &self.items[s..e] {
                    found.push(index.candidate(i as usize, q));
                }
            });
            // Lower bound on the distance to any point outside the visited block.
            let mut bound = f64::INFINITY;
            for a in 0..d {
                let qa = f64::from(q[a]);
                if center[a] >= r + 1 {
                    let edge = self.lo[a] + (center[a] - r) as f64 * self.cell[a];
                    bound = bound.min(qa - edge);
                }
                if center[a] + r + 1 < self.shape[a] {
                    let edge = self.lo[a] + (center[a] + r + 1) as f64 * self.cell[a];
                    bound = bound.min(edge - qa);
                }
            }
            if bound == f64::INFINITY {
                break;
            }
            if found.len() >= k {
                found = keep_smallest(found, k);
                // Slack absorbs rounding in cell assignment.
                let slack = 1e-9 * (1.0 + bound.abs());
                if bound - slack > found[k - 1].0 {
                    break;
                }
            }
            r += 1;
        }
        keep_smallest(found, k)
    }

    /// Calls `f` for every in-bounds cell at Chebyshev distance exactly `r`.
    fn visit_ring(&self, center: &[usize], r: usize, mut f: impl FnMut(usize)) {
        let d = self.shape.len();
        let lo: Vec<usize> = (0..d).map(|a| center[a].saturating_sub(r)).collect();
        let hi: Vec<usize> = (0..d).map(|a| (center[a] + r).min(self.shape[a] - 1)).collect();
        let mut cur = lo.clone();
        loop {
            let on_ring = (0..d).any(|a| cur[a].abs_diff(center[a]) == r);
            if on_ring {
                f(self.flat(&cur));
            }
            let mut a = d;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                if cur[a] < hi[a] {
                    cur[a] += 1;
                    break;
                }
                cur[a] = lo[a];
            }
        }
    }
}
