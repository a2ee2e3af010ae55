//! Fixtures and brute-force reference implementations shared by the
//! integration tests. Nothing here calls into the crate's metric code.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use embedscape::{IngestRow, Project, ProjectData};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw (Box–Muller).
pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Isotropic Gaussian blobs around `centers`, `per_blob` points each,
/// interleaved so consecutive rows cycle through the classes.
pub fn blobs(centers: &[Vec<f64>], per_blob: usize, sigma: f64, seed: u64) -> (Vec<f32>, Vec<usize>) {
    let mut r = rng(seed);
    let dim = centers[0].len();
    let mut data = Vec::with_capacity(centers.len() * per_blob * dim);
    let mut labels = Vec::with_capacity(centers.len() * per_blob);
    for _ in 0..per_blob {
        for (c, center) in centers.iter().enumerate() {
            for x in center {
                data.push((x + sigma * gauss(&mut r)) as f32);
            }
            labels.push(c);
        }
    }
    (data, labels)
}

/// Centers on the first `k` coordinate axes, pairwise `separation` apart.
pub fn axis_centers(k: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let mut v = vec![0.0; dim];
            v[c] = separation / std::f64::consts::SQRT_2;
            v
        })
        .collect()
}

pub fn project_with(name: &str, dim: usize, labels: &[&str]) -> ProjectData {
    let p = Project::new(name.into(), name, dim, labels.iter().map(|s| s.to_string()).collect()).unwrap();
    ProjectData::new(p).unwrap()
}

pub fn rows_from(data: &[f32], dim: usize, labels: &[usize], names: &[&str], prefix: &str) -> Vec<IngestRow> {
    data.chunks_exact(dim)
        .zip(labels)
        .enumerate()
        .map(|(i, (v, l))| IngestRow::new(format!("{prefix}{i:05}"), v.to_vec()).with_label(names[*l]))
        .collect()
}

// ---------------------------------------------------------------- oracles

pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        s += d * d;
    }
    s
}

/// Indices of all `train` rows sorted by (distance, row).
pub fn full_ranking(train: &[f32], dim: usize, q: &[f32]) -> Vec<usize> {
    let n = train.len() / dim;
    let mut idx: Vec<usize> = (0..n).collect();
    let d: Vec<f64> = (0..n).map(|i| sq_dist(&train[i * dim..(i + 1) * dim], q).sqrt()).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
    idx
}

/// AP by its definition: precision at every relevant position, recomputed
/// from scratch each time.
pub fn ap_oracle(rel: &[u8], total_relevant: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..rel.len() {
        if rel[i] == 1 {
            let hits = rel[..=i].iter().filter(|&&r| r == 1).count();
            s += hits as f64 / (i + 1) as f64;
        }
    }
    s / total_relevant as f64
}

pub fn rr_oracle(rel: &[u8]) -> f64 {
    for (i, r) in rel.iter().enumerate() {
        if *r == 1 {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

pub struct RetrievalOracle {
    pub map_adjusted: f64,
    pub mrr_adjusted: f64,
    pub per_class_ap: Vec<(usize, f64)>,
    pub map_micro: f64,
}

pub fn retrieval_oracle(
    train: &[f32],
    train_labels: &[usize],
    test: &[f32],
    test_labels: &[usize],
    dim: usize,
    k_eval: usize,
) -> RetrievalOracle {
    let mut aps: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut rrs: HashMap<usize, Vec<f64>> = HashMap::new();
    for (q, &label) in test_labels.iter().enumerate() {
        let in_train = train_labels.iter().filter(|&&l| l == label).count();
        if in_train == 0 {
            continue;
        }
        let ranking = full_ranking(train, dim, &test[q * dim..(q + 1) * dim]);
        let rel: Vec<u8> = ranking.iter().take(k_eval).map(|&i| (train_labels[i] == label) as u8).collect();
        aps.entry(label).or_default().push(ap_oracle(&rel, in_train.min(k_eval)));
        rrs.entry(label).or_default().push(rr_oracle(&rel));
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let mut per_class_ap: Vec<(usize, f64)> = aps.iter().map(|(l, v)| (*l, mean(v))).collect();
    per_class_ap.sort_by_key(|e| e.0);
    let classes = aps.len() as f64;
    let all: Vec<f64> = aps.values().flatten().copied().collect();
    RetrievalOracle {
        map_adjusted: aps.values().map(mean).sum::<f64>() / classes,
        mrr_adjusted: rrs.values().map(mean).sum::<f64>() / classes,
        per_class_ap,
        map_micro: mean(&all),
    }
}

/// NMI from the contingency table, geometric-mean normalization.
pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for i in 0..a.len() {
        *joint.entry((a[i], b[i])).or_default() += 1.0;
        *pa.entry(a[i]).or_default() += 1.0;
        *pb.entry(b[i]).or_default() += 1.0;
    }
    let h = |m: &HashMap<usize, f64>| -m.values().map(|c| (c / n) * (c / n).ln()).sum::<f64>();
    let (ha, hb) = (h(&pa), h(&pb));
    let mut mi = 0.0;
    for ((x, y), c) in &joint {
        let pxy = c / n;
        mi += pxy * (pxy / ((pa[x] / n) * (pb[y] / n))).ln();
    }
    if pa.len() == 1 && pb.len() == 1 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues descending with matching column eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        v[i][i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].partial_cmp(&a[x][x]).unwrap());
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (vals, vecs)
}
