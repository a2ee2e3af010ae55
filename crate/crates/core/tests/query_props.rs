mod common;

use common::{rng, sq_dist};
use embedscape::query::{knn, knn_rows, LayoutIndex, Metric};
use embedscape::selection::{pick, select_sphere, Ray, Selector};
use embedscape::{IngestRow, Layout};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::RngExt;

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x9e0),
        failure_persistence: None,
        ..Config::default()
    }
}

fn layout(coords: Vec<f32>, out_dim: usize) -> Layout {
    Layout {
        layout_id: "t".into(),
        reducer_name: "import".into(),
        out_dim,
        coords,
        params: Default::default(),
        seed: 0,
        fitted_at: 0,
    }
}

fn dyadic(n: usize, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-40..=40i32) as f32 / 4.0).collect()
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn apply(perm: &[usize], signs: &[bool], v: [f64; 3]) -> [f64; 3] {
    let mut o = [0.0; 3];
    for j in 0..3 {
        o[j] = if signs[j] { -v[perm[j]] } else { v[perm[j]] };
    }
    o
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn knn_matches_full_sort(n in 1usize..300, dim in 1usize..10, k in 1usize..320, seed in any::<u64>()) {
        let data = dyadic(n * dim, seed);
        let q = dyadic(dim, seed ^ 1);
        let got: Vec<usize> = knn_rows(&data, dim, &q, k, None).into_iter().map(|h| h.0).collect();
        let mut all: Vec<(f64, usize)> = (0..n).map(|i| (sq_dist(&data[i * dim..(i + 1) * dim], &q), i)).collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = all.into_iter().take(k).map(|e| e.1).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn cosine_knn_ranks_by_angle(n in 2usize..80, seed in any::<u64>()) {
        let mut d = common::project_with("cos", 3, &["x"]);
        let data = dyadic(n * 3, seed);
        let rows: Vec<IngestRow> = data
            .chunks_exact(3)
            .enumerate()
            .filter(|(_, v)| v.iter().any(|x| *x != 0.0))
            .map(|(i, v)| IngestRow::new(format!("p{i:03}"), v.to_vec()))
            .collect();
        prop_assume!(!rows.is_empty());
        d.ingest(rows.clone()).unwrap();
        let q = [1.0f32, 0.5, -0.25];
        let hits = knn(&d, &q, rows.len(), Metric::Cosine).unwrap();
        let cos = |v: &[f32]| {
            let dot: f64 = v.iter().zip(&q).map(|(a, b)| *a as f64 * *b as f64).sum();
            dot / (sq_dist(v, &[0.0; 3]).sqrt() * sq_dist(&q, &[0.0; 3]).sqrt())
        };
        for w in hits.windows(2) {
            let row = |id: &str| d.matrix().row(d.record_index(id).unwrap());
            let (a, b) = (cos(row(&w[0].record_id)), cos(row(&w[1].record_id)));
            prop_assert!(a >= b - 1e-6, "{} before {}", a, b);
        }
    }

    #[test]
    fn grid_index_matches_scan(n in 1usize..400, out_dim in 2usize..4, k in 1usize..30, seed in any::<u64>()) {
        let coords = dyadic(n * out_dim, seed);
        let rank: Vec<u32> = (0..n as u32).rev().collect();
        let grid = LayoutIndex::with_threshold(coords.clone(), out_dim, rank.clone(), 0);
        let scan = LayoutIndex::with_threshold(coords, out_dim, rank, usize::MAX);
        prop_assert!(grid.uses_grid() && !scan.uses_grid());
        for q in dyadic(out_dim * 5, seed ^ 3).chunks_exact(out_dim) {
            prop_assert_eq!(grid.nearest(q, k).unwrap(), scan.nearest(q, k).unwrap());
        }
    }

    #[test]
    fn sphere_selection_grows_with_radius(n in 1usize..200, out_dim in 2usize..4, r1 in 0.0f64..6.0, extra in 0.0f64..6.0, seed in any::<u64>()) {
        let coords = dyadic(n * out_dim, seed);
        let l = layout(coords.clone(), out_dim);
        let rank: Vec<u32> = (0..n as u32).collect();
        let center: Vec<f64> = dyadic(out_dim, seed ^ 5).into_iter().map(f64::from).collect();
        let small = select_sphere(&l, &rank, &Selector::new(center.clone(), r1).unwrap()).unwrap();
        let big = select_sphere(&l, &rank, &Selector::new(center.clone(), r1 + extra).unwrap()).unwrap();
        prop_assert!(small.iter().all(|i| big.contains(i)));
        let c32: Vec<f32> = center.iter().map(|x| *x as f32).collect();
        let want: Vec<usize> = (0..n).filter(|&i| sq_dist(&coords[i * out_dim..(i + 1) * out_dim], &c32).sqrt() <= r1).collect();
        prop_assert_eq!(small, want);
    }

    #[test]
    fn pick_commutes_with_signed_permutations(
        n in 1usize..150,
        seed in any::<u64>(),
        dir in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        angle in 0.01f64..0.785,
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
        signs in prop::collection::vec(any::<bool>(), 3),
    ) {
        prop_assume!(dir.0.abs() + dir.1.abs() + dir.2.abs() > 0.1);
        let coords = dyadic(n * 3, seed);
        let rank: Vec<u32> = (0..n as u32).collect();
        let origin = [-12.0, 0.5, 3.0];
        let d = unit([dir.0, dir.1, dir.2]);
        let base = pick(&layout(coords.clone(), 3), &rank, &Ray::new(origin, d).unwrap(), angle).unwrap();
        let moved: Vec<f32> = coords
            .chunks_exact(3)
            .flat_map(|p| apply(&perm, &signs, [p[0] as f64, p[1] as f64, p[2] as f64]).map(|x| x as f32))
            .collect();
        let ray = Ray::new(apply(&perm, &signs, origin), apply(&perm, &signs, d)).unwrap();
        let after = pick(&layout(moved, 3), &rank, &ray, angle).unwrap();
        prop_assert_eq!(base, after);
        // The picked point lies in the cone and nothing in the cone is nearer in depth.
        if let Some(i) = base {
            let v: Vec<f64> = (0..3).map(|j| coords[i * 3 + j] as f64 - origin[j]).collect();
            let t: f64 = (0..3).map(|j| v[j] * d[j]).sum();
            prop_assert!(t >= 0.0);
            for o in 0..n {
                let w: Vec<f64> = (0..3).map(|j| coords[o * 3 + j] as f64 - origin[j]).collect();
                let to: f64 = (0..3).map(|j| w[j] * d[j]).sum();
                let perp = (0..3).map(|j| (w[j] - to * d[j]).powi(2)).sum::<f64>().sqrt();
                if to >= 0.0 && perp < angle.tan() * to * (1.0 - 1e-9) {
                    prop_assert!(to >= t - 1e-9);
                }
            }
        }
    }
}
