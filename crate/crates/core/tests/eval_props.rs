mod common;

use common::{gauss, nmi_oracle, rng, sq_dist};
use embedscape::eval::{average_precision, kmeans, nmi, reciprocal_rank, retrieval_eval_points, Space};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::RngExt;

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0xe7a1),
        failure_persistence: None,
        ..Config::default()
    }
}

fn partition(max_label: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..max_label, 1..200)
}

/// Dyadic points on a coarse grid: distances stay exact under signed axis
/// permutations and integer shifts.
fn grid_points(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    (0..n * dim).map(|_| r.random_range(-64..=64i32) as f32 / 8.0).collect()
}

fn labels_for(points: &[f32], dim: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    points
        .chunks_exact(dim)
        .map(|p| if r.random::<f64>() < 0.7 { ((p[0] + 8.0) as usize * classes / 17).min(classes - 1) } else { r.random_range(0..classes) })
        .collect()
}

fn signed_permutation(points: &[f32], dim: usize, perm: &[usize], signs: &[bool], shift: &[i32]) -> Vec<f32> {
    points
        .chunks_exact(dim)
        .flat_map(|p| (0..dim).map(|j| {
            let v = p[perm[j]];
            (if signs[j] { -v } else { v }) + shift[j] as f32
        }).collect::<Vec<_>>())
        .collect()
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn nmi_is_symmetric_and_bounded(pair in (1usize..200).prop_flat_map(|n| (prop::collection::vec(0..6usize, n), prop::collection::vec(0..4usize, n)))) {
        let (a, b) = pair;
        let ab = nmi(&a, &b).unwrap();
        prop_assert_eq!(ab.to_bits(), nmi(&b, &a).unwrap().to_bits());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - nmi_oracle(&a, &b)).abs() <= 1e-9);
    }

    #[test]
    fn nmi_ignores_relabeling(a in partition(7), perm in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle()) {
        let b: Vec<usize> = a.iter().map(|&x| (x * 3 + 1) % 5).collect();
        let relabeled: Vec<usize> = a.iter().map(|&x| perm[x] + 10).collect();
        prop_assert_eq!(nmi(&relabeled, &b).unwrap(), nmi(&a, &b).unwrap());
        prop_assert_eq!(nmi(&a, &relabeled).unwrap(), 1.0);
    }

    #[test]
    fn ap_and_rr_are_bounded(rel in prop::collection::vec(0..2u8, 0..100), extra in 0usize..10) {
        let hits = rel.iter().filter(|&&r| r == 1).count();
        if hits + extra > 0 {
            let ap = average_precision(&rel, hits + extra).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
            prop_assert!((ap - common::ap_oracle(&rel, hits + extra)).abs() <= 1e-12);
        }
        let rr = reciprocal_rank(&rel);
        prop_assert!((0.0..=1.0).contains(&rr));
        prop_assert_eq!(rr == 0.0, hits == 0);
    }

    #[test]
    fn retrieval_is_invariant_under_signed_permutations(
        dim in 1usize..6,
        n in 20usize..150,
        seed in any::<u64>(),
        perm_signs in (1usize..6).prop_flat_map(|d| (Just((0..d).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(any::<bool>(), d), prop::collection::vec(-20..20i32, d))),
        k_eval in 1usize..40,
    ) {
        let (perm, signs, shift) = perm_signs;
        let dim = dim.min(perm.len());
        let perm: Vec<usize> = perm.into_iter().filter(|&p| p < dim).collect();
        let pts = grid_points(n, dim, seed);
        let labels = labels_for(&pts, dim, 3, seed ^ 9);
        let split = n / 3;
        let score = |p: &[f32]| {
            retrieval_eval_points(&p[split * dim..], &labels[split..], &p[..split * dim], &labels[..split], dim, k_eval, Space::FullDim).unwrap()
        };
        let base = score(&pts);
        let moved = score(&signed_permutation(&pts, dim, &perm, &signs[..dim], &shift[..dim]));
        prop_assert_eq!(base.map_adjusted, moved.map_adjusted);
        prop_assert_eq!(base.mrr_adjusted, moved.mrr_adjusted);
        prop_assert!((0.0..=1.0).contains(&base.map_adjusted) && (0.0..=1.0).contains(&base.mrr_adjusted));
    }

    #[test]
    fn retrieval_survives_generic_rotation(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::TAU) {
        // Well-separated continuous points: rounding never reorders neighbours.
        let mut r = rng(seed);
        let n = 60;
        let pts: Vec<[f64; 2]> = (0..n).map(|i| [(i % 10) as f64 * 3.0 + 0.3 * gauss(&mut r), (i / 10) as f64 * 3.0 + 0.3 * gauss(&mut r)]).collect();
        let labels: Vec<usize> = (0..n).map(|i| (i % 10) / 4).collect();
        let flat = |f: &dyn Fn([f64; 2]) -> [f64; 2]| pts.iter().flat_map(|p| f(*p).map(|x| x as f32)).collect::<Vec<f32>>();
        let (s, c) = angle.sin_cos();
        let a = flat(&|p| p);
        let b = flat(&|p| [c * p[0] - s * p[1] + 5.0, s * p[0] + c * p[1] - 2.0]);
        let score = |p: &[f32]| retrieval_eval_points(&p[40..], &labels[20..], &p[..40], &labels[..20], 2, 10, Space::Layout).unwrap();
        let (x, y) = (score(&a), score(&b));
        prop_assert!((x.map_adjusted - y.map_adjusted).abs() < 1e-12);
        prop_assert!((x.mrr_adjusted - y.mrr_adjusted).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn kmeans_trace_is_monotone_and_ends_at_a_fixed_point(n in 5usize..200, dim in 1usize..6, k in 1usize..6, seed in any::<u64>()) {
        let k = k.min(n);
        let mut r = rng(seed);
        let data: Vec<f32> = (0..n * dim).map(|_| gauss(&mut r) as f32).collect();
        let res = kmeans(&data, dim, k, seed, 300).unwrap();
        for w in res.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "inertia rose: {:?}", w);
        }
        prop_assert!(res.assignments.iter().all(|&a| a < k));
        prop_assert!(res.converged);
        for (i, &a) in res.assignments.iter().enumerate() {
            let p: Vec<f64> = data[i * dim..(i + 1) * dim].iter().map(|x| *x as f64).collect();
            let d = |c: usize| p.iter().zip(&res.centroids[c * dim..(c + 1) * dim]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            let best = (0..k).min_by(|&x, &y| d(x).partial_cmp(&d(y)).unwrap().then(x.cmp(&y))).unwrap();
            prop_assert_eq!(a, best, "point {} not at its nearest centroid", i);
        }
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| res.assignments[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for j in 0..dim {
                let mean = members.iter().map(|&i| data[i * dim + j] as f64).sum::<f64>() / members.len() as f64;
                prop_assert!((mean - res.centroids[c * dim + j]).abs() < 1e-9);
            }
        }
        let inertia: f64 = (0..n)
            .map(|i| {
                let c = res.assignments[i];
                data[i * dim..(i + 1) * dim].iter().zip(&res.centroids[c * dim..(c + 1) * dim]).map(|(x, y)| (*x as f64 - y).powi(2)).sum::<f64>()
            })
            .sum();
        prop_assert!((inertia - res.inertia).abs() <= 1e-9 * inertia.max(1.0));
    }
}

#[test]
fn k_equal_one_gives_total_variance() {
    let mut r = rng(4);
    let data: Vec<f32> = (0..300).map(|_| gauss(&mut r) as f32).collect();
    let res = kmeans(&data, 3, 1, 0, 300).unwrap();
    let pts: Vec<&[f32]> = data.chunks_exact(3).collect();
    let mean: Vec<f64> = (0..3).map(|j| pts.iter().map(|p| p[j] as f64).sum::<f64>() / 100.0).collect();
    let mean32: Vec<f32> = mean.iter().map(|x| *x as f32).collect();
    let total: f64 = pts.iter().map(|p| sq_dist(p, &mean32)).sum();
    assert!((res.inertia - total).abs() < 1e-4, "{} vs {}", res.inertia, total);
    for j in 0..3 {
        assert!((res.centroids[j] - mean[j]).abs() < 1e-12);
    }
}
