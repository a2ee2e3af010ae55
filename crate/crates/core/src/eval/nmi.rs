use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Normalized mutual information `I(A;B) / sqrt(H(A)·H(B))`, natural log.
///
/// Two single-cluster partitions score 1; if exactly one is single-cluster
/// the score is 0, and partitions equal up to relabeling score exactly 1.
/// Terms are summed in sorted order, which makes the result
/// exactly symmetric and independent of cluster ids.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "partitions differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty partitions".into()));
    }
    let n = a.len() as f64;
    let mut ca: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cb: BTreeMap<usize, u64> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *joint.entry((x, y)).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    if joint.len() == ca.len() && joint.len() == cb.len() {
        // Same partition under different ids: I(A;B) = H(A) = H(B).
        return Ok(1.0);
    }
    let mut terms: Vec<f64> = joint
        .iter()
        .map(|(&(x, y), &nij)| {
            let outer = (u128::from(ca[&x]) * u128::from(cb[&y])) as f64;
            let nij = nij as f64;
            nij / n * (n * nij / outer).ln()
        })
        .collect();
    let mi = sorted_sum(&mut terms);
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    let mut terms: Vec<f64> = counts
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .collect();
    sorted_sum(&mut terms).max(0.0)
}

fn sorted_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}
