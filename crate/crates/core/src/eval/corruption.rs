use std::ops::RangeInclusive;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{IngestRow, ProjectData};

/// Three to five foreign records per injection.
pub const DEFAULT_CORRUPTION_RANGE: RangeInclusive<usize> = 3..=5;

/// What [`plan_corruption`] decided to inject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionPlan {
    /// Indices into the pool, in draw order.
    pub picks: Vec<usize>,
}

/// Draws the number of records uniformly from `count_range`, then that many
/// distinct pool entries. Deterministic for a given seed and pool size.
pub fn plan_corruption(pool_len: usize, seed: u64, count_range: RangeInclusive<usize>) -> Result<CorruptionPlan> {
    if count_range.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "empty count range {}..={}",
            count_range.start(),
            count_range.end()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(count_range);
    if pool_len < count {
        return Err(Error::InsufficientPool {
            needed: count,
            available: pool_len,
        });
    }
    let picks = rand::seq::index::sample(&mut rng, pool_len, count).into_vec();
    Ok(CorruptionPlan { picks })
}

/// Ingests a seeded handful of `pool` records flagged as foreign and returns
/// their ids. Pool labels are dropped: foreign records belong to no class of
/// the project. Foreign records appear in layouts but not in default exports.
pub fn inject_corruption(
    data: &mut ProjectData,
    pool: &[IngestRow],
    seed: u64,
    count_range: RangeInclusive<usize>,
) -> Result<Vec<String>> {
    let plan = plan_corruption(pool.len(), seed, count_range)?;
    let rows: Vec<IngestRow> = plan
        .picks
        .iter()
        .map(|&i| IngestRow {
            label: None,
            foreign: true,
            ..pool[i].clone()
        })
        .collect();
    let ids = rows.iter().map(|r| r.id.clone()).collect();
    data.ingest(rows)?;
    Ok(ids)
}
