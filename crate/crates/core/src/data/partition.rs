use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// One user's slice of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub owner: usize,
    pub indices: Vec<usize>,
    /// Exogenous quality score in `[0, 1]`, consumed by matching.
    pub data_quality: f64,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// IID sharding: seeded shuffle of all row indices, then contiguous blocks of `per_user`.
pub fn partition(
    dataset: &Dataset,
    num_users: usize,
    per_user: usize,
    seed: u64,
) -> Result<Vec<Shard>> {
    if num_users == 0 || per_user == 0 {
        return Err(Error::config("num_users and per_user must be >= 1"));
    }
    let needed = num_users
        .checked_mul(per_user)
        .ok_or_else(|| Error::config("num_users × per_user overflows"))?;
    if needed > dataset.len() {
        return Err(Error::config(format!(
            "{num_users} users × {per_user} samples = {needed} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .chunks(per_user)
        .take(num_users)
        .enumerate()
        .map(|(owner, chunk)| Shard {
            owner,
            indices: chunk.to_vec(),
            data_quality: 1.0,
        })
        .collect())
}

/// Rows not assigned to any shard, in ascending order; used as the held-out set.
pub fn holdout_indices(dataset: &Dataset, shards: &[Shard]) -> Vec<usize> {
    let mut used = vec![false; dataset.len()];
    for s in shards {
        for &i in &s.indices {
            used[i] = true;
        }
    }
    (0..dataset.len()).filter(|&i| !used[i]).collect()
}
