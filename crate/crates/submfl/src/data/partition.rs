//! Random equal sharding across devices and holdout splitting.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

use super::Dataset;

/// Assignment of sample indices to devices: one shard per device, pairwise
/// disjoint, sizes differing by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, id: usize) -> &[usize] {
        &self.shards[id]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }
}

/// Shuffle sample indices and cut them into `n_devices` near-equal
/// contiguous shards; the first `n % n_devices` shards take the remainder.
pub fn partition_equal(dataset: &Dataset, n_devices: usize, seed: u64) -> Result<Partition> {
    let n = dataset.len();
    if n_devices == 0 {
        return Err(Error::InvalidArgument("n_devices must be >= 1".into()));
    }
    if n_devices > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} samples across {n_devices} devices"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));

    let base = n / n_devices;
    let extra = n % n_devices;
    let mut shards = Vec::with_capacity(n_devices);
    let mut off = 0;
    for d in 0..n_devices {
        let size = base + usize::from(d < extra);
        shards.push(order[off..off + size].to_vec());
        off += size;
    }
    Ok(Partition { shards })
}

/// Random disjoint split with `round(fraction * n)` validation samples.
pub fn holdout_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = dataset.len();
    let v = (fraction * n as f64).round() as usize;
    if v == 0 || v == n {
        return Err(Error::InvalidArgument(format!(
            "holdout split degenerates: {v} of {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let validation = dataset.subset(&order[..v]);
    let train = dataset.subset(&order[v..]);
    Ok((train, validation))
}
