//! Device population and the FedAvg training loop: capacity-based
//! eligibility, per-round availability sampling, masked local training,
//! sample-weighted aggregation, and target-accuracy drop-out.
//!
//! Everything is driven by seeds derived from the master seed, so two runs
//! with the same configuration produce identical results no matter how
//! many workers execute the local-training tasks.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::nn::{adam_step, evaluate, loss_and_grads, AdamState, Hyperparams, ParamSet};
use crate::pruning::{apply_mask_in_place, global_sparsity, mask_violations, Mask};
use crate::rng::{derive_seed, seeded_rng, stream};

pub type DeviceId = usize;

/// One simulated device. `capacity` is the largest trainable
/// nonzero-parameter count the device can handle; `target_min_acc` is the
/// accuracy at which it stops participating.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: DeviceId,
    pub capacity: usize,
    pub target_min_acc: f64,
    pub shard_id: usize,
    pub active: bool,
}

/// The device set, ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DevicePopulation {
    pub devices: Vec<Device>,
    pub master_seed: u64,
}

impl DevicePopulation {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.devices.iter().filter(|d| d.active).count()
    }

    /// Devices (active or not) whose capacity fits the given trainable
    /// parameter count. Drop-out-independent, so it grows monotonically as
    /// models get sparser.
    pub fn capacity_eligible_count(&self, trainable: usize) -> usize {
        self.devices
            .iter()
            .filter(|d| d.capacity >= trainable)
            .count()
    }
}

/// Capacity draw for devices that cannot train the dense model.
#[derive(Debug, Clone, PartialEq)]
pub enum CapacityDistribution {
    /// Evenly covers `[lo, hi)` by inverse-CDF stratification: realized
    /// counts above any cutoff match the uniform CDF to within one device,
    /// which devices get which capacity is a seeded shuffle.
    Uniform { lo: usize, hi: usize },
}

/// Per-device target accuracy draw.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetAccDistribution {
    Uniform { lo: f64, hi: f64 },
}

/// Build a device population: `dense_capable_fraction` of devices receive
/// capacity equal to `dense_param_count`, the rest draw from
/// `capacity_dist`. Every device draws a target accuracy. Deterministic
/// given `seed`; device `i` owns shard `i`.
pub fn sample_population(
    n_devices: usize,
    dense_capable_fraction: f64,
    dense_param_count: usize,
    capacity_dist: &CapacityDistribution,
    target_dist: &TargetAccDistribution,
    seed: u64,
) -> Result<DevicePopulation> {
    if n_devices == 0 {
        return Err(Error::InvalidArgument("n_devices must be >= 1".into()));
    }
    if !(dense_capable_fraction > 0.0 && dense_capable_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dense_capable_fraction must be in (0, 1], got {dense_capable_fraction}"
        )));
    }
    let CapacityDistribution::Uniform { lo, hi } = *capacity_dist;
    if lo >= hi {
        return Err(Error::InvalidArgument(format!(
            "capacity range is empty: [{lo}, {hi})"
        )));
    }
    let TargetAccDistribution::Uniform {
        lo: t_lo,
        hi: t_hi,
    } = *target_dist;
    if !(0.0..=1.0).contains(&t_lo) || !(0.0..=1.0).contains(&t_hi) || t_lo > t_hi {
        return Err(Error::InvalidArgument(format!(
            "target accuracy range must satisfy 0 <= lo <= hi <= 1, got [{t_lo}, {t_hi}]"
        )));
    }

    let n_dense = ((dense_capable_fraction * n_devices as f64).round() as usize).min(n_devices);
    if n_dense == 0 {
        return Err(Error::InvalidArgument(format!(
            "no dense-capable devices: fraction {dense_capable_fraction} of {n_devices} rounds to zero"
        )));
    }

    // Which devices are dense-capable.
    let mut ids: Vec<DeviceId> = (0..n_devices).collect();
    ids.shuffle(&mut seeded_rng(derive_seed(seed, &[stream::POPULATION, 1])));
    let mut dense_capable = vec![false; n_devices];
    for &id in ids.iter().take(n_dense) {
        dense_capable[id] = true;
    }

    // Stratified capacities for the rest: the j-th of m devices takes the
    // (j + 0.5)/m quantile of Uniform[lo, hi), then a shuffle decides which
    // device gets which value.
    let n_rest = n_devices - n_dense;
    let span = (hi - lo) as u128;
    let mut rest_caps: Vec<usize> = (0..n_rest)
        .map(|j| lo + (((2 * j as u128 + 1) * span) / (2 * n_rest.max(1) as u128)) as usize)
        .collect();
    rest_caps.shuffle(&mut seeded_rng(derive_seed(seed, &[stream::POPULATION, 2])));

    let mut target_rng = seeded_rng(derive_seed(seed, &[stream::POPULATION, 3]));
    let mut rest_iter = rest_caps.into_iter();
    let devices = (0..n_devices)
        .map(|id| {
            let capacity = if dense_capable[id] {
                dense_param_count
            } else {
                rest_iter.next().expect("one capacity per non-dense device")
            };
            let target_min_acc = if t_lo == t_hi {
                t_lo
            } else {
                target_rng.gen_range(t_lo..t_hi)
            };
            Device {
                id,
                capacity,
                target_min_acc,
                shard_id: id,
                active: true,
            }
        })
        .collect();

    Ok(DevicePopulation {
        devices,
        master_seed: seed,
    })
}

/// Active devices whose capacity fits a model with `trainable`
/// potentially-nonzero parameters, ascending by id.
pub fn eligible_devices(population: &DevicePopulation, trainable: usize) -> Vec<DeviceId> {
    population
        .devices
        .iter()
        .filter(|d| d.active && d.capacity >= trainable)
        .map(|d| d.id)
        .collect()
}

/// Uniform sample without replacement of `round(fraction * len)` devices;
/// deterministic given `round_seed`. The result is sorted by id.
pub fn sample_available(
    devices: &[DeviceId],
    fraction: f64,
    round_seed: u64,
) -> Result<Vec<DeviceId>> {
    if devices.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot sample availability from an empty device set".into(),
        ));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "availability fraction must be in (0, 1], got {fraction}"
        )));
    }
    let k = ((fraction * devices.len() as f64).round() as usize).min(devices.len());
    let mut pool = devices.to_vec();
    pool.shuffle(&mut seeded_rng(round_seed));
    let mut chosen: Vec<DeviceId> = pool.into_iter().take(k).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Devices whose target accuracy is already met become inactive. Idempotent
/// for a fixed accuracy; never reactivates a device.
pub fn drop_devices(population: &DevicePopulation, model_accuracy: f64) -> Result<DevicePopulation> {
    if !(0.0..=1.0).contains(&model_accuracy) {
        return Err(Error::InvalidArgument(format!(
            "model accuracy must be in [0, 1], got {model_accuracy}"
        )));
    }
    let mut out = population.clone();
    for d in &mut out.devices {
        if d.target_min_acc <= model_accuracy {
            d.active = false;
        }
    }
    Ok(out)
}

/// Device-side training: `local_epochs` passes of shuffled mini-batch Adam
/// with a fresh optimizer state, re-applying the mask after every step.
/// Returns the updated parameters and the shard size.
pub fn local_train(
    params: &ParamSet,
    mask: &Mask,
    dataset: &Dataset,
    shard: &[usize],
    hyper: &Hyperparams,
    device_seed: u64,
) -> Result<(ParamSet, usize)> {
    if shard.is_empty() {
        return Err(Error::InvalidArgument("device shard is empty".into()));
    }
    hyper.validate()?;
    let mut local = params.clone();
    apply_mask_in_place(&mut local, mask)?;
    let mut state = AdamState::new(&local);
    let mut rng = seeded_rng(device_seed);
    let mut order: Vec<usize> = shard.to_vec();
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..hyper.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            dataset.gather(batch, &mut inputs, &mut labels);
            let (_, grads) = loss_and_grads(&local, &inputs, &labels)?;
            adam_step(&mut local, &grads, &mut state, hyper)?;
            apply_mask_in_place(&mut local, mask)?;
        }
    }
    Ok((local, shard.len()))
}

/// Sample-count-weighted coordinate mean over local results, accumulated in
/// list order, then masked. Callers pass results in ascending device-id
/// order for bitwise reproducibility.
pub fn fedavg(local_results: &[(ParamSet, usize)], mask: &Mask) -> Result<ParamSet> {
    let Some((first, _)) = local_results.first() else {
        return Err(Error::InvalidArgument("fedavg needs at least one result".into()));
    };
    let total: usize = local_results.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("fedavg total sample count is zero".into()));
    }
    let mut acc = ParamSet::zeros_like(first);
    for (params, count) in local_results {
        acc.check_congruent(params, "fedavg result")?;
        let w = *count as f64 / total as f64;
        for (dst, src) in acc.layers_mut().iter_mut().zip(params.layers()) {
            for (a, &p) in dst.weights.iter_mut().zip(&src.weights) {
                *a += w * p;
            }
            for (a, &p) in dst.biases.iter_mut().zip(&src.biases) {
                *a += w * p;
            }
        }
    }
    apply_mask_in_place(&mut acc, mask)?;
    Ok(acc)
}

/// Which model a training pass is for; selects the seed stream and the
/// stage label in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dense,
    Submodel(u8),
}

impl Stage {
    pub fn label(&self) -> String {
        match self {
            Stage::Dense => "gm".to_string(),
            Stage::Submodel(i) => format!("sm{i}"),
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Stage::Dense => 0.0,
            Stage::Submodel(i) => f64::from(*i) / 10.0,
        }
    }

    pub fn tag(&self) -> u64 {
        match self {
            Stage::Dense => 0,
            Stage::Submodel(i) => u64::from(*i),
        }
    }
}

/// Everything a training pass needs besides the model itself.
pub struct TrainSetup<'a> {
    pub dataset: &'a Dataset,
    pub partition: &'a Partition,
    pub holdout: &'a Dataset,
    pub availability: f64,
    pub min_fit_clients: usize,
    pub master_seed: u64,
    pub stage: Stage,
    /// Rayon worker count for local training; 0 uses the global pool.
    pub workers: usize,
}

/// Outcome of one federated round.
#[derive(Debug, Clone)]
pub struct RoundReport {
    pub round: usize,
    pub eligible: Vec<DeviceId>,
    pub available: Vec<DeviceId>,
    pub participants: Vec<DeviceId>,
    pub loss: f64,
    pub accuracy: f64,
    pub global_sparsity: f64,
    pub mask_violations: usize,
    pub skipped: bool,
    pub duration_secs: f64,
}

/// The federated training loop. Per round: capacity-eligible devices are
/// filtered, an availability sample is drawn, and if the sample meets the
/// quorum every sampled device trains locally and the results are
/// aggregated; otherwise the round is recorded as skipped. The holdout is
/// evaluated every round.
pub fn train_model_on_devices(
    params: ParamSet,
    mask: &Mask,
    population: &DevicePopulation,
    rounds: usize,
    hyper: &Hyperparams,
    setup: &TrainSetup,
) -> Result<(ParamSet, Vec<RoundReport>)> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("round count must be >= 1".into()));
    }
    let trainable = mask.trainable_count(params.total_params());
    let pool = if setup.workers > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(setup.workers)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?,
        )
    } else {
        None
    };

    let mut current = params;
    let mut reports = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let start = Instant::now();
        let eligible = eligible_devices(population, trainable);
        if eligible.is_empty() {
            return Err(Error::NoEligibleDevices {
                stage: setup.stage.label(),
            });
        }
        let avail_seed = derive_seed(
            setup.master_seed,
            &[stream::AVAILABILITY, setup.stage.tag(), round as u64],
        );
        let available = sample_available(&eligible, setup.availability, avail_seed)?;

        if available.len() < setup.min_fit_clients {
            let (loss, accuracy) = evaluate(&current, setup.holdout)?;
            log::debug!(
                "stage {} round {round}: skipped ({} available < {} quorum)",
                setup.stage.label(),
                available.len(),
                setup.min_fit_clients
            );
            reports.push(RoundReport {
                round,
                eligible,
                available,
                participants: Vec::new(),
                loss,
                accuracy,
                global_sparsity: global_sparsity(&current),
                mask_violations: mask_violations(&current, mask),
                skipped: true,
                duration_secs: start.elapsed().as_secs_f64(),
            });
            continue;
        }

        let train_one = |&id: &DeviceId| -> Result<(ParamSet, usize)> {
            let device = &population.devices[id];
            debug_assert_eq!(device.id, id);
            let shard = setup.partition.shard(device.shard_id);
            let seed = derive_seed(
                setup.master_seed,
                &[stream::LOCAL_TRAIN, setup.stage.tag(), round as u64, id as u64],
            );
            local_train(&current, mask, setup.dataset, shard, hyper, seed)
        };
        // `available` is sorted by id; the parallel map preserves order, so
        // the aggregation below is schedule-independent.
        let results: Result<Vec<(ParamSet, usize)>> = match &pool {
            Some(pool) => pool.install(|| available.par_iter().map(train_one).collect()),
            None => available.par_iter().map(train_one).collect(),
        };
        current = fedavg(&results?, mask)?;

        let (loss, accuracy) = evaluate(&current, setup.holdout)?;
        log::info!(
            "stage {} round {round}: {} participants, loss {loss:.4}, holdout acc {accuracy:.4}",
            setup.stage.label(),
            available.len()
        );
        reports.push(RoundReport {
            round,
            eligible,
            available: available.clone(),
            participants: available,
            loss,
            accuracy,
            global_sparsity: global_sparsity(&current),
            mask_violations: mask_violations(&current, mask),
            skipped: false,
            duration_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok((current, reports))
}

#[cfg(test)]
mod tests;
