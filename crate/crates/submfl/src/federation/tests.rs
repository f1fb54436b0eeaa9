use super::*;
use crate::data::{partition_equal, synthetic_blobs};
use crate::nn::{init_network, NetworkSpec};
use crate::pruning::threshold_mask;
use crate::pruning::PruneMode;

fn uniform_caps(lo: usize, hi: usize) -> CapacityDistribution {
    CapacityDistribution::Uniform { lo, hi }
}

fn uniform_targets(lo: f64, hi: f64) -> TargetAccDistribution {
    TargetAccDistribution::Uniform { lo, hi }
}

#[test]
fn population_has_exact_dense_capable_count() {
    let n = 101_770;
    let pop = sample_population(
        1000,
        0.10,
        n,
        &uniform_caps(10_302, n),
        &uniform_targets(0.70, 0.99),
        42,
    )
    .unwrap();
    let dense = pop.devices.iter().filter(|d| d.capacity >= n).count();
    assert_eq!(dense, 100);
    assert_eq!(pop.len(), 1000);
    assert!(pop.devices.iter().all(|d| d.active));
    assert!(pop
        .devices
        .iter()
        .all(|d| (0.70..0.99).contains(&d.target_min_acc)));
}

#[test]
fn population_rejects_zero_dense_capable_devices() {
    let err = sample_population(
        100,
        0.001,
        1000,
        &uniform_caps(10, 1000),
        &uniform_targets(0.7, 0.99),
        1,
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn population_fraction_one_makes_everyone_dense_capable() {
    let pop = sample_population(50, 1.0, 1000, &uniform_caps(10, 1000), &uniform_targets(0.7, 0.9), 7)
        .unwrap();
    assert!(pop.devices.iter().all(|d| d.capacity >= 1000));
}

#[test]
fn population_is_deterministic() {
    let mk = |seed| {
        sample_population(200, 0.1, 5000, &uniform_caps(500, 5000), &uniform_targets(0.7, 0.99), seed)
            .unwrap()
    };
    assert_eq!(mk(9), mk(9));
    assert_ne!(mk(9), mk(10));
}

#[test]
fn stratified_capacities_match_uniform_cdf() {
    let (lo, hi, n_total, frac) = (1000usize, 11_000usize, 100usize, 0.10);
    let pop = sample_population(n_total, frac, 20_000, &uniform_caps(lo, hi), &uniform_targets(0.7, 0.99), 3)
        .unwrap();
    let n_rest = 90usize;
    for cutoff in (lo..hi).step_by(997) {
        let realized = pop
            .devices
            .iter()
            .filter(|d| d.capacity < 20_000 && d.capacity >= cutoff)
            .count();
        let expected = n_rest as f64 * (hi - cutoff) as f64 / (hi - lo) as f64;
        assert!(
            (realized as f64 - expected).abs() <= 1.5,
            "cutoff {cutoff}: realized {realized}, expected {expected:.2}"
        );
    }
}

#[test]
fn eligibility_matches_dense_capable_set_for_dense_model() {
    let n = 20_000;
    let pop = sample_population(100, 0.10, n, &uniform_caps(1000, n), &uniform_targets(0.7, 0.99), 5)
        .unwrap();
    let eligible = eligible_devices(&pop, n);
    assert_eq!(eligible.len(), 10);
    for id in &eligible {
        assert_eq!(pop.devices[*id].capacity, n);
    }
}

#[test]
fn eligibility_grows_as_models_shrink() {
    let n = 20_000;
    let pop = sample_population(100, 0.10, n, &uniform_caps(1000, n), &uniform_targets(0.7, 0.99), 5)
        .unwrap();
    let mut prev: Vec<DeviceId> = Vec::new();
    let mut prev_len = 0;
    for trainable in [n, 15_000, 10_000, 5_000, 1_000] {
        let now = eligible_devices(&pop, trainable);
        assert!(now.len() >= prev_len);
        assert!(prev.iter().all(|id| now.contains(id)), "eligible sets must nest");
        prev_len = now.len();
        prev = now;
    }
    // A model small enough for every capacity admits all active devices.
    assert_eq!(eligible_devices(&pop, 0).len(), 100);
}

#[test]
fn availability_sample_size_uses_rounding() {
    let devices: Vec<DeviceId> = (0..100).collect();
    assert_eq!(sample_available(&devices, 0.3, 1).unwrap().len(), 30);
    let seven: Vec<DeviceId> = (0..7).collect();
    assert_eq!(sample_available(&seven, 0.3, 1).unwrap().len(), 2);
    let mut all = sample_available(&devices, 1.0, 1).unwrap();
    all.sort_unstable();
    assert_eq!(all, devices);
}

#[test]
fn availability_is_fresh_per_round_and_reproducible() {
    let devices: Vec<DeviceId> = (0..200).collect();
    let a1 = sample_available(&devices, 0.3, derive_seed(9, &[stream::AVAILABILITY, 0, 1])).unwrap();
    let a2 = sample_available(&devices, 0.3, derive_seed(9, &[stream::AVAILABILITY, 0, 1])).unwrap();
    let b = sample_available(&devices, 0.3, derive_seed(9, &[stream::AVAILABILITY, 0, 2])).unwrap();
    assert_eq!(a1, a2);
    assert_ne!(a1, b);
    assert!(sample_available(&[], 0.3, 0).is_err());
    assert!(sample_available(&devices, 0.0, 0).is_err());
}

#[test]
fn local_train_single_batch_equals_one_adam_pass() {
    let data = synthetic_blobs(8, 2, 3, 3.0, 1).unwrap();
    let net = NetworkSpec::new(vec![3, 4, 2]).unwrap();
    let params = init_network(&net, 2).unwrap();
    let mask = Mask::all_ones(&params);
    let shard: Vec<usize> = (0..8).collect();
    let hyper = Hyperparams {
        local_epochs: 1,
        batch_size: 8,
        ..Hyperparams::default()
    };
    let (trained, count) = local_train(&params, &mask, &data, &shard, &hyper, 77).unwrap();
    assert_eq!(count, 8);

    // Manual pass over the same (shuffled) batch.
    let mut order = shard.clone();
    order.shuffle(&mut seeded_rng(77));
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    data.gather(&order, &mut inputs, &mut labels);
    let mut manual = params.clone();
    let mut state = AdamState::new(&manual);
    let (_, grads) = loss_and_grads(&manual, &inputs, &labels).unwrap();
    adam_step(&mut manual, &grads, &mut state, &hyper).unwrap();
    assert_eq!(trained, manual);
}

#[test]
fn local_train_keeps_masked_coordinates_zero() {
    let data = synthetic_blobs(32, 3, 5, 3.0, 4).unwrap();
    let net = NetworkSpec::new(vec![5, 6, 3]).unwrap();
    let params = init_network(&net, 5).unwrap();
    let mask = threshold_mask(&params, 0.5, PruneMode::Quantile).unwrap();
    let shard: Vec<usize> = (0..32).collect();
    let hyper = Hyperparams {
        local_epochs: 2,
        batch_size: 8,
        ..Hyperparams::default()
    };
    let (trained, _) = local_train(&params, &mask, &data, &shard, &hyper, 6).unwrap();
    assert_eq!(mask_violations(&trained, &mask), 0);
    // And training actually moved the kept coordinates.
    assert_ne!(trained, crate::pruning::apply_mask(&params, &mask).unwrap());
}

#[test]
fn local_train_zero_epochs_returns_params_unchanged() {
    let data = synthetic_blobs(8, 2, 3, 3.0, 1).unwrap();
    let net = NetworkSpec::new(vec![3, 2]).unwrap();
    let params = init_network(&net, 2).unwrap();
    let mask = Mask::all_ones(&params);
    let hyper = Hyperparams {
        local_epochs: 0,
        ..Hyperparams::default()
    };
    let (out, _) = local_train(&params, &mask, &data, &[0, 1], &hyper, 3).unwrap();
    assert_eq!(out, params);
    assert!(local_train(&params, &mask, &data, &[], &hyper, 3).is_err());
}

#[test]
fn fedavg_weighted_mean_matches_hand_oracle() {
    let net = NetworkSpec::new(vec![1, 1]).unwrap();
    let a = ParamSet::from_flat(&net, &[1.0, 2.0]).unwrap();
    let b = ParamSet::from_flat(&net, &[3.0, 4.0]).unwrap();
    let mask = Mask::all_ones(&a);
    let avg = fedavg(&[(a, 1), (b, 3)], &mask).unwrap();
    assert_eq!(avg.flatten(), vec![2.5, 3.5]);
}

#[test]
fn fedavg_of_identical_inputs_is_identity() {
    let net = NetworkSpec::new(vec![4, 3]).unwrap();
    let p = init_network(&net, 11).unwrap();
    let mask = Mask::all_ones(&p);
    let avg = fedavg(&[(p.clone(), 5), (p.clone(), 5), (p.clone(), 2)], &mask).unwrap();
    for (got, want) in avg.flatten().iter().zip(p.flatten()) {
        assert!((got - want).abs() <= 1e-15 * want.abs().max(1.0));
    }
}

#[test]
fn fedavg_equal_counts_match_per_coordinate_average() {
    let net = NetworkSpec::new(vec![3, 4, 2]).unwrap();
    let results: Vec<(ParamSet, usize)> = (0..4)
        .map(|s| (init_network(&net, s).unwrap(), 10))
        .collect();
    let mask = Mask::all_ones(&results[0].0);
    let avg = fedavg(&results, &mask).unwrap();

    let flats: Vec<Vec<f64>> = results.iter().map(|(p, _)| p.flatten()).collect();
    for (i, got) in avg.flatten().iter().enumerate() {
        let brute: f64 = flats.iter().map(|f| f[i]).sum::<f64>() / 4.0;
        assert!((got - brute).abs() <= 1e-12);
    }
}

#[test]
fn fedavg_single_result_returns_masked_input() {
    let net = NetworkSpec::new(vec![4, 4]).unwrap();
    let p = init_network(&net, 3).unwrap();
    let mask = threshold_mask(&p, 0.5, PruneMode::Quantile).unwrap();
    let avg = fedavg(&[(p.clone(), 7)], &mask).unwrap();
    assert_eq!(avg, crate::pruning::apply_mask(&p, &mask).unwrap());
}

#[test]
fn fedavg_is_linear_in_duplicated_results() {
    let net = NetworkSpec::new(vec![3, 3]).unwrap();
    let a = init_network(&net, 1).unwrap();
    let b = init_network(&net, 2).unwrap();
    let mask = Mask::all_ones(&a);
    let with_dup = fedavg(&[(a.clone(), 4), (a.clone(), 4), (b.clone(), 4)], &mask).unwrap();
    let weighted = fedavg(&[(a, 8), (b, 4)], &mask).unwrap();
    for (x, y) in with_dup.flatten().iter().zip(weighted.flatten()) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn fedavg_rejects_empty_and_zero_total() {
    let net = NetworkSpec::new(vec![2, 2]).unwrap();
    let p = init_network(&net, 1).unwrap();
    let mask = Mask::all_ones(&p);
    assert!(fedavg(&[], &mask).is_err());
    assert!(fedavg(&[(p, 0)], &mask).is_err());
}

#[test]
fn drop_devices_honors_boundaries_and_counts() {
    let mut pop = sample_population(50, 0.2, 1000, &uniform_caps(100, 1000), &uniform_targets(0.7, 0.99), 8)
        .unwrap();
    pop.devices[0].target_min_acc = 0.0;

    let at_zero = drop_devices(&pop, 0.0).unwrap();
    assert_eq!(at_zero.active_count(), 49);
    assert!(!at_zero.devices[0].active);

    let at_one = drop_devices(&pop, 1.0).unwrap();
    assert_eq!(at_one.active_count(), 0);

    let acc = 0.85;
    let dropped = drop_devices(&pop, acc).unwrap();
    let brute = pop.devices.iter().filter(|d| d.target_min_acc <= acc).count();
    assert_eq!(pop.len() - dropped.active_count(), brute);

    // Idempotent, and the active set only shrinks.
    let again = drop_devices(&dropped, acc).unwrap();
    assert_eq!(again, dropped);
    let further = drop_devices(&dropped, 0.95).unwrap();
    assert!(further.active_count() <= dropped.active_count());
    assert!(drop_devices(&pop, 1.5).is_err());
}

/// Small end-to-end federated run used by the loop tests below.
fn small_run(workers: usize) -> (ParamSet, Vec<RoundReport>) {
    let data = synthetic_blobs(120, 3, 6, 3.0, 10).unwrap();
    let (train, holdout) = crate::data::holdout_split(&data, 0.2, 11).unwrap();
    let partition = partition_equal(&train, 12, 12).unwrap();
    let net = NetworkSpec::new(vec![6, 8, 3]).unwrap();
    let params = init_network(&net, 13).unwrap();
    let n = params.total_params();
    let pop = sample_population(12, 0.5, n, &uniform_caps(10, n), &uniform_targets(0.7, 0.99), 14)
        .unwrap();
    let mask = threshold_mask(&params, 0.3, PruneMode::Quantile).unwrap();
    let setup = TrainSetup {
        dataset: &train,
        partition: &partition,
        holdout: &holdout,
        availability: 0.8,
        min_fit_clients: 2,
        master_seed: 14,
        stage: Stage::Submodel(3),
        workers,
    };
    let start = crate::pruning::apply_mask(&params, &mask).unwrap();
    train_model_on_devices(start, &mask, &pop, 5, &Hyperparams::default(), &setup).unwrap()
}

#[test]
fn training_loop_reports_every_round() {
    let (_, reports) = small_run(0);
    assert_eq!(reports.len(), 5);
    for (i, r) in reports.iter().enumerate() {
        assert_eq!(r.round, i + 1);
    }
}

#[test]
fn training_loop_preserves_mask_every_round() {
    let (final_params, reports) = small_run(0);
    assert!(reports.iter().all(|r| r.mask_violations == 0));
    assert!(final_params.all_finite());
}

#[test]
fn training_loop_participation_chain_holds() {
    let (_, reports) = small_run(0);
    for r in &reports {
        assert!(r.participants.iter().all(|id| r.available.contains(id)));
        assert!(r.available.iter().all(|id| r.eligible.contains(id)));
        if !r.skipped {
            assert_eq!(r.participants, r.available);
        } else {
            assert!(r.participants.is_empty());
        }
    }
}

#[test]
fn training_loop_is_schedule_independent() {
    let (params_one, reports_one) = small_run(1);
    let (params_four, reports_four) = small_run(4);
    assert_eq!(params_one, params_four);
    assert_eq!(reports_one.len(), reports_four.len());
    for (a, b) in reports_one.iter().zip(&reports_four) {
        assert_eq!(a.participants, b.participants);
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
    }
}

#[test]
fn training_loop_errors_without_eligible_devices() {
    let data = synthetic_blobs(40, 2, 4, 3.0, 1).unwrap();
    let (train, holdout) = crate::data::holdout_split(&data, 0.2, 2).unwrap();
    let partition = partition_equal(&train, 4, 3).unwrap();
    let net = NetworkSpec::new(vec![4, 4, 2]).unwrap();
    let params = init_network(&net, 4).unwrap();
    // Capacities far below the model size.
    let pop = sample_population(4, 0.5, 1, &uniform_caps(1, 2), &uniform_targets(0.7, 0.99), 5)
        .unwrap();
    let mask = Mask::all_ones(&params);
    let setup = TrainSetup {
        dataset: &train,
        partition: &partition,
        holdout: &holdout,
        availability: 1.0,
        min_fit_clients: 1,
        master_seed: 5,
        stage: Stage::Dense,
        workers: 0,
    };
    let err = train_model_on_devices(params, &mask, &pop, 2, &Hyperparams::default(), &setup)
        .unwrap_err();
    assert!(matches!(err, Error::NoEligibleDevices { stage } if stage == "gm"));
}
