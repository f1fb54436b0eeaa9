use super::*;
use crate::metrics::{collect_metrics_rows, render_comparison_csv, render_metrics_csv};
use crate::nn::Hyperparams;
use crate::pruning::mask_violations;

/// Small, fast configuration exercising the full pipeline.
fn mini_config() -> ExperimentConfig {
    ExperimentConfig {
        layers: vec![12, 10, 4],
        dataset: DatasetSource::Synthetic {
            samples: 400,
            classes: 4,
            dim: 12,
            separation: 3.0,
            label_noise: 0.0,
        },
        n_devices: 12,
        dense_capable_fraction: 0.25,
        availability: 0.8,
        rounds: 3,
        hyper: Hyperparams {
            batch_size: 16,
            local_epochs: 1,
            ..Hyperparams::default()
        },
        prune_mode: PruneMode::Quantile,
        capacity_range: None,
        target_acc_range: (0.7, 0.99),
        min_fit_clients: 2,
        holdout_fraction: 0.2,
        seed: 2024,
        out_dir: std::path::PathBuf::from("unused"),
        workers: 0,
    }
}

#[test]
fn cascade_report_has_ten_rows_with_increasing_thresholds() {
    let outcome = run_submfl(&mini_config()).unwrap();
    let rows = &outcome.report.rows;
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0].stage, "gm");
    for (i, row) in rows.iter().enumerate() {
        assert!((row.threshold - i as f64 / 10.0).abs() < 1e-12);
        if i > 0 {
            assert_eq!(row.stage, format!("sm{i}"));
        }
    }
}

#[test]
fn cascade_sparsity_and_capacity_eligibility_are_monotone() {
    let outcome = run_submfl(&mini_config()).unwrap();
    for pair in outcome.report.rows.windows(2) {
        assert!(pair[1].global_sparsity >= pair[0].global_sparsity - 1e-12);
        assert!(pair[1].eligible_capacity >= pair[0].eligible_capacity);
    }
}

#[test]
fn cascade_stages_respect_masks_everywhere() {
    let outcome = run_submfl(&mini_config()).unwrap();
    for stage in &outcome.stages {
        assert_eq!(mask_violations(&stage.params, &stage.mask), 0);
        for round in &stage.rounds {
            assert_eq!(round.mask_violations, 0);
        }
    }
}

#[test]
fn cascade_trains_densest_first_and_counts_rounds() {
    let config = mini_config();
    let outcome = run_submfl(&config).unwrap();
    let labels: Vec<String> = outcome.stages.iter().map(|s| s.stage.label()).collect();
    assert_eq!(labels[0], "gm");
    assert_eq!(labels[9], "sm9");
    for row in &outcome.report.rows {
        assert!(row.rounds_executed == 0 || row.rounds_executed == config.rounds);
        if row.rounds_executed == 0 && row.stage != "gm" {
            // Untrained stages ship the pruned model unchanged.
            assert_eq!(row.post_accuracy.unwrap(), row.pre_accuracy);
        }
    }
}

#[test]
fn baseline_rows_share_the_initial_dense_model() {
    let config = mini_config();
    let env = prepare_env(&config).unwrap();
    let submfl = run_submfl_with(&config, &env).unwrap();
    let sfl = run_sfl_baseline_with(&config, &env).unwrap();
    assert_eq!(sfl.len(), 10);
    // The threshold-0 row is the same untrained dense model on both arms.
    let gm = &submfl.report.rows[0];
    let base = &sfl[0];
    assert_eq!(gm.pre_accuracy.to_bits(), base.pre_accuracy.to_bits());
    assert_eq!(gm.pre_loss.to_bits(), base.pre_loss.to_bits());
    assert_eq!(gm.eligible_capacity, base.eligible_capacity);
    assert!(base.post_accuracy.is_none());
    // Baseline never trains.
    assert!(sfl.iter().all(|r| r.rounds_executed == 0));
}

#[test]
fn baseline_participation_ignores_drop_out_but_matches_capacity() {
    let config = mini_config();
    let env = prepare_env(&config).unwrap();
    let sfl = run_sfl_baseline_with(&config, &env).unwrap();
    for row in &sfl {
        assert_eq!(row.participation, row.eligible_capacity);
    }
    for pair in sfl.windows(2) {
        assert!(pair[1].participation >= pair[0].participation);
    }
}

#[test]
fn comparison_merges_arms_in_table_shape() {
    let config = mini_config();
    let env = prepare_env(&config).unwrap();
    let submfl = run_submfl_with(&config, &env).unwrap();
    let sfl = run_sfl_baseline_with(&config, &env).unwrap();
    let table = compare_reports(&submfl.report, &sfl).unwrap();
    assert_eq!(table.len(), 10);
    // Row 0 pairs are equal: same untrained model on both arms.
    assert_eq!(table[0].sfl_accuracy, table[0].submfl_accuracy);
    assert_eq!(table[0].sfl_loss, table[0].submfl_loss);
    // Submodel rows report post-training accuracy on the cascade arm.
    for (row, sub) in table.iter().zip(&submfl.report.rows).skip(1) {
        assert_eq!(row.submfl_accuracy, sub.post_accuracy.unwrap());
    }

    let err = compare_reports(&submfl.report, &sfl[1..]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn comparing_a_report_with_itself_pairs_equal_columns() {
    let config = mini_config();
    let outcome = run_submfl(&config).unwrap();
    let self_rows = outcome.report.rows.clone();
    let table = compare_reports(&outcome.report, &self_rows).unwrap();
    for row in &table {
        assert_eq!(row.sfl_accuracy, row.submfl_accuracy);
        assert_eq!(row.sfl_loss, row.submfl_loss);
        assert_eq!(row.sfl_participation, row.submfl_participation);
        assert_eq!(row.sfl_global_sparsity, row.submfl_global_sparsity);
    }
}

#[test]
fn experiment_is_deterministic_end_to_end() {
    let config = mini_config();
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&config).unwrap();
    assert_eq!(a.submfl.report, b.submfl.report);
    assert_eq!(a.sfl, b.sfl);
    assert_eq!(
        render_comparison_csv(&a.comparison),
        render_comparison_csv(&b.comparison)
    );
    assert_eq!(
        render_metrics_csv(&collect_metrics_rows(&a.submfl)).unwrap(),
        render_metrics_csv(&collect_metrics_rows(&b.submfl)).unwrap()
    );
}

#[test]
fn metrics_rows_cover_round_zero_and_every_training_round() {
    let config = mini_config();
    let outcome = run_submfl(&config).unwrap();
    let rows = collect_metrics_rows(&outcome);
    for stage in &outcome.stages {
        let label = stage.stage.label();
        let stage_rows: Vec<_> = rows.iter().filter(|r| r.stage == label).collect();
        assert_eq!(stage_rows.len(), stage.rounds.len() + 1);
        assert_eq!(stage_rows[0].round, 0);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut config = mini_config();
    config.availability = 0.0;
    assert!(matches!(config.validate(), Err(Error::Config(_))));

    let mut config = mini_config();
    config.rounds = 0;
    assert!(config.validate().is_err());

    let mut config = mini_config();
    config.layers = vec![12];
    assert!(config.validate().is_err());

    let mut config = mini_config();
    if let DatasetSource::Synthetic { dim, .. } = &mut config.dataset {
        *dim = 11;
    }
    assert!(config.validate().is_err());
}
