//! End-to-end experiment flow: train the dense global model, generate the
//! submodel cascade, run the per-submodel drop/train loop, and produce the
//! comparison against the random-init sparse baseline.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{holdout_split, partition_equal, synthetic_blobs, with_label_noise, Dataset, Partition};
use crate::error::{Error, Result};
use crate::federation::{
    drop_devices, eligible_devices, sample_population, train_model_on_devices,
    CapacityDistribution, DevicePopulation, RoundReport, Stage, TargetAccDistribution, TrainSetup,
};
use crate::nn::{evaluate, init_network, Hyperparams, NetworkSpec, ParamSet};
use crate::pruning::{
    apply_mask, generate_submodels, global_sparsity, threshold_mask, Mask, PruneMode,
};
use crate::rng::{derive_seed, stream};

/// Where the experiment data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Synthetic {
        samples: usize,
        classes: usize,
        dim: usize,
        separation: f64,
        label_noise: f64,
    },
}

/// Full experiment configuration. All randomness flows from `seed`; nothing
/// is drawn from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub layers: Vec<usize>,
    pub dataset: DatasetSource,
    pub n_devices: usize,
    pub dense_capable_fraction: f64,
    pub availability: f64,
    pub rounds: usize,
    pub hyper: Hyperparams,
    pub prune_mode: PruneMode,
    /// Capacity range `[lo, hi)` for devices that cannot train the dense
    /// model; `None` derives it from the cascade's trainable-size range.
    pub capacity_range: Option<(usize, usize)>,
    pub target_acc_range: (f64, f64),
    pub min_fit_clients: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(self.layers.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.network_spec()?;
        for (name, f) in [
            ("dense_capable_fraction", self.dense_capable_fraction),
            ("availability", self.availability),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1], got {f}")));
            }
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout_fraction must be in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.n_devices == 0 {
            return Err(Error::Config("devices must be >= 1".into()));
        }
        if let DatasetSource::Synthetic { dim, classes, .. } = &self.dataset {
            if *dim != spec.input_dim() {
                return Err(Error::Config(format!(
                    "synthetic_dim {} does not match input layer {}",
                    dim,
                    spec.input_dim()
                )));
            }
            if *classes != spec.output_dim() {
                return Err(Error::Config(format!(
                    "synthetic_classes {} does not match output layer {}",
                    classes,
                    spec.output_dim()
                )));
            }
        }
        let (lo, hi) = self.target_acc_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!(
                "target accuracy range must satisfy 0 <= lo <= hi <= 1, got [{lo}, {hi}]"
            )));
        }
        self.hyper.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Capacity range for non-dense devices: configured, or derived as
    /// `[n - floor(0.9 * P), n)` so the sparsest submodel admits everyone
    /// and eligibility grows roughly linearly along the cascade.
    pub fn effective_capacity_range(&self, spec: &NetworkSpec) -> (usize, usize) {
        match self.capacity_range {
            Some(range) => range,
            None => {
                let n = spec.total_params();
                let p = spec.weight_count();
                let lo = n - (0.9 * p as f64).floor() as usize;
                (lo, n)
            }
        }
    }
}

/// One row of the cascade report, for either arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeRow {
    pub stage: String,
    pub threshold: f64,
    pub pre_accuracy: f64,
    pub pre_loss: f64,
    pub post_accuracy: Option<f64>,
    pub post_loss: Option<f64>,
    /// Devices eligible and still active when the model trained.
    pub participation: usize,
    /// Devices whose capacity fits the model, ignoring drop-out.
    pub eligible_capacity: usize,
    pub global_sparsity: f64,
    pub rounds_executed: usize,
}

impl CascadeRow {
    /// Accuracy the comparison table reports: the untrained value for the
    /// threshold-0 row, the post-training value for submodels.
    pub fn reported_accuracy(&self) -> f64 {
        if self.threshold == 0.0 {
            self.pre_accuracy
        } else {
            self.post_accuracy.unwrap_or(self.pre_accuracy)
        }
    }

    pub fn reported_loss(&self) -> f64 {
        if self.threshold == 0.0 {
            self.pre_loss
        } else {
            self.post_loss.unwrap_or(self.pre_loss)
        }
    }
}

/// Ten rows: the dense model plus the nine submodels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub rows: Vec<CascadeRow>,
}

/// Trained parameters and per-round reports for one cascade stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: Stage,
    pub params: ParamSet,
    pub mask: Mask,
    pub rounds: Vec<RoundReport>,
}

/// Everything the cascade run produces.
#[derive(Debug, Clone)]
pub struct SubmflOutcome {
    pub report: CascadeReport,
    pub stages: Vec<StageOutcome>,
}

/// Prepared inputs shared by both arms of the experiment.
pub struct ExperimentEnv {
    pub spec: NetworkSpec,
    pub train: Dataset,
    pub holdout: Dataset,
    pub partition: Partition,
    pub population: DevicePopulation,
}

pub fn prepare_env(config: &ExperimentConfig) -> Result<ExperimentEnv> {
    config.validate()?;
    let spec = config.network_spec()?;
    let dataset = match &config.dataset {
        DatasetSource::Idx { images, labels } => crate::data::load_idx(images, labels)?,
        DatasetSource::Synthetic {
            samples,
            classes,
            dim,
            separation,
            label_noise,
        } => {
            let blobs = synthetic_blobs(
                *samples,
                *classes,
                *dim,
                *separation,
                derive_seed(config.seed, &[stream::DATASET, 1]),
            )?;
            with_label_noise(&blobs, *label_noise, derive_seed(config.seed, &[stream::DATASET, 2]))?
        }
    };
    if dataset.dim() != spec.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "dataset feature dimension",
            expected: spec.input_dim(),
            found: dataset.dim(),
        });
    }
    let (train, holdout) = holdout_split(
        &dataset,
        config.holdout_fraction,
        derive_seed(config.seed, &[stream::HOLDOUT]),
    )?;
    let partition = partition_equal(
        &train,
        config.n_devices,
        derive_seed(config.seed, &[stream::PARTITION]),
    )?;
    let (cap_lo, cap_hi) = config.effective_capacity_range(&spec);
    let population = sample_population(
        config.n_devices,
        config.dense_capable_fraction,
        spec.total_params(),
        &CapacityDistribution::Uniform {
            lo: cap_lo,
            hi: cap_hi,
        },
        &TargetAccDistribution::Uniform {
            lo: config.target_acc_range.0,
            hi: config.target_acc_range.1,
        },
        config.seed,
    )?;
    Ok(ExperimentEnv {
        spec,
        train,
        holdout,
        partition,
        population,
    })
}

/// Run the full cascade: train the dense model over capable devices, prune
/// it into nine submodels, then per submodel drop satisfied devices and
/// train it over whoever remains, densest first.
pub fn run_submfl(config: &ExperimentConfig) -> Result<SubmflOutcome> {
    let env = prepare_env(config)?;
    run_submfl_with(config, &env)
}

pub fn run_submfl_with(config: &ExperimentConfig, env: &ExperimentEnv) -> Result<SubmflOutcome> {
    let gm_init = init_network(&env.spec, derive_seed(config.seed, &[stream::INIT]))?;
    let total_params = gm_init.total_params();
    let dense_mask = Mask::all_ones(&gm_init);

    let setup_for = |stage: Stage| TrainSetup {
        dataset: &env.train,
        partition: &env.partition,
        holdout: &env.holdout,
        availability: config.availability,
        min_fit_clients: config.min_fit_clients,
        master_seed: config.seed,
        stage,
        workers: config.workers,
    };

    // Dense stage.
    let (pre_loss, pre_accuracy) = evaluate(&gm_init, &env.holdout)?;
    let gm_participation = eligible_devices(&env.population, total_params).len();
    let gm_eligible_capacity = env.population.capacity_eligible_count(total_params);
    let (gm_params, gm_rounds) = train_model_on_devices(
        gm_init,
        &dense_mask,
        &env.population,
        config.rounds,
        &config.hyper,
        &setup_for(Stage::Dense),
    )?;
    let (gm_post_loss, gm_post_accuracy) = evaluate(&gm_params, &env.holdout)?;

    let mut rows = vec![CascadeRow {
        stage: Stage::Dense.label(),
        threshold: 0.0,
        pre_accuracy,
        pre_loss,
        post_accuracy: Some(gm_post_accuracy),
        post_loss: Some(gm_post_loss),
        participation: gm_participation,
        eligible_capacity: gm_eligible_capacity,
        global_sparsity: global_sparsity(&gm_params),
        rounds_executed: config.rounds,
    }];
    let mut stages = vec![StageOutcome {
        stage: Stage::Dense,
        params: gm_params.clone(),
        mask: dense_mask,
        rounds: gm_rounds,
    }];

    // The cascade is generated up front from the trained dense model; the
    // per-stage loop only retrains.
    let cascade = generate_submodels(&gm_params, config.prune_mode)?;

    let mut population = env.population.clone();
    let mut last_accuracy = gm_post_accuracy;
    for (idx, sm) in cascade.submodels().iter().enumerate() {
        let stage = Stage::Submodel(idx as u8 + 1);
        population = drop_devices(&population, last_accuracy)?;

        let trainable = sm.trainable_params();
        let participation = eligible_devices(&population, trainable).len();
        let eligible_capacity = population.capacity_eligible_count(trainable);
        let (sm_pre_loss, sm_pre_accuracy) = evaluate(&sm.params, &env.holdout)?;

        let (params, rounds) = if participation == 0 {
            // Every fitting device has already reached its target; the
            // submodel ships untrained.
            log::info!("stage {}: no active eligible devices, skipping training", stage.label());
            (sm.params.clone(), Vec::new())
        } else {
            train_model_on_devices(
                sm.params.clone(),
                &sm.mask,
                &population,
                config.rounds,
                &config.hyper,
                &setup_for(stage),
            )?
        };
        let (post_loss, post_accuracy) = evaluate(&params, &env.holdout)?;
        rows.push(CascadeRow {
            stage: stage.label(),
            threshold: sm.threshold,
            pre_accuracy: sm_pre_accuracy,
            pre_loss: sm_pre_loss,
            post_accuracy: Some(post_accuracy),
            post_loss: Some(post_loss),
            participation,
            eligible_capacity,
            global_sparsity: global_sparsity(&params),
            rounds_executed: rounds.len(),
        });
        stages.push(StageOutcome {
            stage,
            params,
            mask: sm.mask.clone(),
            rounds,
        });
        last_accuracy = post_accuracy;
    }

    Ok(SubmflOutcome {
        report: CascadeReport { rows },
        stages,
    })
}

/// The standard-FL baseline: for every threshold a *fresh* random model is
/// pruned and evaluated with no training. The threshold-0 row shares the
/// cascade's initial dense model so the two arms start identically.
pub fn run_sfl_baseline(config: &ExperimentConfig) -> Result<Vec<CascadeRow>> {
    let env = prepare_env(config)?;
    run_sfl_baseline_with(config, &env)
}

pub fn run_sfl_baseline_with(
    config: &ExperimentConfig,
    env: &ExperimentEnv,
) -> Result<Vec<CascadeRow>> {
    let total_params = env.spec.total_params();
    let mut rows = Vec::with_capacity(10);

    let dense = init_network(&env.spec, derive_seed(config.seed, &[stream::INIT]))?;
    let (loss, accuracy) = evaluate(&dense, &env.holdout)?;
    rows.push(CascadeRow {
        stage: Stage::Dense.label(),
        threshold: 0.0,
        pre_accuracy: accuracy,
        pre_loss: loss,
        post_accuracy: None,
        post_loss: None,
        participation: eligible_devices(&env.population, total_params).len(),
        eligible_capacity: env.population.capacity_eligible_count(total_params),
        global_sparsity: global_sparsity(&dense),
        rounds_executed: 0,
    });

    for i in 1..=9u8 {
        let stage = Stage::Submodel(i);
        let threshold = stage.threshold();
        let fresh = init_network(
            &env.spec,
            derive_seed(config.seed, &[stream::SFL_INIT, u64::from(i)]),
        )?;
        let mask = threshold_mask(&fresh, threshold, config.prune_mode)?;
        let pruned = apply_mask(&fresh, &mask)?;
        let (loss, accuracy) = evaluate(&pruned, &env.holdout)?;
        let trainable = mask.trainable_count(total_params);
        rows.push(CascadeRow {
            stage: stage.label(),
            threshold,
            pre_accuracy: accuracy,
            pre_loss: loss,
            post_accuracy: None,
            post_loss: None,
            participation: eligible_devices(&env.population, trainable).len(),
            eligible_capacity: env.population.capacity_eligible_count(trainable),
            global_sparsity: global_sparsity(&pruned),
            rounds_executed: 0,
        });
    }
    Ok(rows)
}

/// One row of the merged comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub threshold: f64,
    pub sfl_accuracy: f64,
    pub submfl_accuracy: f64,
    pub sfl_loss: f64,
    pub submfl_loss: f64,
    pub sfl_participation: usize,
    pub submfl_participation: usize,
    pub sfl_global_sparsity: f64,
    pub submfl_global_sparsity: f64,
}

/// Merge the two arms into the threshold-indexed comparison table.
pub fn compare_reports(submfl: &CascadeReport, sfl: &[CascadeRow]) -> Result<Vec<ComparisonRow>> {
    if submfl.rows.len() != sfl.len() {
        return Err(Error::InvalidArgument(format!(
            "arm mismatch: {} cascade rows vs {} baseline rows",
            submfl.rows.len(),
            sfl.len()
        )));
    }
    submfl
        .rows
        .iter()
        .zip(sfl)
        .map(|(sub, base)| {
            if (sub.threshold - base.threshold).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "arm mismatch: thresholds {} vs {}",
                    sub.threshold, base.threshold
                )));
            }
            Ok(ComparisonRow {
                threshold: sub.threshold,
                sfl_accuracy: base.reported_accuracy(),
                submfl_accuracy: sub.reported_accuracy(),
                sfl_loss: base.reported_loss(),
                submfl_loss: sub.reported_loss(),
                sfl_participation: base.participation,
                submfl_participation: sub.participation,
                sfl_global_sparsity: base.global_sparsity,
                submfl_global_sparsity: sub.global_sparsity,
            })
        })
        .collect()
}

/// Both arms plus the merged table.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub submfl: SubmflOutcome,
    pub sfl: Vec<CascadeRow>,
    pub comparison: Vec<ComparisonRow>,
}

/// Run both arms on one shared environment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let env = prepare_env(config)?;
    let submfl = run_submfl_with(config, &env)?;
    let sfl = run_sfl_baseline_with(config, &env)?;
    let comparison = compare_reports(&submfl.report, &sfl)?;
    Ok(ExperimentOutput {
        submfl,
        sfl,
        comparison,
    })
}

#[cfg(test)]
mod tests;
