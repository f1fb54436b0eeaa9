//! Output-directory layout for experiment runs: per-round metrics CSV,
//! the comparison CSV, a JSON summary, and one checkpoint per cascade
//! stage. All writes are atomic.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Provenance};
use crate::config::config_hash;
use crate::error::{Error, Result};
use crate::fsio;
use crate::metrics::{collect_metrics_rows, write_comparison_csv, write_metrics_csv};
use crate::orchestrator::{CascadeRow, ExperimentConfig, ExperimentOutput};

pub const METRICS_FILE: &str = "metrics.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// The JSON summary of one run; deterministic for a fixed config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub submfl: Vec<CascadeRow>,
    pub sfl: Vec<CascadeRow>,
}

/// Write every artifact of a finished run into `config.out_dir`.
pub fn write_run_artifacts(
    config: &ExperimentConfig,
    output: &ExperimentOutput,
) -> Result<Vec<PathBuf>> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = config_hash(config);
    let mut written = Vec::new();

    let metrics_path = dir.join(METRICS_FILE);
    write_metrics_csv(&metrics_path, &collect_metrics_rows(&output.submfl))?;
    written.push(metrics_path);

    let comparison_path = dir.join(COMPARISON_FILE);
    write_comparison_csv(&comparison_path, &output.comparison)?;
    written.push(comparison_path);

    let summary = Summary {
        config_hash: hash.clone(),
        seed: config.seed,
        submfl: output.submfl.report.rows.clone(),
        sfl: output.sfl.clone(),
    };
    let summary_path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Checkpoint(format!("summary serialize: {e}")))?;
    fsio::write_atomic(&summary_path, json.as_bytes())?;
    written.push(summary_path);

    for stage in &output.submfl.stages {
        let label = stage.stage.label();
        let ck = Checkpoint::from_params(
            &stage.params,
            Some(&stage.mask),
            Provenance {
                config_hash: hash.clone(),
                seed: config.seed,
                stage: label.clone(),
            },
        )?;
        let path = dir.join(format!("{label}.json"));
        ck.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fsio::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
