//! Metrics emission: the per-round CSV and the threshold comparison CSV.
//!
//! Per-round rows carry six-decimal floats and round-trip losslessly at
//! that precision; the comparison table uses four decimals.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::orchestrator::{ComparisonRow, StageOutcome, SubmflOutcome};

pub const METRICS_HEADER: &str =
    "stage,threshold,round,accuracy,loss,participation,global_sparsity,skipped";

pub const COMPARISON_HEADER: &str = "threshold,sfl_accuracy,submfl_accuracy,sfl_loss,submfl_loss,\
sfl_participation,submfl_participation,sfl_global_sparsity,submfl_global_sparsity";

/// One per-round metrics record. Round 0 is the pre-training snapshot of a
/// stage; rounds 1.. mirror the federated loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub stage: String,
    pub threshold: f64,
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub participation: usize,
    pub global_sparsity: f64,
    pub skipped: bool,
}

impl MetricsRow {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("threshold", self.threshold),
            ("accuracy", self.accuracy),
            ("loss", self.loss),
            ("global_sparsity", self.global_sparsity),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(match name {
                    "threshold" => "metrics threshold",
                    "accuracy" => "metrics accuracy",
                    "loss" => "metrics loss",
                    _ => "metrics global sparsity",
                }));
            }
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(Error::InvalidArgument(format!(
                "accuracy {} outside [0, 1]",
                self.accuracy
            )));
        }
        Ok(())
    }
}

pub fn render_metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        row.validate()?;
        out.push_str(&format!(
            "{},{:.6},{},{:.6},{:.6},{},{:.6},{}\n",
            row.stage,
            row.threshold,
            row.round,
            row.accuracy,
            row.loss,
            row.participation,
            row.global_sparsity,
            row.skipped
        ));
    }
    Ok(out)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    fsio::write_atomic(path, render_metrics_csv(rows)?.as_bytes())
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "bad metrics header: {other:?}"
            )))
        }
    }
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::InvalidArgument(format!(
                    "metrics row has {} fields: {line:?}",
                    fields.len()
                )));
            }
            Ok(MetricsRow {
                stage: fields[0].to_string(),
                threshold: parse_f64(fields[1])?,
                round: parse_usize(fields[2])?,
                accuracy: parse_f64(fields[3])?,
                loss: parse_f64(fields[4])?,
                participation: parse_usize(fields[5])?,
                global_sparsity: parse_f64(fields[6])?,
                skipped: match fields[7] {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "bad skipped flag {other:?}"
                        )))
                    }
                },
            })
        })
        .collect()
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    parse_metrics_csv(&fsio::read_to_string(path)?)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::InvalidArgument(format!("bad float {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::InvalidArgument(format!("bad integer {s:?}")))
}

/// Flatten a cascade run into per-round metrics rows: a round-0 snapshot
/// per stage followed by one row per federated round.
pub fn collect_metrics_rows(outcome: &SubmflOutcome) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for (stage, report_row) in outcome.stages.iter().zip(&outcome.report.rows) {
        rows.push(MetricsRow {
            stage: report_row.stage.clone(),
            threshold: report_row.threshold,
            round: 0,
            accuracy: report_row.pre_accuracy,
            loss: report_row.pre_loss,
            participation: report_row.participation,
            global_sparsity: pre_train_sparsity(stage),
            skipped: false,
        });
        for r in &stage.rounds {
            rows.push(MetricsRow {
                stage: report_row.stage.clone(),
                threshold: report_row.threshold,
                round: r.round,
                accuracy: r.accuracy,
                loss: r.loss,
                participation: r.participants.len(),
                global_sparsity: r.global_sparsity,
                skipped: r.skipped,
            });
        }
    }
    rows
}

/// Structural sparsity of a stage's starting model: the mask zero-count
/// over all parameters.
fn pre_train_sparsity(stage: &StageOutcome) -> f64 {
    100.0 * stage.mask.zero_count() as f64 / stage.params.total_params() as f64
}

pub fn render_comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{:.4},{:.4}\n",
            r.threshold,
            r.sfl_accuracy,
            r.submfl_accuracy,
            r.sfl_loss,
            r.submfl_loss,
            r.sfl_participation,
            r.submfl_participation,
            r.sfl_global_sparsity,
            r.submfl_global_sparsity
        ));
    }
    out
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    fsio::write_atomic(path, render_comparison_csv(rows).as_bytes())
}

pub fn parse_comparison_csv(text: &str) -> Result<Vec<ComparisonRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == COMPARISON_HEADER => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "bad comparison header: {other:?}"
            )))
        }
    }
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(Error::InvalidArgument(format!(
                    "comparison row has {} fields: {line:?}",
                    fields.len()
                )));
            }
            Ok(ComparisonRow {
                threshold: parse_f64(fields[0])?,
                sfl_accuracy: parse_f64(fields[1])?,
                submfl_accuracy: parse_f64(fields[2])?,
                sfl_loss: parse_f64(fields[3])?,
                submfl_loss: parse_f64(fields[4])?,
                sfl_participation: parse_usize(fields[5])?,
                submfl_participation: parse_usize(fields[6])?,
                sfl_global_sparsity: parse_f64(fields[7])?,
                submfl_global_sparsity: parse_f64(fields[8])?,
            })
        })
        .collect()
}
