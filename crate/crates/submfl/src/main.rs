//! Command-line interface: `run`, `prune`, `eval`, `report`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/file error,
//! 4 runtime failure. Log verbosity comes from `RUST_LOG` (default warn).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use submfl::artifacts::{read_summary, write_run_artifacts};
use submfl::checkpoint::{Checkpoint, Provenance};
use submfl::config::{load_config, Overrides};
use submfl::data::{load_idx, synthetic_blobs, Dataset};
use submfl::error::{Error, Result};
use submfl::metrics::render_comparison_csv;
use submfl::orchestrator::{compare_reports, run_experiment, CascadeReport};
use submfl::pruning::{generate_submodels, PruneMode};

#[derive(Parser)]
#[command(name = "submfl", version, about = "Federated submodel-cascade simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment (cascade plus baseline) from a config file.
    Run(RunArgs),
    /// Generate the nine pruned submodels from a checkpoint.
    Prune(PruneArgs),
    /// Evaluate a checkpoint on a dataset, printing JSON to stdout.
    Eval(EvalArgs),
    /// Rebuild the comparison CSV from a run's summary.json.
    Report(ReportArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Quantile,
    Maxnorm,
}

impl From<ModeArg> for PruneMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Quantile => PruneMode::Quantile,
            ModeArg::Maxnorm => PruneMode::MaxNormalized,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Pruning mode override.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Device count override.
    #[arg(long)]
    devices: Option<usize>,
    /// Global round count override.
    #[arg(long)]
    rounds: Option<usize>,
    /// Availability fraction override.
    #[arg(long)]
    availability: Option<f64>,
    /// Worker thread count override (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PruneArgs {
    /// Source model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Pruning mode.
    #[arg(long, value_enum, default_value = "quantile")]
    mode: ModeArg,
    /// Directory for the submodel checkpoints and sparsity table.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Model checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// IDX image file.
    #[arg(long, requires = "labels", conflicts_with = "synthetic")]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Synthetic dataset as `samples,classes,dim,separation,seed`.
    #[arg(long)]
    synthetic: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// summary.json produced by `run`.
    #[arg(long)]
    summary: PathBuf,
    /// Write the comparison CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Prune(args) => cmd_prune(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    let overrides = Overrides {
        seed: args.seed,
        out_dir: args.out_dir,
        mode: args.mode.map(PruneMode::from),
        devices: args.devices,
        rounds: args.rounds,
        availability: args.availability,
        workers: args.workers,
    };
    overrides.apply(&mut config);
    config.validate()?;

    let output = run_experiment(&config)?;
    let written = write_run_artifacts(&config, &output)?;

    println!("{}", render_comparison_csv(&output.comparison).trim_end());
    for path in &written {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_prune(args: PruneArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let params = ck.to_params()?;
    let cascade = generate_submodels(&params, args.mode.into())?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let mut table = String::from("threshold,global_sparsity,trainable_params\n");
    for sm in cascade.submodels() {
        let out = Checkpoint::from_params(
            &sm.params,
            Some(&sm.mask),
            Provenance {
                config_hash: ck.provenance.config_hash.clone(),
                seed: ck.provenance.seed,
                stage: format!("prune_t{:.1}", sm.threshold),
            },
        )?;
        let path = args.out_dir.join(format!("submodel_t{:.1}.json", sm.threshold));
        out.save(&path)?;
        table.push_str(&format!(
            "{:.1},{:.6},{}\n",
            sm.threshold,
            sm.global_sparsity,
            sm.trainable_params()
        ));
        log::info!("wrote {}", path.display());
    }
    submfl::fsio::write_atomic(&args.out_dir.join("sparsity.csv"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    loss: f64,
    accuracy: f64,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let params = ck.to_params()?;
    let dataset = eval_dataset(&args)?;
    let (loss, accuracy) = submfl::nn::evaluate(&params, &dataset)?;
    let out = EvalOutput { loss, accuracy };
    println!(
        "{}",
        serde_json::to_string(&out).expect("eval output serializes")
    );
    Ok(())
}

fn eval_dataset(args: &EvalArgs) -> Result<Dataset> {
    match (&args.images, &args.labels, &args.synthetic) {
        (Some(images), Some(labels), None) => load_idx(images, labels),
        (None, None, Some(spec)) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 5 {
                return Err(Error::InvalidArgument(format!(
                    "--synthetic needs samples,classes,dim,separation,seed; got {spec:?}"
                )));
            }
            let parse_err = |what: &str| Error::InvalidArgument(format!("bad {what} in --synthetic"));
            synthetic_blobs(
                parts[0].trim().parse().map_err(|_| parse_err("samples"))?,
                parts[1].trim().parse().map_err(|_| parse_err("classes"))?,
                parts[2].trim().parse().map_err(|_| parse_err("dim"))?,
                parts[3].trim().parse().map_err(|_| parse_err("separation"))?,
                parts[4].trim().parse().map_err(|_| parse_err("seed"))?,
            )
        }
        _ => Err(Error::InvalidArgument(
            "eval needs either --images/--labels or --synthetic".into(),
        )),
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let summary = read_summary(&args.summary)?;
    let report = CascadeReport {
        rows: summary.submfl,
    };
    let table = compare_reports(&report, &summary.sfl)?;
    let csv = render_comparison_csv(&table);
    match &args.out {
        Some(path) => submfl::fsio::write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}
