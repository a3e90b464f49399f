//! Command-line front end: online change-point detection over multivariate
//! time series, plus evaluation, benchmarking, fixture generation, and the
//! numerical verification suite.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or input error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alacpd_core::cli::{
    cmd_bench, cmd_detect, cmd_eval, cmd_gradcheck, cmd_synth, Ablation, DetectArgs, EvalArgs,
};
use alacpd_core::Error;

#[derive(Parser)]
#[command(name = "alacpd", version, about = "Memory-free online change-point detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detector over a dataset and write per-seed detection JSON.
    Detect {
        /// Dataset path (benchmark JSON or CSV).
        #[arg(long)]
        data: PathBuf,
        /// Flat key-value hyperparameter file; flags override file values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; seed k of a multi-seed run uses seed+k.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of seeds to run (in parallel).
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Variant: full, no_ar (autoencoder only), no_ae (AR only).
        #[arg(long, default_value = "full")]
        ablation: String,
        /// Also record per-step per-member losses (large output).
        #[arg(long)]
        trace: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score stored predictions against a multi-annotator annotation file.
    Eval {
        /// Detection JSON file or a directory of detect_*.json files.
        #[arg(long)]
        pred: PathBuf,
        /// Annotation file {"dataset", "n", "annotations": {...}}.
        #[arg(long)]
        annotations: PathBuf,
        /// Matching margin for precision/recall.
        #[arg(long, default_value_t = 5)]
        margin: usize,
        /// Disable the benchmark convention of counting index 0 as a
        /// trivially correct change-point.
        #[arg(long)]
        no_trivial_start: bool,
        /// Write the score report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-dataset, multi-variant benchmark with rank aggregation.
    Bench {
        /// Manifest JSON listing datasets, variants, seeds, and output dir.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Generate a synthetic dataset and its annotation file.
    Synth {
        /// Key-value generator description.
        #[arg(long)]
        spec: PathBuf,
        /// Output dataset path (benchmark JSON schema).
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::Parse { .. } | Error::Config(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect {
            data,
            config,
            seed,
            seeds,
            ablation,
            trace,
            out,
        } => ablation
            .parse::<Ablation>()
            .and_then(|ablation| {
                cmd_detect(&DetectArgs {
                    data,
                    config,
                    seed,
                    seeds,
                    ablation,
                    trace,
                    out,
                })
            })
            .map(|reports| {
                for report in &reports {
                    println!(
                        "seed {}: {} change-point(s) {:?}",
                        report.seed,
                        report.change_points.len(),
                        report.change_points
                    );
                }
            }),
        Command::Eval {
            pred,
            annotations,
            margin,
            no_trivial_start,
            out,
        } => cmd_eval(&EvalArgs {
            pred,
            annotations,
            margin,
            trivial_start: !no_trivial_start,
            out,
        })
        .map(|_| ()),
        Command::Bench { manifest } => cmd_bench(&manifest).map(|report| {
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        }),
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Gradcheck => cmd_gradcheck().map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
