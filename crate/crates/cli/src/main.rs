//! `recgan`: synthesize datasets, train, evaluate, complete single views and
//! export grids as meshes.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "recgan", version, about = "Single-view 3D shape completion on voxel grids")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Configuration layering shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed; drawn and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Oracle {
    /// Predicts the ground truth.
    Identity,
    /// Predicts the partial input.
    CopyInput,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render meshes from virtual viewpoints into paired partial/full grids.
    Synth {
        /// Directory of `.obj` files, optionally in per-category subdirectories.
        #[arg(long)]
        meshes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        res: Option<usize>,
        #[arg(long)]
        views_per_axis: Option<usize>,
        #[arg(long)]
        solid: bool,
        /// train or test.
        #[arg(long)]
        split: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the generator and critic on a synthesized dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        res: Option<usize>,
        /// Reconstruction loss only (beta = 1, no critic).
        #[arg(long)]
        ae_only: bool,
        /// Remove the encoder-decoder skip connections.
        #[arg(long)]
        no_skips: bool,
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Continue from a training checkpoint.
        #[arg(long, value_name = "CHECKPOINT")]
        resume: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint (or a built-in oracle) on a dataset.
    Eval {
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        /// Report directory.
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Evaluate a reference predictor instead of a checkpoint.
        #[arg(long, value_enum, conflicts_with = "checkpoint")]
        oracle: Option<Oracle>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Complete one partial grid with a trained generator.
    Complete {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write a binary grid thresholded strictly above this value.
        #[arg(long, value_name = "P")]
        binarize: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Export a grid as an OBJ of unit cubes with shared faces removed.
    ExportMesh {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Occupancy threshold for probability grids.
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write randomized procedural furniture meshes, one directory per category.
    MakeMeshes {
        #[arg(long)]
        out: PathBuf,
        /// Meshes per category.
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Comma-separated subset of box, table, chair, stool.
        #[arg(long, default_value = "box,table,chair,stool")]
        kinds: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train and evaluate in per-category, multi-category or cross-category mode.
    Experiment {
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated training categories.
        #[arg(long)]
        train_categories: Option<String>,
        /// Comma-separated test categories.
        #[arg(long)]
        test_categories: Option<String>,
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        res: Option<usize>,
        #[arg(long)]
        ae_only: bool,
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// List every configuration key with its default.
    Keys,
}

pub enum Failure {
    Usage(String),
    Hard(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Hard(e)
    }
}

impl From<recgan::Error> for Failure {
    fn from(e: recgan::Error) -> Self {
        Failure::Hard(e.into())
    }
}

/// Defaults, then the file, then `--set`, then the given flag values.
fn resolve(args: &ConfigArgs, flags: &[(&str, Option<String>)]) -> Result<RunConfig, ConfigError> {
    let mut c = RunConfig::default();
    if let Some(p) = &args.config {
        c.apply_file(p)?;
    }
    for pair in &args.set {
        c.set_pair(pair)?;
    }
    if let Some(s) = args.seed {
        c.set("seed", &s.to_string())?;
    }
    for (k, v) in flags {
        if let Some(v) = v {
            c.set(k, v)?;
        }
    }
    Ok(c)
}

fn flag<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|x| x.to_string())
}

fn switch(on: bool, value: &str) -> Option<String> {
    on.then(|| value.to_string())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth {
            meshes,
            out,
            res,
            views_per_axis,
            solid,
            split,
            cfg,
        } => {
            let c = resolve(
                &cfg,
                &[
                    ("resolution", flag(res)),
                    ("views_per_axis", flag(views_per_axis)),
                    ("solid", switch(solid, "true")),
                    ("split", split),
                ],
            )?;
            commands::synth(&c, &meshes, &out)
        }
        Command::Train {
            data,
            out,
            res,
            ae_only,
            no_skips,
            epochs,
            max_steps,
            batch_size,
            resume,
            cfg,
        } => {
            let mut c = resolve(
                &cfg,
                &[
                    ("resolution", flag(res)),
                    ("ae_only", switch(ae_only, "true")),
                    ("skip_connections", switch(no_skips, "false")),
                    ("epochs", flag(epochs)),
                    ("max_steps", flag(max_steps)),
                    ("batch_size", flag(batch_size)),
                ],
            )?;
            commands::train(&mut c, &data, &out, resume.as_deref())
        }
        Command::Eval {
            checkpoint,
            data,
            threshold,
            out,
            oracle,
            cfg,
        } => {
            let c = resolve(&cfg, &[("threshold", flag(threshold))])?;
            let predictor = match (oracle, checkpoint) {
                (Some(Oracle::Identity), _) => commands::PredictorChoice::Identity,
                (Some(Oracle::CopyInput), _) => commands::PredictorChoice::CopyInput,
                (None, Some(p)) => commands::PredictorChoice::Checkpoint(p),
                (None, None) => return Err(Failure::Usage("--checkpoint or --oracle is required".into())),
            };
            commands::eval(&c, predictor, &data, &out)
        }
        Command::Complete {
            checkpoint,
            input,
            out,
            binarize,
            cfg,
        } => {
            let c = resolve(&cfg, &[])?;
            commands::complete(&c, &checkpoint, &input, &out, binarize)
        }
        Command::ExportMesh {
            input,
            out,
            threshold,
            cfg,
        } => {
            let c = resolve(&cfg, &[("threshold", flag(threshold))])?;
            commands::export_mesh(&c, &input, &out)
        }
        Command::MakeMeshes { out, count, kinds, cfg } => {
            let mut c = resolve(&cfg, &[])?;
            commands::make_meshes(&mut c, &out, count, &kinds)
        }
        Command::Experiment {
            mode,
            train_categories,
            test_categories,
            train_data,
            test_data,
            out,
            res,
            ae_only,
            epochs,
            max_steps,
            cfg,
        } => {
            let mut c = resolve(
                &cfg,
                &[
                    ("mode", mode),
                    ("train_categories", train_categories),
                    ("test_categories", test_categories),
                    ("resolution", flag(res)),
                    ("ae_only", switch(ae_only, "true")),
                    ("epochs", flag(epochs)),
                    ("max_steps", flag(max_steps)),
                ],
            )?;
            commands::experiment(&mut c, &train_data, &test_data, &out)
        }
        Command::Keys => {
            for (k, v, doc) in config::KEYS {
                println!("{k:<18} {v:<12} {doc}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Hard(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
