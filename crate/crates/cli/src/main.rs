use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};

use oodtune::synth::CentreLayout;

mod commands;
mod config;
mod exit;
mod report;

use config::{RunConfig, SensitivityConfig};
use exit::Failure;

/// Tune post-hoc OOD detectors without OOD data.
#[derive(Debug, Parser)]
#[command(name = "oodtune", version)]
struct Cli {
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Layout {
    Random,
    Axes,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a Gaussian-mixture corpus.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classes: usize,
        /// Label of the first class; later classes count up from it.
        #[arg(long, default_value_t = 0)]
        first_class: i32,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        per_class: usize,
        /// Distance of each class centre from the origin.
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, value_enum, default_value_t = Layout::Random)]
        layout: Layout,
        /// Independent draw index around the same centres.
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Train the full network on the corpus' training portion.
    TrainNet {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate leave-classes-out splits and their variant networks.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune a detector (method from the config: ours, gauss or adv).
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse splits written by `simulate` (their simulation and training
        /// settings replace the config's).
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// AUROC and FPR95 of a detector, one CSV row per OOD file.
    Evaluate {
        /// `model.json` written by train-net or tune.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        id: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        ood: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// FPR95 spread of detectors tuned on different OOD sets.
    Sensitivity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test AUROC of every M's optimum on the full network.
    AblateM {
        #[arg(long)]
        config: PathBuf,
        /// Tuning result to ablate; tuned afresh when absent.
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long)]
        id_test: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        ood: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-M table and optimizer convergence CSVs from a tuning result.
    ExportReport {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage(anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(anyhow!(e)))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::GenSynth {
            out,
            classes,
            first_class,
            dim,
            per_class,
            separation,
            spread,
            layout,
            stream,
        } => commands::gen_synth(&commands::SynthArgs {
            out,
            classes,
            first_class,
            dim,
            per_class,
            separation,
            spread,
            layout: match layout {
                Layout::Random => CentreLayout::RandomDirections,
                Layout::Axes => CentreLayout::Axes,
            },
            stream,
            seed: seed.unwrap_or(0),
        }),
        Command::TrainNet { config, out } => {
            commands::train_net(&RunConfig::load(&config, seed)?, &out)
        }
        Command::Simulate { config, out } => {
            commands::simulate(&RunConfig::load(&config, seed)?, &out)
        }
        Command::Tune {
            config,
            out,
            splits,
        } => commands::tune(&RunConfig::load(&config, seed)?, &out, splits.as_deref()),
        Command::Evaluate {
            model,
            detector,
            id,
            ood,
            out,
        } => commands::evaluate(&model, &detector, &id, &ood, out.as_deref()),
        Command::Sensitivity { config, out } => {
            commands::run_sensitivity(&SensitivityConfig::load(&config, seed)?, &out)
        }
        Command::AblateM {
            config,
            result,
            id_test,
            ood,
            out,
        } => commands::ablate(
            &RunConfig::load(&config, seed)?,
            result.as_deref(),
            &id_test,
            &ood,
            out.as_deref(),
        ),
        Command::ExportReport { result, out } => commands::export_report(&result, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.stage.code() as u8)
        }
    }
}
