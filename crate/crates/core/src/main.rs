use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cavlab::config::ExperimentConfig;
use cavlab::pipeline::{Method, Pipeline};
use cavlab::synthgen::{ConceptId, StyleId};
use cavlab::{Error, Result};

#[derive(Parser)]
#[command(name = "cavlab", version, about = "Concept activation vectors and latent traversal explanations on synthetic phantoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Cap on worker threads; outputs do not depend on it
    #[arg(long)]
    workers: Option<usize>,
    /// Output base directory, overriding `output.directory`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Binarization percentile, overriding `eval.percentile`
    #[arg(long)]
    percentile: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training and held-out datasets of every style
    GenData(Common),
    /// Train the autoencoder and the baseline classifier
    Train(Common),
    /// Fit single and averaged concept vectors
    ExtractCavs(Common),
    /// Write a counterfactual pair and attribution map for one held-out sample
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sample: usize,
        #[arg(long)]
        concept: ConceptId,
        /// cav_mean, cav_single, latent_shift or random
        #[arg(long, default_value = "cav_mean")]
        method: Method,
        #[arg(long, default_value = "A")]
        style: StyleId,
    },
    /// Similarity, IoU and reconstruction reports
    Evaluate(Common),
    /// All stages in order plus the artifact manifest
    Reproduce(Common),
}

fn pipeline(common: &Common) -> Result<Pipeline> {
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Error::InvalidArgument("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("cannot size the worker pool: {e}")))?;
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(p) = common.percentile {
        cfg.eval.percentile = p;
    }
    let p = Pipeline::new(cfg, common.out.as_deref())?;
    log::info!("run directory {}", p.root().display());
    Ok(p)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => pipeline(&c)?.gen_data(),
        Command::Train(c) => pipeline(&c)?.train(),
        Command::ExtractCavs(c) => pipeline(&c)?.extract_cavs(),
        Command::Explain {
            common,
            sample,
            concept,
            method,
            style,
        } => {
            let dir = pipeline(&common)?.explain(style, sample, concept, method)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Evaluate(c) => {
            let p = pipeline(&c)?;
            p.evaluate()?;
            println!("{}", p.root().join("reports").display());
            Ok(())
        }
        Command::Reproduce(c) => {
            let p = pipeline(&c)?;
            let manifest = p.reproduce()?;
            println!("{} {}", manifest.run_hash, p.root().display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}
