use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use magspec_cli::config::RunConfig;
use magspec_cli::stages::{Runner, Stage};
use magspec_cli::CliError;

#[derive(Parser)]
#[command(name = "magspec", version, about = "Semiclassical spectra of magnetic Laplacians on tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; the built-in constant-field run if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-k runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Largest operator dimension diagonalized densely.
    #[arg(long, global = true)]
    dense_cap: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Envelope of the model spectra, integrated density and pointwise levels.
    Model,
    /// Low-lying eigenpairs for every k, cached on disk.
    Spectrum,
    /// Cluster counts against Riemann-Roch predictions.
    Clusters,
    /// Global and local Weyl tables.
    Weyl,
    /// Projector kernel slices and Gaussian fits.
    Kernel,
    /// Chern numbers of the cluster bundles.
    Chern,
    /// The acceptance suite; exits nonzero if any criterion fails.
    Accept {
        /// Comma-separated criterion numbers; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default_run(),
    };
    if let Some(out) = cli.out {
        config.output = out;
    }
    if let Some(seed) = cli.seed {
        config.solver.seed = seed;
        config.acceptance.seed = seed;
    }
    if let Some(cap) = cli.dense_cap {
        config.solver.dense_cap = cap;
        config.acceptance.dense_cap = cap;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let (stage, only) = match cli.command {
        Command::Model => (Stage::Model, Vec::new()),
        Command::Spectrum => (Stage::Spectrum, Vec::new()),
        Command::Clusters => (Stage::Clusters, Vec::new()),
        Command::Weyl => (Stage::Weyl, Vec::new()),
        Command::Kernel => (Stage::Kernel, Vec::new()),
        Command::Chern => (Stage::Chern, Vec::new()),
        Command::Accept { only } => (Stage::Accept, only),
    };
    let mut runner = Runner::new(config)?;
    runner.criteria = only;
    runner.run(stage)?;
    eprintln!("{}: wrote {}", stage.name(), runner.out.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("magspec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
