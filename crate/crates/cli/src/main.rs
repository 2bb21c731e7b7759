use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "formtol", version, about = "Tolerance analysis of planar assemblies with form errors")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides batch.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the assembly sweep.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the modal basis of face A and save it.
    GenBasis,
    /// Project a measured surface onto the basis.
    Decompose {
        /// Point file: `x z v` per line (`x v` for profiles).
        surface: PathBuf,
        /// Basis file from gen-basis; rebuilt from the config when absent.
        #[arg(long)]
        basis: Option<PathBuf>,
        /// Number of modes kept; mating.m when absent.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Mate two signatures and check the functional requirement.
    Assemble {
        sig1: PathBuf,
        sig2: PathBuf,
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Simulate pilot productions and report non-conformity rates.
    Simulate,
}

fn load(cli: &Cli) -> formtol::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.batch.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> formtol::Result<()> {
    match &cli.command {
        Command::GenBasis => commands::gen_basis(cfg),
        Command::Decompose { surface, basis, m } => commands::decompose(cfg, surface, basis.as_deref(), *m),
        Command::Assemble { sig1, sig2, basis } => commands::assemble(cfg, sig1, sig2, basis.as_deref()),
        Command::Simulate => commands::simulate(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.workers {
        Some(0) => {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli, &cfg)),
            Err(e) => {
                eprintln!("error: cannot start {n} workers: {e}");
                return ExitCode::from(3);
            }
        },
        None => run(&cli, &cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
