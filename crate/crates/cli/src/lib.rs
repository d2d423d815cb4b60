//! Command-line experiments: phantom simulation, reconstruction, electrode
//! placement and the adaptive reconstruct-then-reoptimize loop.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Malformed or out-of-domain configuration.
    Config(String),
    Run(eit_oed::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<eit_oed::Error> for CliError {
    fn from(e: eit_oed::Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    /// 2 config error, 3 numerical error, 4 I/O error.
    pub fn exit_code(&self) -> i32 {
        use eit_oed::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Run(e) => match e {
                E::Parameter(_) | E::Domain(_) | E::Layout(_) | E::Validation { .. } => 2,
                E::Numerical(_) | E::Conductivity { .. } | E::Dimension(_) => 3,
                E::Io { .. } | E::Parse { .. } => 4,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Reconstruct,
    Optimize,
    Pipeline,
}

#[derive(Debug, Parser)]
#[command(name = "eitoed", version, about = "EIT electrode placement experiments")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Base preset the config file is merged onto.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides `noise.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Number of simulate, reconstruct, optimize rounds.
    #[arg(long)]
    pub adaptive: Option<usize>,
    #[arg(long)]
    pub skip_gradient_preflight: bool,
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let mut cfg = config::load(&args.config, args.preset.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.noise.seed = seed;
    }
    if args.adaptive == Some(0) {
        return Err(CliError::Config("--adaptive: must be at least 1".into()));
    }
    let ctx = commands::Context::new(cfg)?;
    let opts = commands::RunOptions {
        out: args.out.clone(),
        preflight: !args.skip_gradient_preflight,
    };
    std::fs::create_dir_all(&opts.out).map_err(|source| eit_oed::Error::Io {
        path: opts.out.clone(),
        source,
    })?;
    match (args.command, args.adaptive) {
        (Command::Simulate, _) => ctx.simulate(&ctx.initial_layout()?, &opts.out, 0).map(|_| ()),
        (Command::Reconstruct, _) => ctx.reconstruct(&ctx.initial_layout()?, &opts.out).map(|_| ()),
        (Command::Optimize, None) => ctx.optimize(&ctx.initial_layout()?, &opts.out, 0, &opts).map(|_| ()),
        (Command::Optimize, Some(n)) => ctx.pipeline(n, &opts).map(|_| ()),
        (Command::Pipeline, n) => ctx.pipeline(n.unwrap_or(ctx.config().adaptive_rounds), &opts).map(|_| ()),
    }
}
