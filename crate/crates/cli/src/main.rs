use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use npae_cli::config::{DEFAULT_OUT, OUT_ENV};
use npae_cli::{run, CliError, CliResult, Command, Invocation, RunConfig};
use npae_core::FeatureKind;

/// Image anomaly detection from inpainting-autoencoder residuals.
#[derive(Parser, Debug)]
#[command(name = "npae", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output root.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate the synthetic corpus and its manifest.
    GenData,
    /// Train the inpainting autoencoder on the training split.
    Train,
    /// Extract feature tables for every non-training image.
    Features {
        /// inpaint-residual, raw-residual or code
        #[arg(long)]
        feature_kind: Option<String>,
    },
    /// Score images with each configured method.
    Score {
        /// Comma-separated scoring methods
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// inpaint-residual, raw-residual or code
        #[arg(long)]
        feature_kind: Option<String>,
    },
    /// Set-based recall trials with anomaly and control probes.
    EvalSets {
        /// Comma-separated set sizes
        #[arg(long, value_delimiter = ',')]
        set_sizes: Option<Vec<usize>>,
        /// Trials per set size
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated scoring methods
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// inpaint-residual, raw-residual or code
        #[arg(long)]
        feature_kind: Option<String>,
    },
    /// Proxy-attribute table over methods and feature kinds.
    EvalAttr,
    /// Per-method recall tables and the decile montage manifest.
    Report {
        /// inpaint-residual, raw-residual or code
        #[arg(long)]
        feature_kind: Option<String>,
    },
}

fn invocation(cli: Cli) -> CliResult<Invocation> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(t) = cli.threads {
        config.threads = Some(t);
    }
    let mut only_kind = None;
    let command = match cli.command {
        Cmd::GenData => Command::GenData,
        Cmd::Train => Command::Train,
        Cmd::Features { feature_kind } => {
            only_kind = feature_kind
                .map(|k| FeatureKind::parse(&k).map_err(|_| CliError::Config(format!("--feature-kind: unknown kind {k:?}"))))
                .transpose()?;
            Command::Features
        }
        Cmd::Score { methods, feature_kind } => {
            override_scoring(&mut config, methods, feature_kind);
            Command::Score
        }
        Cmd::EvalSets { set_sizes, trials, methods, feature_kind } => {
            override_scoring(&mut config, methods, feature_kind);
            if let Some(s) = set_sizes {
                config.experiment.set_sizes = s;
            }
            if let Some(t) = trials {
                config.experiment.trials = t;
            }
            Command::EvalSets
        }
        Cmd::EvalAttr => Command::EvalAttr,
        Cmd::Report { feature_kind } => {
            override_scoring(&mut config, None, feature_kind);
            Command::Report
        }
    };
    let out = cli.out.or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Invocation { command, config, out, feature_kind: only_kind })
}

fn override_scoring(config: &mut RunConfig, methods: Option<Vec<String>>, kind: Option<String>) {
    if let Some(m) = methods {
        config.scoring.methods = m;
    }
    if let Some(k) = kind {
        config.scoring.feature_kind = k;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match invocation(cli).and_then(|inv| run(&inv)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
