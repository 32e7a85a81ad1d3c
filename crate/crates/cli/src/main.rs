//! `supernode`: coarsen weighted gene interaction graphs, train hierarchical
//! pooled spectral GNNs on expression data, and explain the trained models.
//!
//! Exit codes: 0 success, 1 user/config error, 2 internal or numeric error.

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use supernode_core::error::Result;

#[derive(Parser)]
#[command(
    name = "supernode",
    about = "Graph coarsening, hierarchical pooled spectral GNNs, and saliency explanations",
    disable_version_flag = true
)]
struct Cli {
    /// Print the package version and every artifact format version as JSON.
    #[arg(long, global = true)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Common {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if absent).
    #[arg(long)]
    out: PathBuf,
    /// Override the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the coarsening hierarchy and export memberships.
    Coarsen {
        #[command(flatten)]
        common: Common,
        /// Override coarsen.n_levels.
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Train the model; writes checkpoint, history, and metrics.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override coarsen.n_levels (the model follows unless configured).
        #[arg(long)]
        levels: Option<usize>,
        /// Override architecture.conv_start_level.
        #[arg(long)]
        conv_start: Option<usize>,
        /// Train one model per conv_start_level in 0..=L and emit
        /// ablation.csv instead of a checkpoint.
        #[arg(long)]
        sweep_conv_start: bool,
    },
    /// Metrics for a trained checkpoint on every split partition.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Load the checkpoint even if its hierarchy digest mismatches.
        #[arg(long)]
        force: bool,
    },
    /// Gene- and supernode-level saliency for a trained checkpoint.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Override explain.target_class.
        #[arg(long)]
        class: Option<usize>,
        /// Override explain.top_k (0 keeps all rows).
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Over-representation analysis of supernode gene clusters.
    Enrich {
        #[command(flatten)]
        common: Common,
        /// Override enrich.top_k (supernodes taken from the ranking file).
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Generate the synthetic planted-module task files.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Gradient and oracle checks; writes and prints selftest.json.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

fn version_json() -> String {
    serde_json::json!({
        "package_version": env!("CARGO_PKG_VERSION"),
        "format_versions": {
            "run_config": config::RUN_CONFIG_FORMAT_VERSION,
            "hierarchy": supernode_core::coarsen::HIERARCHY_FORMAT_VERSION,
            "checkpoint": supernode_core::gnn::CHECKPOINT_FORMAT_VERSION,
        }
    })
    .to_string()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Coarsen { common, levels } => {
            let mut cfg = config::load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            if let Some(l) = levels {
                cfg.coarsen.n_levels = l;
            }
            config::validate(&cfg)?;
            commands::cmd_coarsen(&cfg, &common.out)
        }
        Command::Train {
            common,
            levels,
            conv_start,
            sweep_conv_start,
        } => {
            let mut cfg = config::load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            if let Some(l) = levels {
                cfg.coarsen.n_levels = l;
            }
            if let Some(cs) = conv_start {
                cfg.architecture.conv_start_level = cs;
            }
            config::validate(&cfg)?;
            commands::cmd_train(&cfg, &common.out, sweep_conv_start)
        }
        Command::Evaluate { common, force } => {
            let mut cfg = config::load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            commands::cmd_evaluate(&cfg, &common.out, force)
        }
        Command::Explain {
            common,
            class,
            top_k,
            force,
        } => {
            let mut cfg = config::load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            if let Some(c) = class {
                cfg.explain.target_class = c;
            }
            if let Some(k) = top_k {
                cfg.explain.top_k = k;
            }
            commands::cmd_explain(&cfg, &common.out, force)
        }
        Command::Enrich { common, top_k } => {
            let mut cfg = config::load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            if let Some(k) = top_k {
                cfg.enrich.top_k = k;
            }
            commands::cmd_enrich(&cfg, &common.out)
        }
        Command::Synth { common } => {
            let mut cfg = config::load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            commands::cmd_synth(&cfg, &common.out)
        }
        Command::Selftest { common } => {
            let mut cfg = config::load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            commands::cmd_selftest(&cfg, &common.out)
        }
    }
}

fn apply_common(cfg: &mut config::RunConfig, common: &Common) {
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.version {
        println!("{}", version_json());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(1);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
