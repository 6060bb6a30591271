//! `rbmor`: command-line driver for certified reduced-basis experiments.
//!
//! Subcommands cover the full pipeline: `offline` builds and persists a
//! reduced model with its error-certification tables, `eval` scores the
//! estimators on a held-out test set, `theta` re-emits the saturation
//! tables, `scm-study` traces the stability-bound constraint greedy, and
//! `scatter` adds per-evaluation time/effectivity files.
//!
//! Exit codes: 0 success, 2 saturation assumption failed, 3 stability bound
//! did not converge, 4 configuration rejected, 1 any other error.

mod config;
mod experiment;
mod report;
mod timing;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::experiment::{
    resolve_out_root, run_eval, run_offline, run_scm_study, run_theta, Layout, OfflineOutcome,
};

#[derive(Parser)]
#[command(
    name = "rbmor",
    version,
    about = "Certified reduced-basis experiments with hierarchical error bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides `RBMOR_OUT` and the config's `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the reduced model, certification tables, and artifacts.
    Offline {
        #[command(flatten)]
        common: Common,
        /// Rebuild even when artifacts for this exact config already exist.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate the error estimators on the held-out test set.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Re-emit the saturation tables from stored artifacts.
    Theta {
        #[command(flatten)]
        common: Common,
    },
    /// Run the stability-bound constraint greedy and report its history.
    ScmStudy {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate and additionally write per-point time/effectivity files.
    Scatter {
        #[command(flatten)]
        common: Common,
    },
}

const EXIT_SATURATION: u8 = 2;
const EXIT_SCM: u8 = 3;
const EXIT_CONFIG: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Maps failures onto the documented exit codes by walking the error chain.
fn exit_code_for(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigRejected>().is_some() {
        return EXIT_CONFIG;
    }
    if let Some(code) = e.downcast_ref::<rb_core::Error>().and_then(core_code) {
        return code;
    }
    for cause in e.chain() {
        if let Some(code) = cause.downcast_ref::<rb_core::Error>().and_then(core_code) {
            return code;
        }
    }
    1
}

fn core_code(core: &rb_core::Error) -> Option<u8> {
    Some(match core {
        rb_core::Error::SaturationFailure { .. } | rb_core::Error::SaturationInvalid { .. } => {
            EXIT_SATURATION
        }
        rb_core::Error::ScmNonConvergence { .. } => EXIT_SCM,
        rb_core::Error::InvalidConfig(_) => EXIT_CONFIG,
        _ => 1,
    })
}

/// Marker wrapped around config load/validation failures so they map to the
/// configuration exit code.
#[derive(Debug)]
struct ConfigRejected;

impl std::fmt::Display for ConfigRejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration rejected")
    }
}

impl std::error::Error for ConfigRejected {}

fn load(path: &PathBuf) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::from_path(path).context_config()
}

trait ContextConfig<T> {
    fn context_config(self) -> anyhow::Result<T>;
}

impl<T> ContextConfig<T> for anyhow::Result<T> {
    fn context_config(self) -> anyhow::Result<T> {
        self.map_err(|e| e.context(ConfigRejected))
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Offline { common, force } => {
            let cfg = load(&common.config)?;
            let root = resolve_out_root(common.out.as_deref(), &cfg);
            let layout = Layout::new(&root, &cfg.experiment.name);
            match run_offline(&cfg, &root, force)? {
                OfflineOutcome::Skipped => {
                    println!(
                        "offline: artifacts for this config already exist under {} (use --force to rebuild)",
                        layout.root().display()
                    );
                }
                OfflineOutcome::Completed { basis_dim } => {
                    println!(
                        "offline: basis of dimension {basis_dim} written to {}",
                        layout.root().display()
                    );
                }
            }
        }
        Command::Eval { common } => {
            let cfg = load(&common.config)?;
            let root = resolve_out_root(common.out.as_deref(), &cfg);
            let summary = run_eval(&cfg, &root, false)?;
            report_eval(&summary);
        }
        Command::Theta { common } => {
            let cfg = load(&common.config)?;
            let root = resolve_out_root(common.out.as_deref(), &cfg);
            for path in run_theta(&cfg, &root)? {
                println!("theta: wrote {}", path.display());
            }
        }
        Command::ScmStudy { common } => {
            let cfg = load(&common.config)?;
            let root = resolve_out_root(common.out.as_deref(), &cfg);
            let s = run_scm_study(&cfg, &root)?;
            println!(
                "scm-study: {} after {} constraints (worst gap {:.3e})",
                if s.converged { "converged" } else { "NOT converged" },
                s.constraints,
                s.worst_gap
            );
        }
        Command::Scatter { common } => {
            let cfg = load(&common.config)?;
            let root = resolve_out_root(common.out.as_deref(), &cfg);
            let summary = run_eval(&cfg, &root, true)?;
            report_eval(&summary);
        }
    }
    Ok(())
}

fn report_eval(summary: &experiment::EvalSummary) {
    for (tag, rows) in &summary.reports {
        let n_max = rows.iter().map(|r| r.n).max().unwrap_or(0);
        let worst_at_max: f64 = rows
            .iter()
            .filter(|r| r.n == n_max)
            .map(|r| r.err)
            .fold(0.0, f64::max);
        println!(
            "eval[{tag}]: {} rows, worst error {:.3e} at basis size {n_max}",
            rows.len(),
            worst_at_max
        );
    }
}
