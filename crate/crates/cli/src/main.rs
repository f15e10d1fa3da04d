mod commands;
mod config;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{usage, UsageError};

#[derive(Debug, Parser)]
#[command(name = "nsf", version, about = "Stereo triplet factory and NeRF-supervised disparity tools")]
struct Cli {
    /// Worker threads (falls back to NSF_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file overriding the subcommand's defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic fixture as a posed image set with exact stereo GT.
    GenFixture(commands::GenFixtureArgs),
    /// Fit a radiance field to a posed image set.
    FitNerf(commands::FitNerfArgs),
    /// Render stereo triplets from fitted fields into a dataset.
    ExportDataset(commands::ExportArgs),
    /// Optimize per-pixel disparity against exported triplets.
    Optimize(commands::OptimizeArgs),
    /// Score predicted disparity maps with bad-tau.
    Eval(commands::EvalArgs),
    /// Disparity histogram of an exported dataset.
    PlotHist(commands::PlotHistArgs),
    /// Run built-in invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct SelftestArgs {}

pub struct Globals {
    pub config: Option<PathBuf>,
    pub threads: usize,
}

fn init_threads(flag: Option<usize>) -> anyhow::Result<usize> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("NSF_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| usage(format!("NSF_THREADS: not a thread count: {v:?}")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = requested {
        if n == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(rayon::current_num_threads())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = init_threads(cli.threads)?;
    log::debug!("using {threads} worker threads");
    let g = Globals {
        config: cli.config,
        threads,
    };
    match cli.command {
        Command::GenFixture(a) => commands::gen_fixture(&g, a),
        Command::FitNerf(a) => commands::fit_nerf(&g, a),
        Command::ExportDataset(a) => commands::export_dataset(&g, a),
        Command::Optimize(a) => commands::optimize(&g, a),
        Command::Eval(a) => commands::eval(&g, a),
        Command::PlotHist(a) => commands::plot_hist(&g, a),
        Command::Selftest(_) => {
            let failed = selftest::run();
            if failed > 0 {
                anyhow::bail!("{failed} self-test check(s) failed");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
