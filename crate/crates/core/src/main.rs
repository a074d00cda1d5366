use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hmnem::commands::{cmd_diagnose, cmd_infer, cmd_simulate, cmd_summarize, load_config, Outcome};
use hmnem::config::{Mode, RunConfig};
use hmnem::Result;

#[derive(Parser)]
#[command(
    name = "hmnem",
    version,
    about = "Time-varying signalling networks from perturbation effects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run config or a manifest written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "hmnem-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Binary,
    Probability,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an evolving network and noisy effect data.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Sample network paths and smoothness from a dataset.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Dataset file.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        /// Random-walk standard deviation for logit(lambda).
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Reporter attachment map (`reporter,component` CSV).
        #[arg(long)]
        attachments: Option<String>,
    },
    /// Convergence diagnostics for trace files.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        burnin: Option<usize>,
        traces: Vec<String>,
    },
    /// Heatmap table and recovery metrics for an expected network.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        expected: Option<String>,
        #[arg(long)]
        truth: Option<String>,
        #[arg(long)]
        cutoff: Option<f64>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>, key: &'static str, overridden: &mut Vec<&'static str>) {
    if let Some(v) = value {
        *slot = v;
        overridden.push(key);
    }
}

fn prepare(common: &Common, apply: impl FnOnce(&mut RunConfig, &mut Vec<&'static str>)) -> Result<RunConfig> {
    let (mut cfg, text) = load_config(common.config.as_deref())?;
    let mut overridden = Vec::new();
    set(&mut cfg.seed, common.seed, "seed", &mut overridden);
    apply(&mut cfg, &mut overridden);
    let source = common.config.as_deref().zip(text.as_deref());
    cfg.validate(source, &overridden)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(Outcome, PathBuf)> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = prepare(&common, |_, _| {})?;
            Ok((cmd_simulate(&cfg, &common.out)?, common.out))
        }
        Command::Infer {
            common,
            dataset,
            chains,
            iterations,
            burnin,
            sigma,
            cutoff,
            mode,
            attachments,
        } => {
            let cfg = prepare(&common, |cfg, o| {
                let s = &mut cfg.sampler;
                set(&mut s.chains, chains, "sampler.chains", o);
                set(&mut s.iterations, iterations, "sampler.iterations", o);
                set(&mut s.burn_in, burnin, "sampler.burn_in", o);
                set(&mut s.proposal_sd, sigma, "sampler.proposal_sd", o);
                set(&mut s.cutoff, cutoff, "sampler.cutoff", o);
                if dataset.is_some() {
                    cfg.data.dataset = dataset;
                }
                if attachments.is_some() {
                    cfg.data.attachments = attachments;
                }
                if let Some(m) = mode {
                    cfg.data.mode = Some(match m {
                        ModeArg::Binary => Mode::Binary,
                        ModeArg::Probability => Mode::Probability,
                    });
                }
            })?;
            Ok((cmd_infer(&cfg, &common.out)?, common.out))
        }
        Command::Diagnose { common, burnin, traces } => {
            let cfg = prepare(&common, |cfg, _| {
                if !traces.is_empty() {
                    cfg.data.traces = traces;
                }
            })?;
            Ok((cmd_diagnose(&cfg, burnin, &common.out)?, common.out))
        }
        Command::Summarize {
            common,
            expected,
            truth,
            cutoff,
        } => {
            let cfg = prepare(&common, |cfg, o| {
                set(&mut cfg.sampler.cutoff, cutoff, "sampler.cutoff", o);
                if expected.is_some() {
                    cfg.data.expected = expected;
                }
                if truth.is_some() {
                    cfg.data.truth = truth;
                }
            })?;
            Ok((cmd_summarize(&cfg, &common.out)?, common.out))
        }
    }
}

fn report(outcome: &Outcome, dir: &Path) {
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for f in &outcome.outputs {
        println!("{}", dir.join(f).display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((outcome, dir)) => {
            report(&outcome, &dir);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
