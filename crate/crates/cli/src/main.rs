use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssm_mcmc::samplers::SamplerKind;
use ssm_mcmc_cli::diagnose::{cmd_diagnose_lambda, cmd_diagnose_trace};
use ssm_mcmc_cli::{
    cmd_report, cmd_run, cmd_simulate, resolve_threads, CliError, CliResult, ExperimentConfig,
    THREADS_ENV,
};

#[derive(Parser)]
#[command(
    name = "ssm-mcmc",
    version,
    about = "Particle MCMC experiments for state-space models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a data set and write it as JSON.
    Simulate(Common),
    /// Run the configured sweep and write results.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads; defaults to the number of logical cores.
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
        /// Trace output: none, thin:K or full.
        #[arg(long)]
        trace: Option<String>,
    },
    /// Aggregate result files into per-cell summaries.
    Report {
        /// results.csv files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for summary.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Sampler used as the denominator of IAC ratios.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Diagnostics of a trace file, or the acceptance-penalty check.
    Diagnose {
        /// Trace file to summarize.
        #[arg(long, conflicts_with = "config")]
        trace: Option<PathBuf>,
        /// Also export the trace as CSV.
        #[arg(long, requires = "trace")]
        csv: Option<PathBuf>,
        /// Multiply mean squared jumps by this length.
        #[arg(long)]
        t_scale: Option<usize>,
        /// Configuration for the penalty check.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let p = cmd_simulate(&cfg)?;
            println!("{}", p.display());
        }
        Command::Run {
            common,
            threads,
            trace,
        } => {
            let mut cfg = common.load()?;
            if let Some(t) = trace {
                cfg.trace = t;
            }
            let out = cmd_run(&cfg, resolve_threads(threads))?;
            let failed = out.rows.iter().filter(|r| !r.ok()).count();
            println!(
                "{} rows ({failed} failed) -> {}",
                out.rows.len(),
                out.results_path.display()
            );
        }
        Command::Report {
            inputs,
            out,
            baseline,
        } => {
            let baseline = baseline
                .map(|b| {
                    b.parse::<SamplerKind>()
                        .map_err(|e| CliError::Config(e.to_string()))
                })
                .transpose()?;
            let refs: Vec<&std::path::Path> = inputs.iter().map(|p| p.as_path()).collect();
            let (_, table) = cmd_report(&refs, &out, baseline)?;
            print!("{table}");
        }
        Command::Diagnose {
            trace,
            csv,
            t_scale,
            config,
            seed,
            out,
        } => match (trace, config) {
            (Some(t), _) => {
                let rep = cmd_diagnose_trace(&t, csv.as_deref(), t_scale)?;
                let json = serde_json::to_string_pretty(&rep)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                println!("{json}");
            }
            (None, Some(c)) => {
                let cfg = Common {
                    config: c,
                    seed,
                    out,
                }
                .load()?;
                let p = cmd_diagnose_lambda(&cfg)?;
                println!("{}", p.display());
            }
            (None, None) => {
                return Err(CliError::Config(
                    "diagnose needs --trace or --config".into(),
                ))
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
