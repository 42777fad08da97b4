use std::path::PathBuf;
use std::process::ExitCode;

use byzsense::harness::{run_scenario, sweep, RunOptions};
use byzsense::{load_config, Error, ThresholdMethod};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "byzsense",
    version,
    about = "Malicious-user detection for cooperative spectrum sensing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of mc,md,mad,sn,qn.
        #[arg(long, value_delimiter = ',', default_value = "mc,md,mad,sn,qn")]
        methods: Vec<String>,
        /// Sweep over these attacker counts instead of the config's n_malicious.
        #[arg(long, value_delimiter = ',')]
        malicious: Option<Vec<usize>>,
        /// Disable parallel execution.
        #[arg(long)]
        sequential: bool,
    },
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            methods,
            malicious,
            sequential,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            let methods = methods
                .iter()
                .map(|m| {
                    m.parse::<ThresholdMethod>()
                        .map_err(|_| Error::InvalidConfig {
                            field: "methods".into(),
                            reason: format!("unknown method `{m}`"),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let options = RunOptions {
                parallel: !sequential,
            };
            let manifest = match malicious {
                Some(counts) => sweep(&cfg, &counts, &methods, &out, options)?,
                None => run_scenario(&cfg, &methods, &out, options)?,
            };
            for a in &manifest.artifact_paths {
                println!("{}", out.join(&a.path).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
