use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csfl::cli::{cmd_gen_data, cmd_run, cmd_sweep, load_table, validate_config, ExperimentConfig};
use csfl::data::SyntheticSpec;
use csfl::sim::{DataSource, Protocol};
use csfl::{Error, Result};

#[derive(Parser)]
#[command(name = "csfl", version, about = "Deterministic split federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs only this protocol (psl, sfl or csfl-g).
    #[arg(long)]
    protocol: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics.csv and trace.json.
    Run(RunArgs),
    /// Run one experiment per value of a scalar config key.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted key path, e.g. system.cpu_scale or profiles.0.cpu_rate.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
    },
    /// Write a synthetic dataset as CSV.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Take the generator spec, row count and seed from this experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a config, listing defaulted keys.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn adjust(cfg: ExperimentConfig, seed: Option<u64>, protocol: Option<&str>) -> Result<ExperimentConfig> {
    let cfg = match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    match protocol {
        Some(name) => cfg.only_protocol(name.parse::<Protocol>()?),
        None => Ok(cfg),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = adjust(validate_config(&args.config)?, args.seed, args.protocol.as_deref())?;
            let files = cmd_run(&cfg, &args.out)?;
            println!("wrote {} and {}", files.metrics.display(), files.trace.display());
        }
        Command::Sweep { run, axis, values } => {
            let base = load_table(&run.config)?;
            let files = cmd_sweep(
                &base,
                run.config.parent(),
                &axis,
                &values,
                |c| adjust(c, run.seed, run.protocol.as_deref()),
                &run.out,
            )?;
            println!("wrote {} metrics files and {}", files.metrics.len(), files.summary.display());
        }
        Command::GenData { out, config, n, seed } => {
            let (spec, default_n, default_seed) = match config {
                Some(path) => {
                    let cfg = validate_config(&path)?;
                    let DataSource::Synthetic { spec, eval_samples } = &cfg.spec.data else {
                        return Err(Error::Config("config does not use synthetic data".into()));
                    };
                    let rows = cfg.spec.num_users * cfg.spec.per_user + eval_samples;
                    (spec.clone(), rows, cfg.spec.data_seed())
                }
                None => (SyntheticSpec::default(), 1200, 0),
            };
            let rows = n.unwrap_or(default_n);
            cmd_gen_data(&spec, rows, seed.unwrap_or(default_seed), &out)?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Validate { config } => {
            let cfg = validate_config(&config)?;
            print!("{}", cfg.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
