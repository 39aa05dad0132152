use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use treesmooth::datagen::fetch_dataset;
use treesmooth::harness::{
    emit_records, emit_summaries, read_records, run_experiment, summarize, ExperimentSpec, OutputFormat, CATALOG,
};

#[derive(Parser)]
#[command(name = "treesmooth", version, about = "Tree ensembles as smoothers: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the experiment catalog.
    List,
    /// Run one experiment and write its records.
    Run {
        #[arg(long)]
        experiment: String,
        /// Override a grid column or setting, e.g. `--set B=1,10,50` or `--set m=1/3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// csv or json; defaults to the extension of --out.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Average a record table over replications (mean and 2*SEM).
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Download a dataset, keeping an existing copy of the same size.
    Fetch {
        #[arg(long)]
        url: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::List => {
            for e in CATALOG {
                let columns: Vec<&str> = e.axes.iter().map(|a| a.column()).collect();
                println!("{:<26} [{}] {}", e.name, columns.join(","), e.description);
            }
        }
        Command::Run {
            experiment,
            overrides,
            out,
            format,
            seed,
            reps,
        } => {
            let mut spec = ExperimentSpec::new(&experiment)?;
            for item in &overrides {
                let Some((key, value)) = item.split_once('=') else {
                    bail!("--set expects KEY=VALUE, got {item:?}");
                };
                spec.set(key.trim(), value.trim())
                    .with_context(|| format!("applying --set {item}"))?;
            }
            if let Some(seed) = seed {
                spec.base_seed = seed;
            }
            if let Some(reps) = reps {
                spec.replications = reps;
            }
            let format = match format {
                Some(f) => f.parse()?,
                None => OutputFormat::from_path(&out),
            };
            let records = run_experiment(&spec)?;
            emit_records(&records, format, &out).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Summarize { input, out } => {
            let records = read_records(&input).with_context(|| format!("reading {}", input.display()))?;
            let rows = summarize(&records);
            emit_summaries(&rows, OutputFormat::from_path(&out), &out)
                .with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Fetch { url, out } => {
            let path = fetch_dataset(&url, &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
