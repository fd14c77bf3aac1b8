//! Command-line front end for Besag-Clifford e-values and e-processes.

mod commands;
mod config;
mod data;
mod error;
mod experiments;
mod output;

use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::RawConfig;
use crate::error::{CliError, CliResult};
use crate::output::Output;

#[derive(Parser, Debug)]
#[command(name = "bcev", version, about = "Besag-Clifford e-values and e-processes")]
struct Cli {
    /// Run configuration (sectioned key = value text).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Headerless CSV data, one observation vector per row.
    #[arg(long, global = true, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Base seed; overrides the seed in the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Full study sizes instead of desk sizes.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Directory for CSV files and the run manifest.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Config override, e.g. `--set sampling.M=500` or `--set t.10.J=4`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Besag-Clifford e-value for one observation vector.
    Evalue,
    /// Goodness-of-fit p-value for one observation vector.
    Pvalue,
    /// E-process over the rows of the data file.
    Eprocess,
    /// E-process over scalars read line by line (stdin unless --data).
    EprocessStream,
    /// Confidence region over the configured parameter grid.
    Confregion,
    /// Run a named simulation study.
    Experiment {
        /// Study name; defaults to `[experiment] id`.
        name: Option<String>,
    },
}

fn apply_set(raw: &mut RawConfig, item: &str) -> CliResult<()> {
    let bad = || CliError::Config(format!("--set {item:?} is not SECTION.KEY=VALUE"));
    let (lhs, value) = item.split_once('=').ok_or_else(bad)?;
    let (section, key) = lhs.trim().rsplit_once('.').ok_or_else(bad)?;
    if section.is_empty() || key.is_empty() {
        return Err(bad());
    }
    raw.set(section, key, value.trim());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let mut raw = match &cli.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    for item in &cli.set {
        apply_set(&mut raw, item)?;
    }
    let out = Output::new(cli.out.clone())?;

    if let Command::Experiment { name } = &cli.command {
        let (name, study, manifest) =
            experiments::resolve(&raw, name.as_deref(), cli.paper_scale, cli.seed)?;
        let tables = study.run(&name)?;
        out.print(&tables[0])?;
        for t in &tables {
            out.save(t)?;
        }
        return out.manifest(&name, &manifest);
    }

    let seed = match cli.seed {
        Some(s) => s,
        None => raw.u64_or("sampling", "seed", 0)?,
    };
    // A manifest names its data file, so it can be rerun on its own.
    let data = cli
        .data
        .clone()
        .or_else(|| raw.get("run", "data").map(PathBuf::from));
    let run = Run {
        raw,
        seed,
        data,
        out,
    };
    match cli.command {
        Command::Evalue => commands::evalue(&run),
        Command::Pvalue => commands::pvalue(&run),
        Command::Eprocess => commands::eprocess(&run),
        Command::Confregion => commands::confregion(&run),
        Command::EprocessStream => {
            let stdout = std::io::stdout();
            match &run.data {
                Some(p) => {
                    let f = std::fs::File::open(p).map_err(|e| {
                        CliError::Input(format!("cannot read data {}: {e}", p.display()))
                    })?;
                    commands::eprocess_stream(&run, BufReader::new(f), stdout.lock())
                }
                None => {
                    let stdin = std::io::stdin();
                    commands::eprocess_stream(&run, stdin.lock(), stdout.lock())
                }
            }
        }
        Command::Experiment { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bcev: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
