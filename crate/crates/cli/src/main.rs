//! Command-line front end: `generate`, `fit`, `eval` and `export-grid`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coxconv::shell::{self, Config};
use coxconv::Error;

#[derive(Debug, Parser)]
#[command(name = "coxconv", version, about = "Dependent Cox process inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a ground truth and one event file per process.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split the events, run the chain and write an archive directory.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Event files (`process_id,x1[,x2]`).
        #[arg(required = true)]
        events: Vec<PathBuf>,
    },
    /// Score an archive on held-out events and print the report.
    Eval {
        /// Archive directory written by `fit`.
        archive: PathBuf,
        /// Test event files; the archive's own split when omitted.
        events: Vec<PathBuf>,
        /// Also fit the independent model and a kernel density estimate.
        #[arg(long)]
        baselines: bool,
        /// Seed for the independent baseline chain; the archive's seed when absent.
        #[arg(long)]
        seed: Option<u64>,
        /// Report file; standard output only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write posterior mean and sd surfaces on a lattice.
    ExportGrid {
        archive: PathBuf,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> coxconv::Result<Config> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> coxconv::Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => {
            let config = load_config(config.as_deref(), seed)?;
            let g = shell::cmd_generate(&config, &out)?;
            for (f, ev) in g.files.iter().zip(&g.events) {
                println!("{}\t{} events", f.display(), ev.len());
            }
        }
        Command::Fit {
            config,
            seed,
            out,
            events,
        } => {
            let config = load_config(config.as_deref(), seed)?;
            let chain = shell::cmd_fit(&config, &events, &out)?;
            println!(
                "{} samples, {:.2} iterations/s, archive {}",
                chain.samples.len(),
                chain.timing.iterations_per_sec,
                out.display()
            );
        }
        Command::Eval {
            archive,
            events,
            baselines,
            seed,
            out,
        } => {
            let rows = shell::cmd_eval_with_seed(&archive, &events, baselines, seed)?;
            if let Some(path) = out {
                shell::write_report(&path, &rows)?;
            }
            print!("{}", shell::report_to_string(&rows));
        }
        Command::ExportGrid { archive, resolution, out } => {
            for f in shell::cmd_export_grid(&archive, resolution, &out)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}
