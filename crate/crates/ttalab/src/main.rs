use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ttalab::runner::{run, write_outputs};
use ttalab::surface::{emit_surface, surface_csv, SurfaceLoss, SurfaceWhat};
use ttalab::table::emit_table;
use ttalab::{HarnessError, MetricsRecord, Result, RunConfig};

#[derive(Parser)]
#[command(name = "ttalab", version, about = "Continual test-time adaptation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train, adapt online over the configured stream and write the results.
    Run {
        /// Configuration file (key = value lines)
        #[arg(long)]
        config: PathBuf,
        /// Overrides run.seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides run.out
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a binary loss or gradient surface as CSV.
    Surface {
        /// ce or sce
        #[arg(long)]
        loss: SurfaceLoss,
        /// value or grad
        #[arg(long)]
        what: SurfaceWhat,
        /// Grid spacing on (0, 1)
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine metrics files into one table.
    Table {
        /// metrics.csv files, one per method
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Output CSV path; the text table goes to stdout
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one configuration per value of a key.
    Sweep {
        /// Base configuration file
        #[arg(long)]
        config: PathBuf,
        /// `section.key=v1,v2,...`
        #[arg(long)]
        vary: String,
        /// Sweep root directory; defaults to run.out
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io { path: path.into(), source: e })
}

fn load(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed, out)?;
            let output = run(&cfg)?;
            write_outputs(&cfg.out, &output)?;
            let (text, _) = emit_table(std::slice::from_ref(&output.metrics))?;
            print!("{text}");
            println!(
                "source error {:.2}%, wall clock {:.1}s, results in {}",
                output.source_error,
                output.metrics.wall_clock_s,
                cfg.out.display()
            );
        }
        Command::Surface { loss, what, step, out } => {
            let points = emit_surface(loss, what, step)?;
            write(&out, &surface_csv(&points))?;
        }
        Command::Table { metrics, out } => {
            let records = metrics.iter().map(|p| MetricsRecord::read_csv(p)).collect::<Result<Vec<_>>>()?;
            let (text, csv) = emit_table(&records)?;
            print!("{text}");
            write(&out, &csv)?;
        }
        Command::Sweep { config, vary, out } => {
            let base = load(&config, None, out)?;
            let (key, values) = vary
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("--vary expects key=v1,v2,..., got `{vary}`")))?;
            let mut records = Vec::new();
            for value in values.split(',') {
                let mut cfg = base.clone();
                cfg.set(key, value).map_err(HarnessError::Config)?;
                let dir = base.out.join(format!("{key}={value}"));
                cfg.out = dir.clone();
                let mut output = run(&cfg)?;
                output.metrics.label = format!("{key}={value}");
                write_outputs(&dir, &output)?;
                records.push(output.metrics);
            }
            let (text, csv) = emit_table(&records)?;
            print!("{text}");
            std::fs::create_dir_all(&base.out).map_err(|e| HarnessError::Io { path: base.out.clone(), source: e })?;
            write(&base.out.join("sweep.csv"), &csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
