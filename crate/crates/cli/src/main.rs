use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmrf_core::harness::{
    parse_config, point_seed, read_csv, run_config, run_repetitions, run_sweep, summarize, write_csv, ConfigError,
    SweepError, SweepSpec,
};
use dmrf_core::sim::write_trace;

#[derive(Parser)]
#[command(name = "dmrf", version, about = "Deadline-aware sensor network routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured protocol for the configured number of repetitions.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the base seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// fig5, fig6, fig7, fig8, fig9 or scale.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a sweep CSV and report criterion flags.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write the event trace of one run as JSON lines.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, seed, out } => {
            let mut cfg = parse_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let rows = run_repetitions(&cfg)?;
            match out {
                Some(path) => write_csv(&rows, create(&path)?).map_err(runtime),
                None => write_csv(&rows, io::stdout().lock()).map_err(runtime),
            }
        }
        Command::Sweep { config, preset, out } => {
            let cfg = parse_config(&config)?;
            let spec = SweepSpec::preset(&preset, cfg).ok_or_else(|| {
                Failure::Invalid(format!("unknown preset `{preset}`; expected one of {}", SweepSpec::PRESETS.join(", ")))
            })?;
            let rows = run_sweep(&spec)?;
            write_csv(&rows, create(&out)?).map_err(runtime)
        }
        Command::Summarize { input } => {
            let file = File::open(&input).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", input.display())))?;
            let rows = read_csv(file).map_err(|e| Failure::Invalid(e.to_string()))?;
            if rows.is_empty() {
                return Err(Failure::Invalid("no rows to summarize".into()));
            }
            print!("{}", summarize(&rows));
            Ok(())
        }
        Command::Trace { config, out } => {
            let cfg = parse_config(&config)?;
            let output = run_config(&cfg, cfg.protocol, point_seed(cfg.seed, 0, 0), true).map_err(Failure::Runtime)?;
            let mut w = create(&out)?;
            write_trace(&output.trace, &mut w).map_err(runtime)?;
            w.flush().map_err(runtime)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Invalid(m) | Failure::Runtime(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
