use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdiqkd_cli::{run, CliError, Log, RunConfig, Task};

#[derive(Parser)]
#[command(name = "mdiqkd", version, about = "Four-intensity MDI-QKD key rates, optimization and scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `optimizer.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One finite-size evaluation at `task.params`.
    Evaluate(Common),
    /// Optimize the source parameters; also writes a trace CSV.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Trace CSV (default: next to `--out` with a `.trace.csv` suffix).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Optimize at every distance point.
    ScanDistance(Common),
    /// Optimize at every compensation cell, baseline included.
    ScanCompensation(Common),
}

fn trace_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.trace.csv"))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (task, common, trace) = match cli.command {
        Command::Evaluate(c) => (Task::Evaluate, c, None),
        Command::Optimize { common, trace } => (Task::Optimize, common, trace),
        Command::ScanDistance(c) => (Task::ScanDistance, c, None),
        Command::ScanCompensation(c) => (Task::ScanCompensation, c, None),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::io("thread pool", e))?;
    }
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::io(&common.config.display().to_string(), e))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", common.config.display(), err.message);
        err
    })?;
    if let Some(seed) = common.seed {
        cfg.optimizer.seed = seed;
    }
    let mut stderr = std::io::stderr();
    let output = run(task, &cfg, &mut Log::new(&mut stderr, common.verbose))?;
    match &common.out {
        Some(path) => {
            std::fs::write(path, &output.csv).map_err(|e| CliError::io(&path.display().to_string(), e))?;
            if let Some(body) = &output.trace_csv {
                let path = trace.unwrap_or_else(|| trace_path(path));
                std::fs::write(&path, body).map_err(|e| CliError::io(&path.display().to_string(), e))?;
            }
        }
        None => {
            print!("{}", output.csv);
            if let (Some(body), Some(path)) = (&output.trace_csv, trace) {
                std::fs::write(&path, body).map_err(|e| CliError::io(&path.display().to_string(), e))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.category.exit_code() as u8)
        }
    }
}
