use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinglass_lab::config::{ExperimentConfig, DEFAULT_OUTPUT_DIR};
use spinglass_lab::output::{summary, write_outputs, ReportFile};
use spinglass_lab::run::{execute, RunOptions, RunOutput};
use spinglass_lab::verify::{plan, verify, Level};
use spinglass_lab::{exit, LabError, PoolExecutor, Result};

#[derive(Parser)]
#[command(name = "spinglass", version, about = "Stability and factorization identities for Gaussian spin glasses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identities listed in a config file.
    Run {
        config: PathBuf,
        #[arg(long, env = "SPINGLASS_WORKERS")]
        workers: Option<usize>,
        #[arg(long, env = "SPINGLASS_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in battery of exact checks.
    Verify {
        #[arg(long)]
        quick: bool,
        #[arg(long, env = "SPINGLASS_WORKERS")]
        workers: Option<usize>,
        #[arg(long, env = "SPINGLASS_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_coupling_scale: Option<f64>,
    },
    /// Print the summary of a finished run.
    Report { dir: PathBuf },
}

fn finish(dir: &Path, echo: serde_json::Value, out: &RunOutput) -> Result<i32> {
    let file = ReportFile::new(echo, out);
    write_outputs(dir, &file, &out.timings)?;
    print!("{}", summary(&file));
    let failures = out.exact_failures();
    for f in &failures {
        eprintln!("exact identity failed: {f}");
    }
    Ok(if failures.is_empty() { exit::OK } else { exit::EXACT_FAILED })
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            config,
            workers,
            output_dir,
            seed,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(w) = workers {
                cfg.workers = w.max(1);
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d.display().to_string();
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let exec = PoolExecutor::new(cfg.workers);
            let out = execute(&cfg, &exec, &RunOptions::default())?;
            finish(Path::new(&cfg.output_dir), serde_json::to_value(&cfg)?, &out)
        }
        Command::Verify {
            quick,
            workers,
            output_dir,
            inject_coupling_scale,
        } => {
            let level = if quick { Level::Quick } else { Level::Full };
            let exec = PoolExecutor::new(workers.unwrap_or(1));
            let opts = RunOptions {
                coupling_scale: inject_coupling_scale,
            };
            let out = verify(level, &exec, &opts)?;
            let echo = serde_json::json!({
                "verify": if quick { "quick" } else { "full" },
                "plan": plan(level),
            });
            let dir = output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
            finish(&dir, echo, &out)
        }
        Command::Report { dir } => {
            let file = ReportFile::load(&dir)?;
            print!("{}", summary(&file));
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INVALID_CONFIG } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            report_hint(&e);
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn report_hint(e: &LabError) {
    if let LabError::Core(spinglass_core::Error::Capacity { .. }) = e {
        eprintln!("hint: use `engine = mc` or smaller sizes");
    }
}
