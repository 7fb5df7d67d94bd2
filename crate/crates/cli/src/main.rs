use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use statsol_core::{Experiment, Report};

/// Build statistical solutions from initial ensembles and verify them.
#[derive(Parser, Debug)]
#[command(name = "statsol", version)]
struct Cli {
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "STATSOL_THREADS")]
    threads: Option<usize>,

    /// Print one line per check to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every check in the config.
    Run {
        config: PathBuf,
        /// NDJSON report path (overrides the config).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Statistics CSV path (overrides the config).
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Rerun every check on dt, dt/2, ... and fit convergence orders.
    Study {
        config: PathBuf,
        #[arg(long)]
        halvings: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parse and validate the config without running anything.
    Validate { config: PathBuf },
}

const EXIT_CONFIG: u8 = 2;

fn load(path: &Path) -> Result<Experiment, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Experiment::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Paths in a config are relative to the config file.
fn resolve(config: &Path, flag: Option<PathBuf>, from_config: Option<&String>) -> Option<PathBuf> {
    flag.or_else(|| {
        from_config.map(|p| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                config.parent().unwrap_or(Path::new(".")).join(p)
            }
        })
    })
}

fn write_output(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit(report: &Report, path: Option<PathBuf>, verbose: u8) -> anyhow::Result<()> {
    let text = report.to_ndjson();
    match path {
        Some(p) => write_output(&p, &text)?,
        None => print!("{text}"),
    }
    if verbose > 0 {
        for r in &report.records {
            let target = r.target.as_deref().map(|t| format!(" [{t}]")).unwrap_or_default();
            let value = r.value.map_or("null".to_string(), |v| format!("{v:.3e}"));
            let order = r.order_estimate.map_or("null".to_string(), |o| format!("{o:.2}"));
            eprintln!(
                "{} {}{target}: value={value} tol={:.3e} order={order}",
                if r.pass { "PASS" } else { "FAIL" },
                r.check,
                r.tolerance
            );
            if let Some(e) = &r.error {
                eprintln!("  error: {e}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let (config, experiment) = match &cli.command {
        Command::Run { config, .. } | Command::Study { config, .. } | Command::Validate { config } => {
            match load(config) {
                Ok(e) => (config.clone(), e),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
    };
    let output = experiment.config.output.clone();
    let result = match cli.command {
        Command::Validate { .. } => {
            if cli.verbose > 0 {
                eprintln!("{}: ok", config.display());
            }
            return ExitCode::SUCCESS;
        }
        Command::Run { report, curves, .. } => {
            let r = experiment.run();
            let curves_path = resolve(&config, curves, output.curves.as_ref());
            let written = match (&r.curves, curves_path) {
                (Some(csv), Some(p)) => write_output(&p, csv),
                _ => Ok(()),
            };
            written
                .and_then(|_| emit(&r, resolve(&config, report, output.report.as_ref()), cli.verbose))
                .map(|_| r.status)
        }
        Command::Study { halvings, report, .. } => {
            if halvings < 2 {
                eprintln!("error: --halvings must be at least 2");
                return ExitCode::from(EXIT_CONFIG);
            }
            let r = experiment.study(halvings);
            emit(&r, resolve(&config, report, output.report.as_ref()), cli.verbose).map(|_| r.status)
        }
    };
    match result {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
