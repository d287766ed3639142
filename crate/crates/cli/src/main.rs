use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lightmatter_cli::compare::compare_files;
use lightmatter_cli::config::{resolve_output, DistributionConfig, RunConfig};
use lightmatter_cli::output::{execute, Manifest};
use lightmatter_cli::sweep::run_sweep;
use lightmatter_cli::CliError;

#[derive(Parser)]
#[command(name = "lightmatter", version, about = "Variational, semiclassical and exact light-matter dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the engines enabled in a TOML configuration.
    Run {
        config: PathBuf,
        /// Overrides output.directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every point of the configuration's [sweep] table.
    Sweep { config: PathBuf },
    /// Compare columns of two trajectory CSV files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Comma-separated column names; all shared columns when omitted.
        #[arg(long, value_delimiter = ',')]
        cols: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
        /// Time window t0,t1.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        window: Option<Vec<f64>>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configuration and record photon distributions at the given times.
    Distribution {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn report(m: &Manifest, dir: &std::path::Path) -> ExitCode {
    println!("output: {}", dir.display());
    for e in &m.engines {
        match &e.message {
            Some(msg) => println!("{}: {} ({} samples): {msg}", e.engine, e.status, e.samples),
            None => println!("{}: {} ({} samples)", e.engine, e.status, e.samples),
        }
        for t in &e.mass_warnings {
            println!("{}: warning: distribution window at t = {t} holds < 0.999 of the mass", e.engine);
        }
    }
    if m.all_completed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn run_config(mut cfg: RunConfig, out: Option<PathBuf>) -> Result<ExitCode, CliError> {
    if let Some(o) = out {
        cfg.output.directory = o;
    }
    let v = cfg.validate()?;
    let dir = v.output_dir();
    let m = execute(&v, &dir)?;
    Ok(report(&m, &dir))
}

fn main_inner(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { config, out } => run_config(RunConfig::load(&config)?, out),
        Command::Distribution { config, times, out } => {
            let mut cfg = RunConfig::load(&config)?;
            let prev = cfg.observables.distribution.take();
            cfg.observables.distribution = Some(DistributionConfig {
                times,
                windows: prev.as_ref().and_then(|d| d.windows.clone()),
                grid: prev.and_then(|d| d.grid),
            });
            run_config(cfg, out)
        }
        Command::Sweep { config } => {
            let (root, entries) = run_sweep(&config)?;
            for e in &entries {
                match &e.error {
                    Some(err) => println!("{}: {}: {err}", e.directory, e.status),
                    None => println!("{}: {}", e.directory, e.status),
                }
            }
            println!("index: {}", root.join("sweep.json").display());
            let code = entries.iter().map(|e| e.exit_code).max().unwrap_or(0);
            Ok(ExitCode::from(code as u8))
        }
        Command::Compare { a, b, cols, tol, window, out } => {
            let window = window.map(|w| (w[0], w[1]));
            let r = compare_files(&a, &b, &cols, tol, window)?;
            let text = serde_json::to_string_pretty(&r).map_err(|e| CliError::Data(e.to_string()))?;
            match out {
                Some(p) => {
                    let p = resolve_output(&p);
                    std::fs::write(&p, text).map_err(|e| CliError::Io { path: p.display().to_string(), source: e })?
                }
                None => {
                    // a closed pipe (e.g. `| head`) is not an error for the report
                    let _ = writeln!(std::io::stdout().lock(), "{text}");
                }
            }
            for c in &r.columns {
                eprintln!("{}: max_abs {:.3e} rms {:.3e} {}", c.column, c.max_abs, c.rms, if c.passed { "ok" } else { "FAIL" });
            }
            Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
