//! `franson`: runs simulator experiments from flat config files and writes
//! CSV tables with JSON metadata.
//!
//! Exit codes: 0 success, 1 invalid config or arguments, 2 numeric or I/O
//! failure, 3 a `--check` tolerance was violated.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{parse_real, parse_truncation, Kind, Overrides, RawConfig};

#[derive(Parser)]
#[command(name = "franson", version, about = "Franson interference with time-delayed feedback, simulated with matrix product states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: benchmark, dynamics, g2, visibility, sweep or oracle.
    Run(RunArgs),
    /// Run the built-in reference checks and print a JSON report.
    Check {
        /// Also write the report to this file.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment kind; may instead be given as `kind` in the config.
    kind: Option<String>,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Compare against reference values; exit 3 on violation.
    #[arg(long)]
    check: bool,
    /// Enable the feedback loop.
    #[arg(long)]
    feedback: bool,
    /// Feedback phase in radians (`pi/2` style accepted).
    #[arg(long, allow_hyphen_values = true)]
    phi_fb: Option<String>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    threads: Option<usize>,
    /// Truncation `epsilon[:max_bond]`.
    #[arg(long)]
    epsilon: Option<String>,
    /// CSV output path; the JSON sidecar sits next to it.
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Config(Vec<String>),
    Runtime(String),
    Check,
}

impl Failure {
    fn report(self) -> ExitCode {
        match self {
            Failure::Config(errs) => {
                eprintln!("error: invalid configuration");
                for e in errs {
                    eprintln!("  {e}");
                }
                ExitCode::from(1)
            }
            Failure::Runtime(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            Failure::Check => ExitCode::from(3),
        }
    }
}

fn set_threads(n: Option<usize>) -> Result<(), Failure> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(Failure::Config(vec!["--threads: must be at least 1".into()]));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn run_command(args: RunArgs) -> Result<(), Failure> {
    set_threads(args.threads)?;
    let mut errs = Vec::new();
    let kind = match args.kind.as_deref().map(str::parse::<Kind>).transpose() {
        Ok(k) => k,
        Err(e) => {
            errs.push(format!("kind: {e}"));
            None
        }
    };
    let config = match &args.config {
        None => None,
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match RawConfig::parse(&text) {
                Ok(c) => Some(c),
                Err(e) => {
                    errs.extend(e);
                    None
                }
            },
            Err(e) => {
                errs.push(format!("config: cannot read {}: {e}", path.display()));
                None
            }
        },
    };
    let mut ov = Overrides { feedback: args.feedback, output: args.output, ..Default::default() };
    if let Some(s) = &args.phi_fb {
        match parse_real(s) {
            Ok(v) => ov.phi_fb = Some(v),
            Err(e) => errs.push(format!("--phi-fb: {e}")),
        }
    }
    if let Some(s) = &args.epsilon {
        match parse_truncation(s) {
            Ok(v) => ov.truncation = Some(v),
            Err(e) => errs.push(format!("--epsilon: {e}")),
        }
    }
    if !errs.is_empty() {
        return Err(Failure::Config(errs));
    }
    let spec = config::resolve(kind, config.as_ref(), &ov).map_err(Failure::Config)?;

    let outcome = run::run(&spec, args.check).map_err(|e| Failure::Runtime(e.to_string()))?;
    let (csv, side) = output::write(&spec, &outcome)
        .map_err(|e| Failure::Runtime(format!("writing {}: {e}", spec.output_path.display())))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("wrote {} and {}", csv.display(), side.display());
    let mut failed = false;
    for c in &outcome.checks {
        eprintln!("{} {}: {:?} (expected {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.expected);
        failed |= !c.pass;
    }
    if failed {
        Err(Failure::Check)
    } else {
        Ok(())
    }
}

fn check_command(output: Option<PathBuf>, threads: Option<usize>) -> Result<(), Failure> {
    set_threads(threads)?;
    let mut all_pass = true;
    let mut entries = Vec::new();
    for (experiment, result) in run::default_checks() {
        match result {
            Ok(c) => {
                all_pass &= c.pass;
                entries.push(json!({ "experiment": experiment, "check": c }));
            }
            Err(e) => {
                all_pass = false;
                entries.push(json!({ "experiment": experiment, "error": e.to_string() }));
            }
        }
    }
    let report = json!({ "pass": all_pass, "checks": entries });
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    if let Some(path) = output {
        std::fs::write(&path, text + "\n").map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Check { output, threads } => check_command(output, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
