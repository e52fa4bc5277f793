//! Command-line runner for the reproduction experiments.
//!
//! Exit status: 0 when every check inside the experiment passed, 1 when one
//! failed, 2 for usage errors, 3 for I/O failures.

use std::collections::BTreeMap;
use std::process::ExitCode;

use clap::Parser;
use qtrsp_core::experiment::{run, validate_config, Experiment, OUT_DIR_ENV};
use qtrsp_core::Error;

fn experiments_help() -> String {
    let mut s = String::from("Experiments:\n");
    for e in Experiment::ALL {
        s.push_str(&format!("  {:<20} {}\n", e.name(), e.operation_chain()));
    }
    s.push_str(&format!(
        "\nWithout --out, output goes to ${OUT_DIR_ENV}/<experiment>_seed<seed>.<format> (or ./)."
    ));
    s
}

#[derive(Debug, Parser)]
#[command(name = "qtrsp", version, about = "Finite-precision teleportation and remote state preparation experiments", after_help = experiments_help())]
struct Args {
    /// Experiment to run (see the list below).
    #[arg(long)]
    experiment: String,
    /// Precision in bits; a comma list for multi-m experiments.
    #[arg(long)]
    m: Option<String>,
    /// Ignored description bits; a list or range a..b for truncation_sweep.
    #[arg(long)]
    n: Option<String>,
    /// Number of trials; 0 selects exact results where available.
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Grid mode: real_rotation or general.
    #[arg(long)]
    mode: Option<String>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Output file.
    #[arg(long)]
    out: Option<String>,
}

impl Args {
    fn into_map(self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("experiment".to_string(), self.experiment);
        let optional = [
            ("m", self.m),
            ("n", self.n),
            ("trials", self.trials),
            ("seed", self.seed),
            ("mode", self.mode),
            ("format", self.format),
            ("out", self.out),
        ];
        for (k, v) in optional {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        }
        map
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match validate_config(&args.into_map()) {
        Ok(c) => c,
        Err(Error::Config(violations)) => {
            eprintln!("invalid configuration:");
            for v in violations {
                eprintln!("  - {v}");
            }
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("invalid configuration: {e}");
            return ExitCode::from(2);
        }
    };
    let path = config.resolved_output_path();
    match run(&config) {
        Ok(out) => {
            for c in &out.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            println!("wrote {}", path.display());
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e @ (Error::Io(_) | Error::Csv(_) | Error::Json(_))) => {
            eprintln!("cannot write {}: {e}", path.display());
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
