use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dsm_cli::{run, CliError, Mode, RunConfig, Summary};

/// Simulates day-ahead battery scheduling in a neighbourhood.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// JSON configuration; defaults apply to every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    quiet: bool,
}

fn execute(args: &Args) -> Result<Summary, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    run(&config, &args.out)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(summary) => {
            let ok = !matches!(&summary, Summary::Oracle(o) if !o.passed);
            if !args.quiet {
                print_summary(&summary);
                eprintln!("artifacts written to {}", args.out.display());
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_summary(summary: &Summary) {
    match summary {
        Summary::Single(r) => {
            println!(
                "days {}  participants {}  PAR {:.4} -> {:.4}  reduction {:+.2}% (std {:.2}%)",
                r.days,
                r.participants,
                r.mean_reference_par,
                r.mean_par,
                100.0 * r.par_reduction_mean,
                100.0 * r.par_reduction_std
            );
            println!(
                "savings {:.2}% (std {:.2}%)  all days converged: {}",
                100.0 * r.savings_mean,
                100.0 * r.savings_std,
                r.all_converged
            );
        }
        Summary::Sweep(rows) => {
            println!("neighbourhood  participants  error  PAR reduction      savings");
            for row in rows {
                println!(
                    "{:<13}  {:>12}  {:>5.2}  {:+7.2}% ({:5.2})  {:6.2}% ({:5.2})",
                    row.neighbourhood,
                    row.participants,
                    row.error_magnitude,
                    100.0 * row.par_reduction_mean,
                    100.0 * row.par_reduction_std,
                    100.0 * row.savings_mean,
                    100.0 * row.savings_std
                );
            }
        }
        Summary::Oracle(o) => {
            println!(
                "oracle check: {} instances, max discrepancy {:.6} kWh (tolerance {}) {}",
                o.instances,
                o.max_discrepancy,
                o.tolerance,
                if o.passed { "PASS" } else { "FAIL" }
            );
        }
    }
}
