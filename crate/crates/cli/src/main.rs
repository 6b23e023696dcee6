use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qent_core::experiment::{
    fmt12, parse_sweep_spec, run_experiment, run_sweep, validate_config, ExperimentError,
};

#[derive(Parser)]
#[command(name = "qent", version, about = "Vacuum-subtracted entanglement of localized lattice particles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json.
    Run {
        config: PathBuf,
        /// Output directory (defaults to output.directory of the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for symmetry with `sweep`; a single run is sequential.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run a parameter sweep and write sweep.csv and summary.json.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent sweep points.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a config and print it with every default filled in.
    Validate { config: PathBuf },
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = validate_config(&read(&config)?)?;
            println!("{}", cfg.echo());
        }
        Command::Run { config, out, jobs: _ } => {
            let cfg = validate_config(&read(&config)?)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
            let outcome = run_experiment(&cfg, &dir)?;
            let report = &outcome.evaluation.entropy;
            for e in &report.renyi {
                println!(
                    "S_{}: state {}  vacuum {}  subtracted {}",
                    e.order,
                    fmt12(e.state),
                    fmt12(e.vacuum),
                    fmt12(e.subtracted)
                );
            }
            let vn = &report.von_neumann;
            println!(
                "S_vN: state {}  vacuum {}  subtracted {}",
                fmt12(vn.state),
                fmt12(vn.vacuum),
                fmt12(vn.subtracted)
            );
            if let Some(check) = &outcome.evaluation.replica {
                println!("replica max deviation {}", fmt12(check.max_deviation));
            }
            println!("wrote {}", outcome.report_path.display());
        }
        Command::Sweep { spec, out, jobs } => {
            let spec = parse_sweep_spec(&read(&spec)?)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&spec.base.output.directory));
            let outcome = run_sweep(&spec, &dir, jobs)?;
            let s = &outcome.summary;
            println!("{} points, {} succeeded, {} failed", s.points, s.succeeded, s.failed);
            if let Some(d) = s.decreasing {
                println!("delta_S{} decreasing: {d}", s.order);
            }
            println!("wrote {} and {}", outcome.csv_path.display(), outcome.summary_path.display());
            if s.succeeded == 0 {
                return Err(ExperimentError::Numerical("every sweep point failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qent: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
