use clap::{Parser, Subcommand};
use fasris::optimize::Solver;
use fasris::outage::Model;
use fasris::Scheme;
use fasris_cli::{run_experiment, CliError, Experiment, Format, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fasris", version, about = "Outage and throughput sweeps for FAS-RIS links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and emit its table.
    Run {
        /// Experiment file (TOML, or JSON with a .json extension).
        config: PathBuf,
        /// Seed of the Monte Carlo trial streams.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Directory for `<name>.<format>`; without it the table goes to the
        /// experiment's `output` path, or stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Add a wall-clock runtime column.
        #[arg(long)]
        timing: bool,
    },
    /// List schemes, models, solvers and overhead policies.
    ListModels,
    /// Check an experiment file without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            seed,
            trials,
            out,
            format,
            timing,
        } => {
            let mut exp = Experiment::load(&config)?;
            if let Some(s) = seed {
                exp.seed = s;
            }
            if let Some(t) = trials {
                exp.trials = t;
            }
            let table = run_experiment(&exp, &RunOptions { timing })?;
            let path = match (out, &exp.output) {
                (Some(dir), _) => {
                    std::fs::create_dir_all(&dir)
                        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
                    Some(dir.join(format!("{}.{}", exp.name, format.extension())))
                }
                (None, Some(p)) => Some(PathBuf::from(p)),
                (None, None) => None,
            };
            match path {
                Some(p) => {
                    table.write_path(format, &p)?;
                    eprintln!("wrote {} rows to {}", table.rows.len(), p.display());
                }
                None => table.write(format, std::io::stdout().lock())?,
            }
            let failed = table.failed_rows();
            if failed > 0 {
                return Err(CliError::Numeric(format!("{failed} row(s) recorded numeric failures")));
            }
            Ok(())
        }
        Command::ListModels => {
            println!("schemes: {}, {}", Scheme::CsiBased, Scheme::CsiFree);
            let models = [Model::Simulation, Model::Bcma, Model::Iae, Model::Constant];
            println!("models: {}", models.map(|m| m.as_str()).join(", "));
            println!("solvers:");
            for (s, schemes) in [
                (Solver::Gda, "csi-based"),
                (Solver::Bsm, "csi-based"),
                (Solver::Pgda, "csi-free"),
                (Solver::ClosedForm, "csi-free (alias cf)"),
                (Solver::Exhaustive, "csi-based, csi-free (alias es)"),
            ] {
                println!("  {s}: {schemes}");
            }
            println!("overheads: {}", fasris_cli::run::overhead_names().join(", "));
            Ok(())
        }
        Command::Validate { config } => {
            let exp = Experiment::load(&config)?;
            println!("ok: {} ({} points)", exp.name, exp.points()?.len());
            Ok(())
        }
    }
}
