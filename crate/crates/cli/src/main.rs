use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaussvae_cli::{load_experiment, run, verify, CliError, Overrides};

#[derive(Parser)]
#[command(name = "gaussvae", version, about = "Linear-Gaussian variational encoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, train and sweep; write result files to the output directory.
    Run(Common),
    /// Recompute the experiment and check its invariants.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    config: PathBuf,
    /// Replaces the `output` directory of the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Replaces the `seed` of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Only errors and check failures are printed.
    #[arg(long)]
    quiet: bool,
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Run(args) | Command::Verify(args)) = &cli.command;
    let overrides = Overrides {
        output_dir: args.output_dir.clone(),
        seed: args.seed,
    };
    let exp = match load_experiment(&args.config, &overrides) {
        Ok(e) => e,
        Err(e) => return fail(&e),
    };
    match cli.command {
        Command::Run(_) => match run::run(&exp, args.quiet) {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        },
        Command::Verify(_) => {
            let report = match verify::verify(&exp) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            for c in &report.checks {
                if !args.quiet || c.status == verify::Status::Fail {
                    println!("{}", c.line());
                }
            }
            if let Some(e) = report.failure {
                return fail(&CliError::Solver(e));
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
