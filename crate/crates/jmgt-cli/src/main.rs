use clap::{Parser, Subcommand};
use jmgt_cli::{load, run, RunError, EXIT_OK, EXIT_VALIDATION};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "jmgt", version, about = "Run JMGT identification experiments from scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the scenario's preset and write its artifacts.
    Run { scenario: PathBuf },
    /// Check the scenario without computing anything.
    Validate { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenario } => match load(&scenario, cli.seed, cli.out).and_then(|sc| run(&sc)) {
            Ok(paths) => {
                for p in paths {
                    println!("wrote {}", p.display());
                }
                EXIT_OK
            }
            Err(e) => report(e),
        },
        Command::Validate { scenario } => match load(&scenario, cli.seed, cli.out) {
            Ok(sc) => {
                let v = sc.violations();
                if v.is_empty() {
                    println!("ok: {} ({})", sc.name, sc.preset.name());
                    EXIT_OK
                } else {
                    for msg in &v {
                        println!("violation: {msg}");
                    }
                    EXIT_VALIDATION
                }
            }
            Err(e) => report(e),
        },
    };
    ExitCode::from(code as u8)
}

fn report(e: RunError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
