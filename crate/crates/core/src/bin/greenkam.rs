use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use greenkam::cli::{output_dir, parse_scenario, run, scenario::model_listing};

#[derive(Parser)]
#[command(
    name = "greenkam",
    version,
    about = "Green bundles and weak KAM diagnostics for Tonelli Hamiltonians on tori"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.txt plus CSV tables.
    Run {
        scenario: PathBuf,
        /// Output directory (default: the scenario's `output`, else greenkam-out/<stem>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a scenario, printing it with defaults applied.
    Validate { scenario: PathBuf },
    /// List built-in models and their parameters.
    ListModels,
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("GREENKAM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| format!("GREENKAM_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::ListModels => {
            print!("{}", model_listing());
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match parse_scenario(&scenario) {
            Ok(s) => {
                for (section, entries) in &s.echo {
                    println!("[{section}]");
                    for (k, v) in entries {
                        println!("{k} = {v}");
                    }
                    println!();
                }
                println!("{}: valid", scenario.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", scenario.display());
                ExitCode::from(2)
            }
        },
        Command::Run { scenario, out, seed } => {
            let mut s = match parse_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{}: {e}", scenario.display());
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                s.set_seed(seed);
            }
            let dir = output_dir(&s, out.as_deref());
            let report = run(&s);
            let files = match report.write(&dir) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("{}: {e}", dir.display());
                    return ExitCode::from(2);
                }
            };
            for (check, verdict) in &report.verdicts {
                println!("{check}: {verdict}");
            }
            for e in &report.errors {
                eprintln!("error: {e}");
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            println!("status: {} ({:.2} s)", report.status(), report.wall_time);
            ExitCode::from(report.exit_code() as u8)
        }
    }
}
