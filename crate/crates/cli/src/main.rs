//! Command-line front end: solve experiments, evaluate and best-response
//! stored checkpoints, and run the property-suite verifier.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "teamcfr",
    about = "CFR solver for team-adversary extensive-form games",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solve + eval pipeline described by a config file.
    Solve {
        /// Path to the experiment config (TOML sections with typed keys).
        config: PathBuf,
    },
    /// Play a stored checkpoint against the uniform baseline and itself.
    Eval {
        config: PathBuf,
        /// Checkpoint produced by `solve` (.tcfr or .tnet).
        #[arg(long)]
        ckpt: PathBuf,
        /// Episodes per pairing.
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
    },
    /// Run the cross-module property suites; nonzero exit on any failure.
    Verify,
    /// Exact best-response values against a stored profile (small games).
    BestResponse {
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, teamcfr::harness::HarnessError> {
    match cli.command {
        Command::Solve { config } => {
            let summary = teamcfr::harness::run(&config)?;
            println!(
                "solved {} in {} mode: {} iterations{}",
                summary.game,
                summary.mode,
                summary.iterations_completed,
                if summary.budget_exceeded {
                    " (budget exceeded, partial)"
                } else {
                    ""
                }
            );
            println!(
                "final self-play team value {:.4} +/- {:.4}",
                summary.final_eval_mean, summary.final_eval_se
            );
            if let Some(e) = summary.exploitability {
                println!("exploitability {e:.6}");
            }
            println!("metrics: {}", summary.metrics_csv);
            println!("checkpoint: {}", summary.checkpoint);
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            config,
            ckpt,
            episodes,
        } => {
            let (vs_uniform, selfplay) =
                teamcfr::harness::eval_checkpoint(&config, &ckpt, episodes)?;
            println!(
                "team vs uniform adversary: {:.4} +/- {:.4} ({} episodes)",
                vs_uniform.mean,
                vs_uniform.standard_error,
                vs_uniform.utilities.len()
            );
            println!(
                "self-play: {:.4} +/- {:.4}",
                selfplay.mean, selfplay.standard_error
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let report = teamcfr::harness::run_verify();
            if report.all_passed() {
                println!("verify: all {} checks passed", report.checks.len());
                Ok(ExitCode::SUCCESS)
            } else {
                let failed = report.checks.iter().filter(|c| !c.passed).count();
                println!("verify: {failed} of {} checks failed", report.checks.len());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::BestResponse { config, ckpt } => {
            let (adversary_value, team_value) =
                teamcfr::harness::best_response_checkpoint(&config, &ckpt)?;
            println!("adversary best-response value: {adversary_value:.6}");
            println!("team best-response value: {team_value:.6}");
            println!(
                "exploitability: {:.6}",
                (adversary_value + team_value) / 2.0
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
