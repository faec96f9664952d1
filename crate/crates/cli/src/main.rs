//! Command-line front end: run scenario files, verify persisted chains,
//! and render audit reports.
//!
//! Exit codes: 0 success, 1 usage or parse errors, 2 integrity findings
//! (broken chain, failed audit, or a run that recorded integrity issues).

use anyhow::{bail, Context};
use ballotchain::chain::MAX_DIFFICULTY;
use ballotchain::{
    filter_valid_ballots, load_scenario, parse_chain_log, render_ballot, render_text,
    run_scenario, verify_chain, write_artifacts, AuditReport, Block, Payload, ValidationContext,
};
use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ballotchain", version, about = "Deterministic multi-peer election simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write the artifacts.
    Run {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Directory for chain.log, tally.toml, report.toml, report.txt,
        /// and notifications.log.
        #[arg(short, long)]
        out: PathBuf,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Validate proposals on all peers in parallel.
        #[arg(long)]
        parallel: bool,
    },
    /// Verify a persisted chain log and audit its ballots.
    Verify {
        /// chain.log file, one hex block per line.
        chain: PathBuf,
        /// Leading-zero-bit difficulty the chain was mined at.
        #[arg(long)]
        difficulty: u32,
    },
    /// Render the audit report from a run directory.
    Report {
        /// Directory written by `run`.
        dir: PathBuf,
        /// Show one ballot number in detail instead of the summary.
        #[arg(long)]
        ballot: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            parallel,
        } => cmd_run(&scenario, &out, seed, parallel),
        Command::Verify { chain, difficulty } => cmd_verify(&chain, difficulty),
        Command::Report { dir, ballot } => cmd_report(&dir, ballot),
    }
}

fn cmd_run(
    scenario_path: &Path,
    out: &Path,
    seed: Option<u64>,
    parallel: bool,
) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(scenario_path)?;
    let outcome = run_scenario(&scenario, seed, parallel)?;
    write_artifacts(out, &outcome)
        .with_context(|| format!("cannot write artifacts to {}", out.display()))?;
    println!("artifacts written to {}", out.display());
    if let Some(node) = outcome.report.tally.first() {
        let counts: Vec<String> = node
            .counts
            .iter()
            .map(|(nominee, count)| format!("{nominee}={count}"))
            .collect();
        println!("tally: {}", counts.join(" "));
    }
    if outcome.report.integrity.is_empty() {
        println!("integrity: clean");
    } else {
        for issue in &outcome.report.integrity {
            println!("integrity issue: {issue}");
        }
    }
    Ok(ExitCode::from(outcome.exit_code as u8))
}

fn cmd_verify(chain_path: &Path, difficulty: u32) -> anyhow::Result<ExitCode> {
    if difficulty > MAX_DIFFICULTY {
        bail!("difficulty {difficulty} exceeds the maximum of {MAX_DIFFICULTY}");
    }
    let text = fs::read_to_string(chain_path)
        .with_context(|| format!("cannot read {}", chain_path.display()))?;
    let blocks = parse_chain_log(&text)?;

    if let Err(chain_break) = verify_chain(&blocks, difficulty) {
        println!("{chain_break}");
        return Ok(ExitCode::from(2));
    }

    let Payload::Genesis(genesis_payload) = &blocks[0].payload else {
        unreachable!("verify_chain admits only chains that start with genesis");
    };
    let ctx = ValidationContext::file_audit(genesis_payload);
    let ballots: Vec<Block> = blocks
        .iter()
        .filter(|b| matches!(b.payload, Payload::Ballot(_)))
        .cloned()
        .collect();
    let valid = filter_valid_ballots(&ballots, &blocks[0], difficulty, &ctx)?;
    if valid != ballots {
        println!(
            "audit mismatch: {} of {} ballot blocks pass independent re-validation",
            valid.len(),
            ballots.len()
        );
        return Ok(ExitCode::from(2));
    }
    println!(
        "ok ({} blocks, {} ballots, audit clean)",
        blocks.len(),
        ballots.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(dir: &Path, ballot: Option<u64>) -> anyhow::Result<ExitCode> {
    let report_path = dir.join("report.toml");
    let chain_path = dir.join("chain.log");
    let mut missing = Vec::new();
    if !report_path.is_file() {
        missing.push("report.toml");
    }
    if ballot.is_some() && !chain_path.is_file() {
        missing.push("chain.log");
    }
    if !missing.is_empty() {
        bail!(
            "missing artifacts in {}: {}",
            dir.display(),
            missing.join(", ")
        );
    }

    let report_text = fs::read_to_string(&report_path)
        .with_context(|| format!("cannot read {}", report_path.display()))?;
    let report: AuditReport = toml::from_str(&report_text)
        .with_context(|| format!("cannot parse {}", report_path.display()))?;

    match ballot {
        Some(number) => {
            let chain_text = fs::read_to_string(&chain_path)
                .with_context(|| format!("cannot read {}", chain_path.display()))?;
            let blocks = parse_chain_log(&chain_text)?;
            print!("{}", render_ballot(&report, &blocks, number));
        }
        None => print!("{}", render_text(&report)),
    }
    Ok(ExitCode::SUCCESS)
}
