//! `hypmark`: batch frontend over the library. Every subcommand writes a JSON
//! summary plus CSV tables into `--out` and prints one verdict line per
//! checked claim.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 for
//! configuration or usage errors, 3 for numeric failures.

mod commands;
mod config;
mod error;
mod output;
mod suite;

use clap::{Parser, Subcommand};
use commands::Outcome;
use config::Settings;
use error::CliError;
use output::Sink;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "hypmark", version, about = "Markov partitions, first-return coding and thermodynamic checks")]
pub struct Cli {
    /// Flat dotted-key config file (model.*, caps.*, mc.*).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for JSON and CSV artifacts.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Config override `key=value`; repeatable, applied after --config.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the structural conditions of the configured model.
    Verify(commands::VerifyArgs),
    /// List admissible continuations of a prefix.
    Enumerate(commands::EnumerateArgs),
    /// Gap families of a symbol up to an order.
    Gaps(commands::GapsArgs),
    /// First-return words between symbols and first returns to symbol 1.
    Returns(commands::ReturnsArgs),
    /// Return-time tail masses and their geometric fit.
    Tail(commands::TailArgs),
    /// Induced-state mixing times and the symbolic Markov lemma.
    Mixing(commands::MixingArgs),
    /// Certified relative measures of the Cantor sets.
    Cantor(commands::CantorArgs),
    /// Partition sums and Gurevich pressure.
    Pressure(commands::PressureArgs),
    /// Induced pressure of shifted potentials.
    Discriminant(commands::DiscriminantArgs),
    /// Transfer-operator spectral gap and residual decay.
    Spectrum(commands::SpectrumArgs),
    /// Distortion variation over rectangles.
    Variation(commands::VariationArgs),
    /// Histogram and symbol frequencies of long orbits.
    Simulate(commands::SimulateArgs),
    /// Monte Carlo Lyapunov exponent.
    Lyapunov(commands::LyapunovArgs),
    /// Entropy against the Lyapunov integral.
    Entropy(commands::EntropyArgs),
    /// Correlation decay of observables.
    Correlate(commands::CorrelateArgs),
    /// Central limit test on block sums.
    Clt(commands::CltArgs),
    /// Run every acceptance criterion.
    All {
        #[arg(long, value_enum, default_value = "quick")]
        profile: suite::Profile,
    },
}

fn print_outcome(o: &Outcome) {
    for line in &o.listing {
        println!("{line}");
    }
    for v in &o.verdicts {
        println!("{}", v.line());
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let settings = Settings::load(cli.config.as_deref(), &cli.set)?;
    let sink = Sink::new(&cli.out)?;
    let s = &settings;
    let (name, outcome) = match &cli.command {
        Command::Verify(a) => ("verify", commands::verify(a, s, &sink)?),
        Command::Enumerate(a) => ("enumerate", commands::enumerate(a, s, &sink)?),
        Command::Gaps(a) => ("gaps", commands::gaps(a, s, &sink)?),
        Command::Returns(a) => ("returns", commands::returns(a, s, &sink)?),
        Command::Tail(a) => ("tail", commands::tail(a, s, &sink)?),
        Command::Mixing(a) => ("mixing", commands::mixing(a, s, &sink)?),
        Command::Cantor(a) => ("cantor", commands::cantor(a, s, &sink)?),
        Command::Pressure(a) => ("pressure", commands::pressure(a, s, &sink)?),
        Command::Discriminant(a) => ("discriminant", commands::discriminant(a, s, &sink)?),
        Command::Spectrum(a) => ("spectrum", commands::spectrum(a, s, &sink)?),
        Command::Variation(a) => ("variation", commands::variation(a, s, &sink)?),
        Command::Simulate(a) => ("simulate", commands::simulate_cmd(a, s, &sink)?),
        Command::Lyapunov(a) => ("lyapunov", commands::lyapunov_cmd(a, s, &sink)?),
        Command::Entropy(a) => ("entropy", commands::entropy(a, s, &sink)?),
        Command::Correlate(a) => ("correlate", commands::correlate(a, s, &sink)?),
        Command::Clt(a) => ("clt", commands::clt(a, s, &sink)?),
        Command::All { profile } => {
            let (pass, _) = suite::run_all(*profile, s, &sink, |id, r| {
                println!(
                    "c{id:02} {} [{}] ({:.2}s)",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.command,
                    r.seconds
                );
                for v in r.verdicts.iter().filter(|v| !v.pass) {
                    println!("    {}", v.line());
                }
            })?;
            return Ok(pass);
        }
    };
    commands::write_summary(name, &outcome, s, &sink)?;
    print_outcome(&outcome);
    let failed: Vec<&str> = outcome.verdicts.iter().filter(|v| !v.pass).map(|v| v.claim.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("check failed: {}", failed.join("; "));
    }
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
