//! The acceptance suite behind `all`: one entry per criterion, each mapped
//! to the subcommand (and flags) that exercises it.

use crate::commands::{self as cmd, Outcome, Verdict};
use crate::config::Settings;
use crate::error::CliError;
use crate::output::Sink;
use clap::Parser;
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Quick,
    Full,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub command: String,
    pub pass: bool,
    pub seconds: f64,
    pub verdicts: Vec<Verdict>,
}

fn args<P: Parser>(argv: &[&str]) -> P {
    P::try_parse_from(std::iter::once("suite").chain(argv.iter().copied())).expect("suite flags are valid")
}

/// The documented command line for each criterion at the given profile.
pub fn command_line(id: u32, profile: Profile) -> Vec<&'static str> {
    let full = profile == Profile::Full;
    match id {
        1 => vec!["enumerate", "--prefix", "1", "--length", "4"],
        2 => vec!["gaps", "--symbol", "3", "--order", "3"],
        3 => vec!["returns", "--max-source", "8", "--max-target", "8"],
        4 | 10 => vec!["mixing", "--symbols", "4", "--horizon", "20"],
        5 => vec!["tail", "--nmax", "12"],
        6 => vec!["cantor", "--depth", "60"],
        7 => vec!["pressure", "--mode", "tower", "--nmax", "12"],
        8 => vec!["discriminant", "--grid", "0,0.05,0.1,0.2"],
        9 => vec!["spectrum", "--iters", "200", "--symbol-cap", "20", "--max-return", "6"],
        11 if full => vec!["entropy", "--steps", "125100", "--trajectories", "8"],
        11 => vec!["entropy", "--steps", "25100", "--trajectories", "8"],
        12 => vec!["correlate", "--seeds", "11,12", "--steps", "125100", "--trajectories", "8"],
        13 if full => vec!["clt", "--block-len", "10000", "--blocks", "10000", "--compare", "1000"],
        13 => vec!["clt", "--block-len", "1000", "--blocks", "10000", "--compare", "100"],
        14 => vec!["variation", "--eps", "0.05"],
        15 => vec!["verify", "--rigs"],
        _ => panic!("no criterion {id}"),
    }
}

fn dispatch(argv: &[&str], s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let (name, rest) = argv.split_first().expect("command name");
    match *name {
        "enumerate" => cmd::enumerate(&args(rest), s, sink),
        "gaps" => cmd::gaps(&args(rest), s, sink),
        "returns" => cmd::returns(&args(rest), s, sink),
        "mixing" => cmd::mixing(&args(rest), s, sink),
        "tail" => cmd::tail(&args(rest), s, sink),
        "cantor" => cmd::cantor(&args(rest), s, sink),
        "pressure" => cmd::pressure(&args(rest), s, sink),
        "discriminant" => cmd::discriminant(&args(rest), s, sink),
        "spectrum" => cmd::spectrum(&args(rest), s, sink),
        "entropy" => cmd::entropy(&args(rest), s, sink),
        "correlate" => cmd::correlate(&args(rest), s, sink),
        "clt" => cmd::clt(&args(rest), s, sink),
        "variation" => cmd::variation(&args(rest), s, sink),
        "verify" => cmd::verify(&args(rest), s, sink),
        other => unreachable!("unknown suite command {other}"),
    }
}

/// Criteria 4 and 10 share the `mixing` run; each keeps its own verdicts.
fn keep(id: u32, v: &Verdict) -> bool {
    let markov = v.claim.contains("concatenation") || v.claim.contains("strictness");
    match id {
        4 => markov,
        10 => !markov,
        _ => true,
    }
}

pub fn run_all(profile: Profile, s: &Settings, sink: &Sink, mut on_result: impl FnMut(u32, &CriterionResult)) -> Result<(bool, BTreeMap<String, CriterionResult>), CliError> {
    let mut report = BTreeMap::new();
    let mut shared: Option<(Outcome, f64)> = None;
    for id in 1..=15u32 {
        let argv = command_line(id, profile);
        let sub = sink.sub(&format!("c{id:02}"))?;
        let started = Instant::now();
        let (outcome, seconds) = match (&shared, argv[0]) {
            (Some((o, secs)), "mixing") => (o.clone(), *secs),
            _ => {
                let o = dispatch(&argv, s, &sub)?;
                let secs = started.elapsed().as_secs_f64();
                if argv[0] == "mixing" {
                    shared = Some((o.clone(), secs));
                }
                (o, secs)
            }
        };
        cmd::write_summary(argv[0], &outcome, s, &sub)?;
        let verdicts: Vec<Verdict> = outcome.verdicts.into_iter().filter(|v| keep(id, v)).collect();
        let result = CriterionResult {
            command: argv.join(" "),
            pass: verdicts.iter().all(|v| v.pass),
            seconds,
            verdicts,
        };
        on_result(id, &result);
        report.insert(format!("c{id:02}"), result);
    }
    let pass = report.values().all(|r| r.pass);
    sink.json(
        "report.json",
        &json!({
            "profile": format!("{profile:?}").to_lowercase(),
            "version": hypmark::VERSION,
            "seed": s.mc.seed,
            "settings": s.dotted(),
            "pass": pass,
            "criteria": report,
        }),
    )?;
    Ok((pass, report))
}
