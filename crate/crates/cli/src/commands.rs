//! One runner per subcommand. Runners write their CSV tables into the sink
//! and return verdicts plus a JSON summary; `main` and the suite write the
//! summary file and print the verdict lines.

use crate::config::Settings;
use crate::error::CliError;
use crate::output::{num, Sink};
use clap::{Args, Parser};
use hypmark::cantor::{cantor_measure, relative_measure};
use hypmark::model::verify_conditions;
use hypmark::returns::{
    first_return_words, markov_check, markov_random, markov_sweep, mixing_check, mixing_states, mp1_words,
    return_tail, return_word_width, Mp1Mode,
};
use hypmark::stats::{
    clt_test, correlation, entropy_check, lyapunov, lyapunov_closed_form, simulate, symbol_chi_square, Observable,
};
use hypmark::symbolic::{cylinder_width_exact, enumerate_admissible, enumerate_gaps, variation_family};
use hypmark::thermo::{discriminant_scan, gurevich_pressure, power_iterate, renewal_spectrum, Potential, PressureMode};
use hypmark::{ModelSpec, Word};
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub claim: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(claim: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            claim: claim.into(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.claim, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub verdicts: Vec<Verdict>,
    pub result: Value,
    /// Seed of randomized runs, embedded in the summary.
    pub seed: Option<u64>,
    /// Printed before the verdicts (e.g. enumerated words).
    pub listing: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Writes `<name>.json` with provenance, verdicts and the command result.
pub fn write_summary(name: &str, outcome: &Outcome, settings: &Settings, sink: &Sink) -> Result<(), CliError> {
    let mut doc = json!({
        "command": name,
        "version": hypmark::VERSION,
        "settings": settings.dotted(),
        "pass": outcome.passed(),
        "verdicts": outcome.verdicts,
        "result": outcome.result,
    });
    if let Some(seed) = outcome.seed {
        doc["seed"] = json!(seed);
    }
    sink.json(&format!("{name}.json"), &doc)
}

fn parse_word(s: &str) -> Result<Word, CliError> {
    let symbols: Result<Vec<u32>, _> = s
        .trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u32>())
        .collect();
    let symbols = symbols.map_err(|_| CliError::Config(format!("cannot parse word {s:?}")))?;
    Ok(Word(symbols))
}

fn parse_observable(s: &str) -> Result<Observable, CliError> {
    s.parse().map_err(|e: hypmark::Error| CliError::Config(e.to_string()))
}

fn file_safe(s: &str) -> String {
    s.replace([':', '/'], "_")
}

#[derive(Args, Clone, Debug, Default)]
pub struct CapsArgs {
    /// Largest symbol of the truncated induced alphabet.
    #[arg(long)]
    pub symbol_cap: Option<u32>,
    /// Largest return time of the truncated induced alphabet.
    #[arg(long)]
    pub max_return: Option<usize>,
    /// Cylinder depth of transfer-operator tables.
    #[arg(long)]
    pub table_depth: Option<usize>,
    /// Return times summed exactly in induced sums.
    #[arg(long)]
    pub r_max: Option<usize>,
    /// Budget ceiling of the induced-mass recursion.
    #[arg(long)]
    pub budget_cap: Option<usize>,
    /// Age states of the renewal operator.
    #[arg(long)]
    pub ages: Option<usize>,
}

impl CapsArgs {
    fn apply(&self, s: &Settings) -> Settings {
        let mut s = s.clone();
        let c = &mut s.caps;
        c.symbol_cap = self.symbol_cap.unwrap_or(c.symbol_cap);
        c.max_return = self.max_return.unwrap_or(c.max_return);
        c.table_depth = self.table_depth.unwrap_or(c.table_depth);
        c.r_max = self.r_max.unwrap_or(c.r_max);
        c.budget_cap = self.budget_cap.unwrap_or(c.budget_cap);
        c.ages = self.ages.unwrap_or(c.ages);
        s
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct McArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps per trajectory, burn-in included.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Independent trajectories.
    #[arg(long)]
    pub trajectories: Option<usize>,
}

impl McArgs {
    fn apply(&self, s: &Settings) -> Result<Settings, CliError> {
        let mut s = s.clone();
        let m = &mut s.mc;
        m.seed = self.seed.unwrap_or(m.seed);
        m.steps = self.steps.unwrap_or(m.steps);
        m.burn_in = self.burn_in.unwrap_or(m.burn_in);
        m.samples = self.trajectories.unwrap_or(m.samples);
        m.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s)
    }
}

// ---------------------------------------------------------------- verify

#[derive(Parser, Clone, Debug)]
pub struct VerifyArgs {
    /// Sample points per symbol for the sampled conditions.
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Also run the default model and the two rigged models.
    #[arg(long)]
    pub rigs: bool,
}

fn condition_rows(report: &hypmark::ConditionReport) -> Vec<Vec<String>> {
    report
        .conditions
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                c.pass.to_string(),
                num(c.margin),
                c.constant.map(num).unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn verify(args: &VerifyArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let report = verify_conditions(&s.model, args.samples)?;
    sink.csv("conditions.csv", &["name", "pass", "margin", "constant"], condition_rows(&report))?;
    let mut verdicts: Vec<Verdict> = report
        .conditions
        .iter()
        .map(|c| Verdict::new(format!("{} margin", c.name), c.pass, format!("margin {:.6e}", c.margin)))
        .collect();
    let mut result = json!({ "model": report, "k0": report.k0 });
    if args.rigs {
        let default = verify_conditions(&ModelSpec::default(), args.samples)?;
        let tall_spec = ModelSpec {
            width_base: 0.4,
            height_base: 0.45,
            ..ModelSpec::default()
        };
        let wobbly_spec = ModelSpec {
            perturbation: 0.6,
            ..ModelSpec::default()
        };
        let tall = verify_conditions(&tall_spec, args.samples)?;
        let wobbly = verify_conditions(&wobbly_spec, args.samples)?;
        verdicts.push(Verdict::new(
            "default model passes every condition with K_0 = 2",
            default.all_pass() && default.k0 == 2.0,
            format!("failed {:?}, K_0 = {}", default.failed(), default.k0),
        ));
        verdicts.push(Verdict::new(
            "rig a_1 > a fails exactly H5",
            tall.failed() == ["H5"],
            format!("a = 0.4, a_1 = 0.45 fails {:?}", tall.failed()),
        ));
        verdicts.push(Verdict::new(
            "rig with oversized perturbation fails exactly H2",
            wobbly.failed() == ["H2"],
            format!("eps = 0.6 fails {:?}", wobbly.failed()),
        ));
        result["rigs"] = json!({ "default": default, "height_above_width": tall, "oversized_perturbation": wobbly });
    }
    Ok(Outcome {
        verdicts,
        result,
        ..Outcome::default()
    })
}

// ------------------------------------------------------------- enumerate

#[derive(Parser, Clone, Debug)]
pub struct EnumerateArgs {
    /// Prefix word, e.g. `1` or `1,1,2`.
    #[arg(long, default_value = "1")]
    pub prefix: String,
    /// Total word length.
    #[arg(long, default_value_t = 4)]
    pub length: usize,
    /// Largest symbol allowed in continuations.
    #[arg(long)]
    pub cap: Option<u32>,
}

const ORDER_THREE: [[u32; 3]; 2] = [[1, 1, 1], [1, 1, 2]];
const ORDER_FOUR: [[u32; 4]; 7] = [
    [1, 1, 1, 1],
    [1, 1, 1, 2],
    [1, 1, 1, 3],
    [1, 1, 2, 1],
    [1, 1, 2, 2],
    [1, 1, 2, 3],
    [1, 1, 2, 4],
];

pub fn enumerate(args: &EnumerateArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let prefix = parse_word(&args.prefix)?;
    let words = enumerate_admissible(&prefix, args.length, args.cap)?;
    sink.jsonl("enumerate.jsonl", &words)?;
    sink.csv(
        "enumerate.csv",
        &["word", "sum", "width"],
        words.iter().map(|w| {
            let width = if s.model.is_affine() {
                cylinder_width_exact(w, &s.model).to_string()
            } else {
                String::new()
            };
            vec![w.to_string(), w.sum().to_string(), width]
        }),
    )?;
    let mut verdicts = Vec::new();
    if prefix.0 == [1] {
        let three = enumerate_admissible(&prefix, 3, None)?;
        let four = enumerate_admissible(&prefix, 4, None)?;
        let ok3 = three.iter().map(|w| w.0.as_slice()).eq(ORDER_THREE.iter().map(|w| w.as_slice()));
        let ok4 = four.iter().map(|w| w.0.as_slice()).eq(ORDER_FOUR.iter().map(|w| w.as_slice()));
        verdicts.push(Verdict::new(
            "order-3 continuations of [1] are [111] and [112]",
            ok3,
            format!("{} words", three.len()),
        ));
        verdicts.push(Verdict::new(
            "order-4 continuations of [1] are the seven listed words",
            ok4,
            format!("{} words", four.len()),
        ));
    }
    let listing = if words.len() <= 1000 {
        words.iter().map(|w| w.to_string()).collect()
    } else {
        vec![format!("{} words (see enumerate.jsonl)", words.len())]
    };
    Ok(Outcome {
        verdicts,
        result: json!({ "prefix": prefix, "length": args.length, "cap": args.cap, "count": words.len() }),
        listing,
        ..Outcome::default()
    })
}

// ------------------------------------------------------------------ gaps

#[derive(Parser, Clone, Debug)]
pub struct GapsArgs {
    #[arg(long, default_value_t = 3)]
    pub symbol: u32,
    /// Largest stem length.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
}

pub fn gaps(args: &GapsArgs, _s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let mut all = Vec::new();
    for order in 1..=args.order {
        all.extend(enumerate_gaps(args.symbol, order)?);
    }
    sink.csv(
        "gaps.csv",
        &["order", "stem", "threshold"],
        all.iter().map(|g| vec![g.stem.len().to_string(), g.stem.to_string(), g.threshold.to_string()]),
    )?;
    let mut verdicts = Vec::new();
    if args.symbol == 3 && args.order >= 3 {
        let listed: [(&[u32], u64); 5] = [(&[3], 3), (&[3, 1], 4), (&[3, 2], 5), (&[3, 3], 6), (&[3, 1, 1], 5)];
        let found: Vec<Option<u64>> = listed
            .iter()
            .map(|(stem, _)| all.iter().find(|g| g.stem.0 == *stem).map(|g| g.threshold))
            .collect();
        let ok = listed.iter().zip(&found).all(|((_, t), f)| *f == Some(*t));
        verdicts.push(Verdict::new(
            "gap thresholds of C_3 match the listed families",
            ok,
            format!("[3]>{:?} [3,1]>{:?} [3,2]>{:?} [3,3]>{:?} [3,1,1]>{:?}", found[0], found[1], found[2], found[3], found[4]),
        ));
    }
    Ok(Outcome {
        verdicts,
        result: json!({ "symbol": args.symbol, "order": args.order, "gaps": all }),
        ..Outcome::default()
    })
}

// --------------------------------------------------------------- returns

#[derive(Parser, Clone, Debug)]
pub struct ReturnsArgs {
    /// Largest source symbol.
    #[arg(long, default_value_t = 8)]
    pub max_source: u32,
    /// Largest target symbol.
    #[arg(long, default_value_t = 8)]
    pub max_target: u32,
    /// Longest first-return word to symbol 1 counted in both modes.
    #[arg(long, default_value_t = 8)]
    pub mp1_len: usize,
}

#[derive(Serialize)]
struct ReturnLine<'a> {
    word: &'a Word,
    source: u32,
    target: u32,
    return_time: usize,
    width: f64,
}

pub fn returns(args: &ReturnsArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let mut all = Vec::new();
    let mut table = Vec::new();
    for j0 in 1..=args.max_source {
        for j1 in 1..=args.max_target {
            let words = first_return_words(j0, j1)?;
            let longest = words.iter().map(|r| r.word.len()).max().unwrap_or(0);
            table.push(vec![j0.to_string(), j1.to_string(), words.len().to_string(), longest.to_string()]);
            all.extend(words);
        }
    }
    let widths: Vec<f64> = all.iter().map(|r| return_word_width(r, &s.model)).collect::<Result<_, _>>()?;
    sink.jsonl(
        "returns.jsonl",
        all.iter().zip(&widths).map(|(r, &width)| ReturnLine {
            word: &r.word,
            source: r.source,
            target: r.target,
            return_time: r.return_time,
            width,
        }),
    )?;
    sink.csv("returns.csv", &["source", "target", "count", "max_len"], table)?;

    let strict = mp1_words(args.mp1_len, Mp1Mode::StrictSuffix)?;
    let no_one = mp1_words(args.mp1_len, Mp1Mode::NoInteriorOne)?;
    let count_by_len = |ws: &[hypmark::ReturnWord], len: usize| ws.iter().filter(|r| r.word.len() == len).count();
    sink.csv(
        "mp1.csv",
        &["length", "strict_suffix", "no_interior_one"],
        (2..=args.mp1_len).map(|l| vec![l.to_string(), count_by_len(&strict, l).to_string(), count_by_len(&no_one, l).to_string()]),
    )?;

    let mut verdicts = Vec::new();
    if args.max_target >= 3 {
        let worked = [[1u32, 1, 1, 3], [1, 1, 2, 3]].iter().all(|w| {
            all.iter()
                .any(|r| r.word.0 == *w && r.source == 1 && r.target == 3 && r.return_time == 3)
        });
        verdicts.push(Verdict::new(
            "[1,1,1,3] and [1,1,2,3] are return words 1 -> 3 with return time 3",
            worked,
            String::new(),
        ));
    }
    let over: Vec<&hypmark::ReturnWord> = all
        .iter()
        .filter(|r| r.word.len() as i64 > r.target as i64 - r.source as i64 + 2)
        .collect();
    verdicts.push(Verdict::new(
        "every return word has length <= target - source + 2",
        over.is_empty(),
        format!(
            "{} of {} exceed it{}",
            over.len(),
            all.len(),
            over.iter()
                .take(3)
                .map(|r| format!(" {}", r.word))
                .collect::<String>()
        ),
    ));
    let loose = all.iter().filter(|r| r.word.len() > r.target as usize + 1).count();
    verdicts.push(Verdict::new(
        "every return word has length <= target + 1",
        loose == 0,
        format!("{loose} of {} exceed it", all.len()),
    ));
    Ok(Outcome {
        verdicts,
        result: json!({
            "return_words": all.len(),
            "mp1_strict_suffix": strict.len(),
            "mp1_no_interior_one": no_one.len(),
            "length_bound_violations": over.len(),
        }),
        ..Outcome::default()
    })
}

// ------------------------------------------------------------------ tail

#[derive(Parser, Clone, Debug)]
pub struct TailArgs {
    #[arg(long, default_value_t = 12)]
    pub nmax: usize,
}

pub fn tail(args: &TailArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let fit = return_tail(args.nmax, &s.model)?;
    sink.csv(
        "tail.csv",
        &["n", "mass", "bound", "min_landing"],
        fit.rows
            .iter()
            .map(|r| vec![r.n.to_string(), num(r.mass), num(r.bound), r.min_landing.to_string()]),
    )?;
    let landing_ok = fit.lemma_counterexamples == 0 && fit.rows.iter().all(|r| r.min_landing >= r.n as u64);
    let mut mass_ok = true;
    for (k, r) in fit.rows.iter().enumerate() {
        let bound = 2f64.powi(1 - r.n as i32);
        let remaining: f64 = fit.rows[k..].iter().map(|q| q.mass).sum();
        mass_ok &= r.mass <= bound && remaining <= bound;
    }
    let verdicts = vec![
        Verdict::new(
            "every non-returned length-n stem has n-th symbol >= n",
            landing_ok,
            format!("{} counterexamples", fit.lemma_counterexamples),
        ),
        Verdict::new("non-returned mass <= 2^(-n+1)", mass_ok, format!("n <= {}", args.nmax)),
        Verdict::new(
            "return-time tail is geometric with beta < 1",
            fit.beta < 1.0 && fit.r_squared >= 0.98,
            format!("beta {:.6}, R^2 {:.5} over {:?}", fit.beta, fit.r_squared, fit.fit_window),
        ),
    ];
    Ok(Outcome {
        verdicts,
        result: json!({
            "C": fit.c, "beta": fit.beta, "residual": fit.residual, "r_squared": fit.r_squared,
            "fit_window": fit.fit_window, "lemma_counterexamples": fit.lemma_counterexamples,
            "stems_checked": fit.stems_checked,
        }),
        ..Outcome::default()
    })
}

// ---------------------------------------------------------------- cantor

#[derive(Parser, Clone, Debug)]
pub struct CantorArgs {
    #[arg(long, default_value_t = 60)]
    pub depth: usize,
    /// Largest symbol n for which C_n is measured.
    #[arg(long, default_value_t = 20)]
    pub nmax: u32,
}

pub fn cantor(args: &CantorArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let rows: Vec<(u32, hypmark::MeasureInterval)> = (1..=args.nmax)
        .map(|n| cantor_measure(n, args.depth, &s.model).map(|m| (n, m)))
        .collect::<Result<_, _>>()?;
    sink.csv(
        "cantor.csv",
        &["n", "depth", "lower", "upper"],
        rows.iter()
            .map(|(n, m)| vec![n.to_string(), m.depth.to_string(), num(m.lower), num(m.upper)]),
    )?;
    let rho = relative_measure(1, args.depth, &s.model)?;
    let limit_ok = rows
        .iter()
        .filter(|(n, _)| *n >= 5)
        .all(|(n, m)| m.lower >= 1.0 - 2f64.powi(1 - *n as i32) - 1e-6);
    let verdicts = vec![
        Verdict::new(
            "certified interval for rho(1) is narrower than 1e-6",
            rho.width() < 1e-6,
            format!("[{:.12}, {:.12}] at depth {}", rho.lower, rho.upper, args.depth),
        ),
        Verdict::new("rho(1) >= 0.288", rho.lower >= 0.288, format!("lower {:.9}", rho.lower)),
        Verdict::new(
            "relative measure of C_n tends to one: lower >= 1 - 2^(-n+1) for n >= 5",
            limit_ok,
            format!("n <= {}", args.nmax),
        ),
    ];
    Ok(Outcome {
        verdicts,
        result: json!({ "c_0": rho.lower, "rho_1": rho, "depth": args.depth }),
        ..Outcome::default()
    })
}

// -------------------------------------------------------------- pressure

#[derive(Parser, Clone, Debug)]
pub struct PressureArgs {
    /// `tower` or `induced`.
    #[arg(long, default_value = "tower")]
    pub mode: String,
    #[arg(long, default_value_t = 12)]
    pub nmax: usize,
    /// Constant added to the potential.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub shift: f64,
    #[command(flatten)]
    pub caps: CapsArgs,
}

pub fn pressure(args: &PressureArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let s = args.caps.apply(s);
    let mode: PressureMode = args.mode.parse().map_err(|e: hypmark::Error| CliError::Config(e.to_string()))?;
    let pot = Potential::new(s.model).shifted(args.shift);
    let est = gurevich_pressure(&pot, args.nmax, mode, &s.caps)?;
    sink.csv(
        "pressure.csv",
        &["n", "Z_lower", "Z_upper", "slope", "exact"],
        est.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                num(r.z.lo),
                num(r.z.hi),
                num(r.slope),
                r.exact.clone().unwrap_or_default(),
            ]
        }),
    )?;
    let mut verdicts = Vec::new();
    let contains_shift = est.bracket.0 <= args.shift && args.shift <= est.bracket.1;
    verdicts.push(Verdict::new(
        format!("Gurevich pressure of phi + {} is {}", args.shift, args.shift),
        contains_shift,
        format!("bracket [{:.6}, {:.6}]", est.bracket.0, est.bracket.1),
    ));
    if mode == PressureMode::Tower && s.model.is_affine() && args.shift == 0.0 {
        let golden = ["1/2", "1/4", "3/16", "43/256"];
        let exact: Vec<String> = est.rows.iter().take(4).map(|r| r.exact.clone().unwrap_or_default()).collect();
        verdicts.push(Verdict::new(
            "Z_1..Z_4 = 1/2, 1/4, 3/16, 43/256",
            exact.iter().map(String::as_str).eq(golden),
            exact.join(", "),
        ));
        if let Some(c_hat) = est.c_hat {
            let half = (est.bracket.1 - est.bracket.0) / 2.0;
            let allowed = (2.0 / c_hat).ln() / args.nmax as f64;
            verdicts.push(Verdict::new(
                "pressure bracket half-width <= log(2/c)/n",
                half <= allowed + 1e-12 && est.bounds_hold,
                format!("{half:.6} <= {allowed:.6}"),
            ));
        }
    }
    Ok(Outcome {
        verdicts,
        result: serde_json::to_value(&est)?,
        ..Outcome::default()
    })
}

// ---------------------------------------------------------- discriminant

#[derive(Parser, Clone, Debug)]
pub struct DiscriminantArgs {
    /// Shifts p of the potential phi + p.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2")]
    pub grid: Vec<f64>,
    #[command(flatten)]
    pub caps: CapsArgs,
}

pub fn discriminant(args: &DiscriminantArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let s = args.caps.apply(s);
    let scan = discriminant_scan(&s.model, &args.grid, &s.caps)?;
    sink.csv(
        "discriminant.csv",
        &["p", "pressure", "lower", "upper", "diverged"],
        scan.rows.iter().map(|r| {
            vec![
                num(r.p),
                r.pressure.map(num).unwrap_or_else(|| "inf".into()),
                r.bracket.map(|b| num(b.0)).unwrap_or_default(),
                r.bracket.map(|b| num(b.1)).unwrap_or_default(),
                r.diverged.to_string(),
            ]
        }),
    )?;
    let below: Vec<_> = scan.rows.iter().filter(|r| r.p < scan.threshold).collect();
    let above: Vec<_> = scan.rows.iter().filter(|r| r.p >= scan.threshold).collect();
    let verdicts = vec![
        Verdict::new(
            "induced pressure is finite below log(1/beta)",
            below.iter().all(|r| r.pressure.is_some_and(f64::is_finite)),
            format!("threshold {:.6}", scan.threshold),
        ),
        Verdict::new("P(phi + p) >= p + P(phi)", scan.shift_inequality, String::new()),
        Verdict::new(
            "induced sum diverges beyond log(1/beta)",
            above.iter().all(|r| r.diverged),
            format!("{} grid points at or beyond the threshold", above.len()),
        ),
        Verdict::new(
            "discriminant is positive",
            scan.positive,
            if scan.positive { "positive" } else { "not positive" },
        ),
    ];
    Ok(Outcome {
        verdicts,
        result: serde_json::to_value(&scan)?,
        ..Outcome::default()
    })
}

// -------------------------------------------------------------- spectrum

#[derive(Parser, Clone, Debug)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[command(flatten)]
    pub caps: CapsArgs,
}

pub fn spectrum(args: &SpectrumArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let s = args.caps.apply(s);
    let table = power_iterate(&Potential::new(s.model), &s.caps, args.iters)?;
    let renewal = renewal_spectrum(&s.model, &s.caps, args.iters)?;
    for (name, r) in [("spectrum_table_decay.csv", &table), ("spectrum_renewal_decay.csv", &renewal)] {
        sink.csv(name, &["n", "residual"], r.decay.iter().map(|d| vec![d.n.to_string(), num(d.residual)]))?;
    }
    let slope = renewal.fit.as_ref().map(|f| f.slope).unwrap_or(f64::NAN);
    let target = renewal.subleading_ratio.ln();
    let verdicts = vec![
        Verdict::new(
            "leading eigenvalue equals the directly summed induced mass",
            (table.lambda - table.direct_mass).abs() < 1e-10,
            format!("lambda {:.14}, direct {:.14}", table.lambda, table.direct_mass),
        ),
        Verdict::new(
            "subleading ratio < 1",
            table.subleading_ratio < 1.0 && renewal.subleading_ratio < 1.0,
            format!("table {:.3e}, renewal {:.6}", table.subleading_ratio, renewal.subleading_ratio),
        ),
        Verdict::new(
            "residual decay slope within 0.05 of log(subleading ratio)",
            (slope - target).abs() < 0.05,
            format!("slope {slope:.5}, log ratio {target:.5}"),
        ),
    ];
    Ok(Outcome {
        verdicts,
        result: json!({ "induced_table": table, "renewal": renewal }),
        ..Outcome::default()
    })
}

// ---------------------------------------------------------------- mixing

#[derive(Parser, Clone, Debug)]
pub struct MixingArgs {
    /// Largest symbol in the truncated first-return alphabet.
    #[arg(long, default_value_t = 4)]
    pub symbols: u32,
    /// Largest return time of a state.
    #[arg(long = "state-return", default_value_t = 6)]
    pub state_return: usize,
    #[arg(long, default_value_t = 20)]
    pub horizon: usize,
    /// Exhaustive Markov sweep: longest word.
    #[arg(long, default_value_t = 5)]
    pub markov_len: usize,
    /// Exhaustive Markov sweep: largest symbol.
    #[arg(long, default_value_t = 6)]
    pub markov_symbols: u32,
    /// Random Markov cases of lengths 6 to 20.
    #[arg(long, default_value_t = 100_000)]
    pub markov_random: u64,
}

pub fn mixing(args: &MixingArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let states = mixing_states(args.symbols, args.state_return)?;
    let table = mixing_check(&states, args.horizon)?;
    sink.csv(
        "mixing.csv",
        &["from", "to", "n"],
        table.iter().map(|e| {
            vec![
                e.from.to_string(),
                e.to.to_string(),
                e.n.map(|n| n.to_string()).unwrap_or_else(|| "none".into()),
            ]
        }),
    )?;
    let missing = table.iter().filter(|e| e.n.is_none()).count();
    let largest = table.iter().filter_map(|e| e.n).max();
    let sweep = markov_sweep(args.markov_len, args.markov_symbols)?;
    let random = markov_random(args.markov_random, s.mc.seed)?;
    let witness = markov_check(&Word(vec![1, 1, 2]), &Word(vec![2]))?;
    let witnessed = witness.strictness_witnesses.contains(&Word(vec![2, 3]))
        && Word(vec![1, 1, 2, 3]).is_admissible()
        && !Word(vec![2, 3]).is_admissible();
    let verdicts = vec![
        Verdict::new(
            "overlap-concatenation of admissible words is admissible",
            sweep.failures == 0 && random.failures == 0,
            format!(
                "{} exhaustive + {} random pairs, {} failures",
                sweep.pairs,
                random.pairs,
                sweep.failures + random.failures
            ),
        ),
        Verdict::new("strictness witness: [1123] admissible, [23] not", witnessed, String::new()),
        Verdict::new(
            "every pair of induced states connects at all large times",
            missing == 0,
            format!("{} states, {missing} pairs without N, largest N {:?}", states.len(), largest),
        ),
    ];
    Ok(Outcome {
        verdicts,
        result: json!({
            "states": states.len(), "pairs": table.len(), "largest_n": largest,
            "markov_exhaustive": sweep, "markov_random": random,
        }),
        seed: Some(s.mc.seed),
        ..Outcome::default()
    })
}

// ------------------------------------------------------------- variation

#[derive(Parser, Clone, Debug)]
pub struct VariationArgs {
    /// Perturbation size; defaults to `model.perturbation`.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Largest past and future lengths.
    #[arg(long = "max-len", default_value_t = 6)]
    pub max_len: usize,
    /// Largest symbol in the rectangles' defining strings.
    #[arg(long, default_value_t = 3)]
    pub symbols: u32,
    /// Sample points per rectangle side.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
}

pub fn variation(args: &VariationArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let spec = ModelSpec {
        perturbation: args.eps.unwrap_or(s.model.perturbation),
        ..s.model
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let fit = variation_family(&spec, args.max_len, args.max_len, args.symbols, args.samples)?;
    let affine = variation_family(&spec.affine_part(), args.max_len, args.max_len, args.symbols, args.samples)?;
    sink.csv(
        "variation.csv",
        &["m", "n", "variation"],
        fit.rows.iter().map(|r| vec![r.m.to_string(), r.n.to_string(), num(r.variation)]),
    )?;
    let mut verdicts = vec![Verdict::new(
        "variation vanishes without perturbation",
        affine.rows.iter().all(|r| r.variation == 0.0),
        String::new(),
    )];
    if !spec.is_affine() {
        let theta0 = fit.theta0.unwrap_or(f64::NAN);
        verdicts.push(Verdict::new(
            "variation is nonincreasing in min(m, n) with theta_0 < 1",
            fit.passes() && fit.theta0.is_some(),
            format!("theta_0 {theta0:.5}, monotone {}", fit.monotone),
        ));
    }
    Ok(Outcome {
        verdicts,
        result: json!({
            "eps": spec.perturbation, "C": fit.c, "theta0": fit.theta0, "theta1": fit.theta1,
            "residual": fit.residual, "r_squared": fit.r_squared, "monotone": fit.monotone, "by_min": fit.by_min,
        }),
        ..Outcome::default()
    })
}

// -------------------------------------------------------------- simulate

#[derive(Parser, Clone, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 64)]
    pub nx: usize,
    #[arg(long, default_value_t = 64)]
    pub ny: usize,
    #[command(flatten)]
    pub mc: McArgs,
}

pub fn simulate_cmd(args: &SimulateArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let s = args.mc.apply(s)?;
    let sim = simulate(&s.mc, &s.model, args.nx, args.ny)?;
    let h = &sim.histogram;
    sink.csv(
        "histogram.csv",
        &["x_bin", "y_bin", "count"],
        (0..h.nx).flat_map(|i| (0..h.ny).map(move |j| vec![i.to_string(), j.to_string(), h.counts[i * h.ny + j].to_string()])),
    )?;
    let total: u64 = sim.symbol_counts.iter().sum();
    sink.csv(
        "symbols.csv",
        &["symbol", "count", "frequency", "expected"],
        sim.symbol_counts.iter().enumerate().take(64).map(|(k, &c)| {
            vec![
                (k + 1).to_string(),
                c.to_string(),
                num(c as f64 / total as f64),
                num(s.model.width(k as u32 + 1)),
            ]
        }),
    )?;
    let m = 10;
    let chi = symbol_chi_square(&sim, &s.model, m);
    let q99 = ChiSquared::new(m as f64).expect("positive degrees of freedom").inverse_cdf(0.99);
    Ok(Outcome {
        verdicts: vec![Verdict::new(
            "symbol frequencies follow the strip widths",
            chi < q99,
            format!("chi-square {chi:.3} < {q99:.3} (99%, symbols <= {m} plus remainder)"),
        )],
        result: json!({ "steps": total, "chi_square": chi, "chi_square_q99": q99, "symbol_counts": sim.symbol_counts }),
        seed: Some(s.mc.seed),
        ..Outcome::default()
    })
}

// ------------------------------------------------------ lyapunov/entropy

#[derive(Parser, Clone, Debug)]
pub struct LyapunovArgs {
    #[command(flatten)]
    pub mc: McArgs,
}

pub fn lyapunov_cmd(args: &LyapunovArgs, s: &Settings, _sink: &Sink) -> Result<Outcome, CliError> {
    let s = args.mc.apply(s)?;
    let est = lyapunov(&s.mc, &s.model)?;
    let (closed, tail) = lyapunov_closed_form(&s.model, 200);
    Ok(Outcome {
        verdicts: vec![Verdict::new(
            "Monte Carlo Lyapunov exponent within 0.01 of the closed form",
            (est.value - closed).abs() <= 0.01,
            format!("{:.5} +- {:.5} vs {closed:.12}", est.value, est.stderr),
        )],
        result: json!({ "estimate": est, "closed_form": closed, "series_tail": tail, "recorded_steps": s.mc.recorded() }),
        seed: Some(s.mc.seed),
        ..Outcome::default()
    })
}

#[derive(Parser, Clone, Debug)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub mc: McArgs,
}

pub fn entropy(args: &EntropyArgs, s: &Settings, _sink: &Sink) -> Result<Outcome, CliError> {
    let s = args.mc.apply(s)?;
    let r = entropy_check(&s.mc, &s.model)?;
    let mut verdicts = Vec::new();
    if s.model.is_affine() {
        let agree = (r.closed_form_entropy - r.closed_form_integral).abs() < 1e-12;
        let default_width = s.model.width_base == 0.5;
        verdicts.push(Verdict::new(
            "closed-form entropy and Lyapunov integral agree",
            agree && (!default_width || (r.closed_form_entropy - 2.0 * 2f64.ln()).abs() < 1e-12),
            format!("{:.15} vs {:.15}", r.closed_form_entropy, r.closed_form_integral),
        ));
    }
    verdicts.push(Verdict::new(
        "Monte Carlo entropy and Lyapunov integral within 0.01 of closed forms",
        (r.plugin.value - r.closed_form_entropy).abs() <= 0.01 && (r.integral.value - r.closed_form_integral).abs() <= 0.01,
        format!("entropy {:.5}, integral {:.5}", r.plugin.value, r.integral.value),
    ));
    verdicts.push(Verdict::new(
        "entropy and Lyapunov estimates agree within 3 sigma",
        r.separation_sigmas() <= 3.0,
        format!("{:.2} sigma", r.separation_sigmas()),
    ));
    Ok(Outcome {
        verdicts,
        result: serde_json::to_value(&r)?,
        seed: Some(s.mc.seed),
        ..Outcome::default()
    })
}

// ------------------------------------------------------------- correlate

#[derive(Parser, Clone, Debug)]
pub struct CorrelateArgs {
    /// Observables f (x, cx, y, one, zero, const:c, smooth:i:k, count:i).
    #[arg(long = "obs", value_delimiter = ',', default_value = "cx,smooth:1:1")]
    pub obs: Vec<String>,
    /// Second observable g; each f is correlated with itself when absent.
    #[arg(long)]
    pub against: Option<String>,
    /// Seeds; defaults to `mc.seed` and `mc.seed + 1`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Largest lag.
    #[arg(long, default_value_t = 12)]
    pub nmax: usize,
    #[command(flatten)]
    pub mc: McArgs,
}

pub fn correlate(args: &CorrelateArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let s = args.mc.apply(s)?;
    let seeds = if args.seeds.is_empty() {
        vec![s.mc.seed, s.mc.seed + 1]
    } else {
        args.seeds.clone()
    };
    let against = args.against.as_deref().map(parse_observable).transpose()?;
    let mut verdicts = Vec::new();
    let mut curves = Vec::new();
    for name in &args.obs {
        let f = parse_observable(name)?;
        let g = against.clone().unwrap_or_else(|| f.clone());
        for &seed in &seeds {
            let cfg = hypmark::stats::RunConfig { seed, ..s.mc.clone() };
            let c = correlation(&f, &g, &cfg, &s.model, args.nmax)?;
            sink.csv(
                &format!("correlation_{}_{}_{seed}.csv", file_safe(&c.f), file_safe(&c.g)),
                &["lag", "value", "stderr"],
                c.lags
                    .iter()
                    .zip(c.values.iter().zip(&c.stderr))
                    .map(|(l, (v, e))| vec![l.to_string(), num(*v), num(*e)]),
            )?;
            let constant = matches!(f, Observable::Constant(_)) || matches!(g, Observable::Constant(_));
            if constant {
                verdicts.push(Verdict::new(
                    format!("C_n({}, {}) vanishes (seed {seed})", c.f, c.g),
                    c.values.iter().all(|v| v.abs() < 1e-12),
                    String::new(),
                ));
            } else {
                let r2 = c.fit.as_ref().map(|l| l.r_squared).unwrap_or(f64::NAN);
                let eta = c.eta.unwrap_or(f64::NAN);
                verdicts.push(Verdict::new(
                    format!("C_n({}, {}) decays exponentially (seed {seed})", c.f, c.g),
                    eta < 1.0 && r2 >= 0.95,
                    format!("eta {eta:.4}, R^2 {r2:.4} on lags {:?}", c.window),
                ));
            }
            if f == Observable::CenteredX && g == Observable::CenteredX && s.model.is_affine() {
                verdicts.push(Verdict::new(
                    format!("C_0(cx, cx) = 1/12 (seed {seed})"),
                    (c.values[0] - 1.0 / 12.0).abs() <= 3.0 * c.stderr[0],
                    format!("{:.6} +- {:.6}", c.values[0], c.stderr[0]),
                ));
            }
            curves.push(c);
        }
    }
    Ok(Outcome {
        verdicts,
        result: json!({ "seeds": seeds, "curves": curves }),
        seed: seeds.first().copied(),
        ..Outcome::default()
    })
}

// ------------------------------------------------------------------- clt

#[derive(Parser, Clone, Debug)]
pub struct CltArgs {
    #[arg(long = "obs", default_value = "x")]
    pub obs: String,
    #[arg(long, default_value_t = 10_000)]
    pub block_len: usize,
    #[arg(long, default_value_t = 10_000)]
    pub blocks: usize,
    /// Shorter block length for the variance-plateau comparison (0 skips it).
    #[arg(long, default_value_t = 1_000)]
    pub compare: usize,
    /// KS threshold.
    #[arg(long, default_value_t = 0.02)]
    pub threshold: f64,
    #[command(flatten)]
    pub mc: McArgs,
}

pub fn clt(args: &CltArgs, s: &Settings, sink: &Sink) -> Result<Outcome, CliError> {
    let s = args.mc.apply(s)?;
    let f = parse_observable(&args.obs)?;
    let r = clt_test(&f, &s.mc, &s.model, args.block_len, args.blocks, args.threshold)?;
    let normal = Normal::new(0.0, r.sigma2.max(f64::MIN_POSITIVE).sqrt()).ok();
    sink.csv(
        "clt_quantiles.csv",
        &["level", "sample", "normal"],
        r.quantiles.iter().map(|(level, q)| {
            let nq = normal.map(|n| n.inverse_cdf(*level)).unwrap_or(f64::NAN);
            vec![num(*level), num(*q), num(nq)]
        }),
    )?;
    let mut verdicts = vec![
        Verdict::new(
            "observable is not degenerate",
            !r.degenerate,
            format!("sigma^2 {:.6}", r.sigma2),
        ),
        Verdict::new(
            "normalized block sums are Gaussian",
            r.ks < r.threshold,
            format!("KS {:.5} < {} (DKW 99% radius {:.5})", r.ks, r.threshold, r.dkw99),
        ),
    ];
    let mut result = json!({ "main": r });
    if args.compare > 0 {
        let cfg = hypmark::stats::RunConfig {
            seed: s.mc.seed.wrapping_add(1),
            ..s.mc.clone()
        };
        let short = clt_test(&f, &cfg, &s.model, args.compare, args.blocks, args.threshold)?;
        let se = (r.sigma2_stderr.powi(2) + short.sigma2_stderr.powi(2)).sqrt();
        verdicts.push(Verdict::new(
            "sigma^2 is stable across block lengths",
            (r.sigma2 - short.sigma2).abs() <= 3.0 * se,
            format!(
                "{:.5} +- {:.5} at {} vs {:.5} +- {:.5} at {}",
                r.sigma2, r.sigma2_stderr, args.block_len, short.sigma2, short.sigma2_stderr, args.compare
            ),
        ));
        result["compare"] = serde_json::to_value(&short)?;
    }
    Ok(Outcome {
        verdicts,
        result,
        seed: Some(s.mc.seed),
        ..Outcome::default()
    })
}
