//! `larsm`: run scenarios, sweep a parameter, or re-check a saved trace.
//!
//! Exit codes: 0 when every property holds, 1 on a property violation,
//! 2 on a configuration or input error.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use larsm::harness::sweep::{sweep, SweepParam, SweepRow};
use larsm::harness::trace::read_jsonl;
use larsm::harness::{analyze, run, Report, Scenario};

/// Scenarios shipped with the binary, usable by name.
const BUNDLED: &[(&str, &str)] = &[
    ("normal_case", include_str!("../scenarios/normal_case.json")),
    ("failure_case", include_str!("../scenarios/failure_case.json")),
];

#[derive(Parser)]
#[command(name = "larsm", version, about = "Lattice agreement and replicated store simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.jsonl, metrics.json and report.json.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long, env = "LARSM_OUT_DIR", default_value = "larsm-out")]
        out: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        strict: Strict,
    },
    /// Run a scenario once per value of one parameter and print a table.
    Sweep {
        scenario: String,
        /// clients, readRatio or n.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Also write the rows as sweep.json here.
        #[arg(long, env = "LARSM_OUT_DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        strict: Strict,
    },
    /// Re-run the checkers on a saved trace and print the report.
    Check {
        trace: PathBuf,
        #[command(flatten)]
        strict: Strict,
    },
}

#[derive(Args, Clone, Copy)]
struct Strict {
    /// Treat exceeded round or message bounds as violations.
    #[arg(long)]
    strict_bounds: bool,
}

impl Strict {
    fn violated(self, report: &Report) -> bool {
        !report.passed || (self.strict_bounds && report.bound_failures().next().is_some())
    }
}

enum Failure {
    Violation,
    Config(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self::Config(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            scenario,
            out,
            seed,
            strict,
        } => cmd_run(&scenario, &out, seed, strict),
        Command::Sweep {
            scenario,
            param,
            values,
            out,
            strict,
        } => cmd_sweep(&scenario, &param, &values, out.as_deref(), strict),
        Command::Check { trace, strict } => cmd_check(&trace, strict),
    }
}

fn load_scenario(name: &str) -> anyhow::Result<Scenario> {
    let path = Path::new(name);
    if !path.exists() {
        if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) {
            return Ok(Scenario::from_json(text)?);
        }
    }
    Ok(Scenario::load(path)?)
}

fn print_report(report: &Report) {
    for p in report.properties.iter().chain(&report.bounds) {
        let status = if p.passed { "ok" } else { "FAILED" };
        match &p.witness {
            Some(w) => println!("{:<22} {status}: {w}", p.name),
            None => println!("{:<22} {status}", p.name),
        }
    }
}

fn cmd_run(name: &str, out: &Path, seed: Option<u64>, strict: Strict) -> Result<(), Failure> {
    let mut scenario = load_scenario(name)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let output = run(&scenario)?;
    output
        .write_to(out)
        .with_context(|| format!("writing results to {}", out.display()))?;
    print_report(&output.report);
    println!("results in {}", out.display());
    if strict.violated(&output.report) {
        return Err(Failure::Violation);
    }
    Ok(())
}

fn cmd_sweep(name: &str, param: &str, values: &[f64], out: Option<&Path>, strict: Strict) -> Result<(), Failure> {
    let scenario = load_scenario(name)?;
    let param: SweepParam = param.parse()?;
    let rows = sweep(&scenario, param, values)?;
    println!("{}", header());
    for row in &rows {
        println!("{}", table_row(row));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("sweep.json");
        let text = serde_json::to_string_pretty(&rows)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let violated = rows
        .iter()
        .any(|r| !r.passed || (strict.strict_bounds && !r.bounds_exceeded.is_empty()));
    if violated {
        return Err(Failure::Violation);
    }
    Ok(())
}

fn header() -> String {
    format!(
        "{:>8} {:>6} {:>10} {:>10} {:>12} {:>10} {:>10}  failed",
        "value", "ticks", "sequences", "propSize", "roundsPerSeq", "completed", "p50"
    )
}

fn table_row(row: &SweepRow) -> String {
    let m = &row.metrics;
    let (sequences, size, rounds) = m
        .gla
        .as_ref()
        .map_or((0, 0.0, 0.0), |g| (g.sequences, g.mean_proposal_size, g.mean_rounds_per_sequence));
    let (completed, p50) = m.rsm.as_ref().map_or((0, 0), |r| (r.completed, r.latency.p50));
    let mut failed = row.failed.clone();
    failed.extend(row.bounds_exceeded.iter().map(|b| format!("{b} (bound)")));
    format!(
        "{:>8} {:>6} {:>10} {:>10.2} {:>12.2} {:>10} {:>10}  {}",
        row.value,
        m.ticks,
        sequences,
        size,
        rounds,
        completed,
        p50,
        if failed.is_empty() { "-".to_owned() } else { failed.join(",") }
    )
}

fn cmd_check(path: &Path, strict: Strict) -> Result<(), Failure> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let events = read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    let (report, _) = analyze(&events);
    print_report(&report);
    if strict.violated(&report) {
        return Err(Failure::Violation);
    }
    Ok(())
}
