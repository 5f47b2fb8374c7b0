use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use logcalc::harness::{self, Command, KappaPolicy};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Validate,
    Logrep,
    Solve,
    Check,
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Validate => Command::Validate,
            Cmd::Logrep => Command::Logrep,
            Cmd::Solve => Command::Solve,
            Cmd::Check => Command::Check,
            Cmd::Report => Command::Report,
        }
    }
}

/// Logarithm representations of evolution-family generators.
///
/// Set LOGCALC_THREADS to cap the worker pool.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for report.json and CSV artefacts.
    #[arg(long)]
    out: PathBuf,
    /// Tolerance override, `name=value`; repeatable.
    #[arg(long = "tol", value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
    /// Replaces the scenario's κ policy with this margin.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value for {k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("LOGCALC_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                logcalc::exec::init_threads(n);
            }
            _ => eprintln!("ignoring LOGCALC_THREADS={n}"),
        }
    }
    let scenario = harness::parse_scenario(&cli.scenario).and_then(|mut s| {
        for (k, v) in &cli.tol {
            s.override_tolerance(k, *v)?;
        }
        if let Some(m) = cli.margin {
            s.kappa_policy = KappaPolicy::Margin { margin: m };
        }
        if let Some(seed) = cli.seed {
            s.seed = seed;
        }
        s.validate()?;
        Ok(s)
    });
    let scenario = match scenario {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.scenario.display());
            let record = serde_json::json!({
                "version": harness::VERSION,
                "pass": false,
                "errors": [{"phase": "parse", "message": e.to_string()}],
            });
            if std::fs::create_dir_all(&cli.out).is_ok() {
                let _ = std::fs::write(cli.out.join("report.json"), serde_json::to_string_pretty(&record).unwrap());
            }
            return ExitCode::from(2);
        }
    };
    let report = harness::run(cli.command.into(), &scenario, &cli.out);
    for c in &report.checks {
        println!(
            "{:<5} {:<28} {:.3e} {} {:.3e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.threshold
        );
    }
    for e in &report.errors {
        println!("ERROR {}: {} ({})", e.phase, e.message, e.kind);
    }
    println!("{} {}: {}", report.command, report.scenario, if report.pass { "pass" } else { "fail" });
    ExitCode::from(report.exit_code() as u8)
}
