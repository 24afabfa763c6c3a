//! Command-line driver for the homogenization experiments.

pub mod config;
pub mod pipeline;
pub mod record;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::pipeline::{write_record, Pipeline};

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "HOMOG_OUT";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "homogen", version, about = "Stochastic homogenization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub dim: Option<Dim>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Dim {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample the potential and estimate its essential bounds.
    Potential,
    /// Solve the metric problems and check their structural properties.
    Metric,
    /// Estimate shape functions along a parameter ladder.
    Shape,
    /// Tabulate the effective Hamiltonian.
    Effham,
    /// Run the discounted cell-problem ladder.
    Cell,
    /// Run the oscillatory evolution ladder.
    Evolve,
    /// Run every stage and its checks without bulky per-node dumps.
    Verify,
    /// Run every stage, writing all artifacts.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Potential => "potential",
            Command::Metric => "metric",
            Command::Shape => "shape",
            Command::Effham => "effham",
            Command::Cell => "cell",
            Command::Evolve => "evolve",
            Command::Verify => "verify",
            Command::All => "all",
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> i32 {
    let Some(path) = &cli.config else {
        eprintln!("error: --config is required");
        return EXIT_CONFIG;
    };
    let dim = cli.dim.map(|d| match d {
        Dim::One => 1,
        Dim::Two => 2,
    });
    let cfg = match ExperimentConfig::load(path).and_then(|c| c.with_overrides(cli.seed, dim)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output));

    let cmd = cli.command;
    let dump = cmd != Command::Verify;
    let mut p = Pipeline::new(cfg, out.clone(), cmd.name(), dump);
    let full = matches!(cmd, Command::Verify | Command::All);
    if full || cmd == Command::Potential {
        p.stage("potential", Pipeline::potential);
    }
    if full || cmd == Command::Metric {
        p.stage("metric", Pipeline::metric);
    }
    if full || cmd == Command::Shape {
        p.stage("shape", Pipeline::shape);
    }
    let mut table_ok = true;
    if full || matches!(cmd, Command::Effham | Command::Cell | Command::Evolve) {
        table_ok = p.stage("effham", Pipeline::effham);
    }
    if table_ok && (full || cmd == Command::Cell) {
        p.stage("cell", Pipeline::cell);
    }
    if table_ok && (full || cmd == Command::Evolve) {
        p.stage("evolve", Pipeline::evolve);
    }

    let record_path = match write_record(&out, &p.record) {
        Ok(path) => Some(path),
        Err(e) => {
            p.record.errors.push(format!("record: {e}"));
            None
        }
    };
    let rec = &p.record;
    if !cli.quiet {
        for c in &rec.checks {
            println!(
                "{} {:<32} measured {:<12.4e} tolerance {:.4e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.anchor,
                c.measured,
                c.tolerance
            );
        }
        if full {
            for a in rec.missing_anchors() {
                println!("MISSING {a}");
            }
        }
        for s in &rec.skipped {
            println!("SKIPPED {s} (not configured)");
        }
        for e in &rec.errors {
            eprintln!("error: {e}");
        }
        if let Some(path) = record_path {
            println!("record written to {}", path.display());
        }
    }
    if !rec.errors.is_empty() {
        EXIT_NUMERICAL
    } else if !rec.all_passed() {
        EXIT_CHECK_FAILED
    } else {
        EXIT_PASS
    }
}
