use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use conewalk::cone::Cone;
use conewalk::counting::PathCountTable;
use conewalk::experiment::{self, Config};
use conewalk::walk::parse_multiset;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Run cone random-walk experiments from a config file, or count paths.
#[derive(Debug, Parser)]
#[command(name = "conewalk", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Option<Cmd>,
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Report destination; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Exact counts of n-step paths from X to Y that stay in the cone,
    /// printed as `n count` for every n up to N.
    Count {
        /// Step multiset, one step per line; repeats count as multiplicity.
        #[arg(long)]
        steps: PathBuf,
        /// Cone, e.g. `halfline`, `orthant:d=2`, `wedge:alpha=3*pi/4`, `weylA:d=3`.
        #[arg(long)]
        cone: String,
        /// Start point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        from: Vec<i64>,
        /// End point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        to: Vec<i64>,
        #[arg(long)]
        n: usize,
    },
}

fn count(steps: &PathBuf, cone: &str, from: &[i64], to: &[i64], n: usize) -> Result<()> {
    let cone = Cone::parse(cone)?;
    let text = std::fs::read_to_string(steps).with_context(|| format!("reading {}", steps.display()))?;
    let ms = parse_multiset(&text, cone.dim())?;
    let table = PathCountTable::build(&ms, &cone, from, to, n)?;
    print!("{}", table.to_lines());
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let Some(path) = &cli.config else {
        bail!("either --config FILE or the `count` subcommand is required");
    };
    let mut config = Config::from_file(path)?;
    if let Some(s) = cli.seed {
        config.seed = Some(s);
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    config.validate()?;
    let report = experiment::run(&config)?;
    let text = match cli.format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv(),
    };
    let out = cli.out.clone().or_else(|| config.output.as_ref().map(PathBuf::from));
    match out {
        Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    for e in &report.experiments {
        let status = if e.passed { "pass" } else { "FAIL" };
        eprintln!("{status} {} ({}){}", e.label, e.kind, e.error.as_ref().map(|m| format!(": {m}")).unwrap_or_default());
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Some(Cmd::Count { steps, cone, from, to, n }) => count(steps, cone, from, to, *n).map(|_| true),
        None => run(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
