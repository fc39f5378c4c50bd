use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use equiroute::experiment::{self, Command, ExperimentConfig, Outcome, RawConfig};
use equiroute::ErrorKind;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

/// Budget-constrained LLM routing experiments.
#[derive(Debug, Parser)]
#[command(name = "equiroute", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Flat key = value config file; flags below override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory holding models.json, queries.jsonl, perf.csv and cost.csv.
    #[arg(long, global = true)]
    table: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    router: Option<RouterArg>,

    #[arg(long = "cost-source", global = true, value_enum)]
    cost_source: Option<CostSourceArg>,

    /// Number of budgets in the sweep grid [default: 100].
    #[arg(long = "grid-points", global = true)]
    grid_points: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Router checkpoint written by `train` and read by `sweep`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a synthetic routing table and split.
    Synth,
    /// Train the configured router (and the cost predictor if needed).
    Train,
    /// Sweep budgets on the test split and write curve and metrics.
    Sweep,
    /// Margin statistics, oracle-noise curves and training-set evaluation.
    Diagnose,
    /// synth (for synthetic sources), train, sweep and diagnose in one go.
    Pipeline,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RouterArg {
    Oracle,
    Equirouter,
    EquirouterNojoint,
    Mse,
    Knn,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CostSourceArg {
    Predicted,
    Oracle,
}

fn config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut raw = match &cli.config {
        Some(path) => {
            if !path.is_file() {
                bail!("config file {} not found", path.display());
            }
            RawConfig::load(path)?
        }
        None => RawConfig::default(),
    };
    let path = |p: &PathBuf| p.to_string_lossy().into_owned();
    if let Some(t) = &cli.table {
        raw.set("table", &path(t));
    }
    if let Some(r) = cli.router {
        let v = r.to_possible_value().expect("router value");
        raw.set("router", v.get_name());
    }
    if let Some(c) = cli.cost_source {
        let v = c.to_possible_value().expect("cost source value");
        raw.set("cost_source", v.get_name());
    }
    if let Some(g) = cli.grid_points {
        raw.set("grid_points", &g.to_string());
    }
    if let Some(s) = cli.seed {
        raw.set("seed", &s.to_string());
    }
    if let Some(o) = &cli.out {
        raw.set("out", &path(o));
    }
    if let Some(c) = &cli.checkpoint {
        raw.set("checkpoint", &path(c));
    }
    Ok(ExperimentConfig::from_raw(&raw)?)
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let cfg = config(cli)?;
    let cmd = match cli.command {
        Cmd::Synth => Command::Synth,
        Cmd::Train => Command::Train,
        Cmd::Sweep => Command::Sweep,
        Cmd::Diagnose => Command::Diagnose,
        Cmd::Pipeline => Command::Pipeline,
    };
    experiment::run(cmd, &cfg).with_context(|| format!("{:?} failed", cli.command).to_lowercase())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<equiroute::Error>().map(equiroute::Error::kind) {
        Some(ErrorKind::Runtime) => EXIT_RUNTIME,
        Some(ErrorKind::Validation) | None => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            if let Some(m) = &outcome.metrics {
                let show = |v: Option<f64>| v.map_or_else(|| "/".to_string(), |x| format!("{x:.4}"));
                println!(
                    "nauc {:.4}  peak {:.4} @ {:.3e}  qnc {}  qnc_rel {}  rci {:.4}",
                    m.nauc,
                    m.peak_score,
                    m.peak_cost,
                    show(m.qnc),
                    show(m.qnc_relative),
                    m.rci
                );
            }
            if outcome.violations.is_empty() {
                ExitCode::SUCCESS
            } else {
                for v in &outcome.violations {
                    eprintln!("threshold failed: {v}");
                }
                ExitCode::from(EXIT_THRESHOLD)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
