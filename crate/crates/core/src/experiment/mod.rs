//! Config-driven experiment commands: generate a table, train a router,
//! sweep budgets, and run collapse diagnostics. Every command computes its
//! results in memory and only then writes files into the output directory.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{DiagnoseConfig, ExperimentConfig, RawConfig, TableSource, Thresholds};

use crate::dataset::{generate_synthetic, load_table, make_split, save_table, RoutingTable, SplitIndices};
use crate::error::{Error, Result};
use crate::eval::{
    callrates_csv, curve_csv, evaluate, noise_csv, noise_sensitivity, rci_detail_csv, training_set_eval, Evaluation,
    MetricsSummary,
};
use crate::nn::Checkpoint;
use crate::oracle::margin_stats;
use crate::router::{
    train_equirouter, train_mse_ablation, train_no_joint_ablation, CostPredictor, KnnRouter, MlpRouter, Router,
    RouterKind, TrainingLog,
};

pub const TABLE_DIR: &str = "table";
pub const SPLIT_FILE: &str = "split.json";
pub const SYNTH_SUMMARY: &str = "synth_summary.json";
pub const ROUTER_CKPT: &str = "router.ckpt";
pub const COST_CKPT: &str = "cost.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const COST_TRAIN_LOG: &str = "cost_train_log.csv";
pub const CURVE: &str = "curve.csv";
pub const METRICS: &str = "metrics.json";
pub const RCI_DETAIL: &str = "rci_detail.csv";
pub const MARGINS: &str = "margins.csv";
pub const NOISE: &str = "noise.csv";
pub const TRAINSET_METRICS: &str = "trainset_metrics.json";
pub const TRAINSET_CURVE: &str = "trainset_curve.csv";
pub const CALLRATES: &str = "callrates.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Sweep,
    Diagnose,
    Pipeline,
}

/// Result of a command: files written and, for sweeps, the metrics and any
/// failed threshold gates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub metrics: Option<MetricsSummary>,
    pub violations: Vec<String>,
}

impl Outcome {
    fn absorb(&mut self, other: Outcome) {
        self.written.extend(other.written);
        if other.metrics.is_some() {
            self.metrics = other.metrics;
        }
        self.violations.extend(other.violations);
    }
}

impl Thresholds {
    /// Human-readable description of every violated gate.
    pub fn check(&self, m: &MetricsSummary) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(t) = self.min_nauc.filter(|&t| m.nauc < t) {
            out.push(format!("nauc {} below {t}", m.nauc));
        }
        if let Some(t) = self.min_peak_score.filter(|&t| m.peak_score < t) {
            out.push(format!("peak_score {} below {t}", m.peak_score));
        }
        if let Some(t) = self.max_rci.filter(|&t| m.rci > t) {
            out.push(format!("rci {} above {t}", m.rci));
        }
        if let Some(t) = self.max_qnc_relative {
            match m.qnc_relative {
                Some(q) if q <= t => {}
                Some(q) => out.push(format!("qnc_relative {q} above {t}")),
                None => out.push(format!("qnc not reached (limit {t})")),
            }
        }
        out
    }
}

/// Pending file writes, flushed together once a command has succeeded.
#[derive(Default)]
struct Writes(Vec<(PathBuf, Vec<u8>)>);

impl Writes {
    fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.0.push((path, bytes.into()));
    }

    fn flush(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.0.len());
        for (path, bytes) in self.0 {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s.into_bytes()
}

fn check_out_dir(out: &Path) -> Result<()> {
    if out.exists() && !out.is_dir() {
        return Err(Error::Invalid(format!(
            "output path {} exists and is not a directory",
            out.display()
        )));
    }
    Ok(())
}

pub fn load_source(cfg: &ExperimentConfig) -> Result<RoutingTable> {
    match &cfg.source {
        TableSource::Dir(dir) => {
            if !dir.is_dir() {
                return Err(Error::Invalid(format!(
                    "table directory {} does not exist",
                    dir.display()
                )));
            }
            load_table(dir)
        }
        TableSource::Synth(s) => generate_synthetic(s),
    }
}

pub fn split_for(cfg: &ExperimentConfig, table: &RoutingTable) -> Result<SplitIndices> {
    make_split(table.n_queries(), cfg.split_ratio, cfg.split_seed)
}

/// Trains the configured router on `split`; kNN and the oracle have no log.
pub fn train_router(
    cfg: &ExperimentConfig,
    table: &RoutingTable,
    split: &SplitIndices,
) -> Result<(Router, Option<TrainingLog>)> {
    let hyper = &cfg.equirouter;
    let equi = |kind, (model, log)| {
        (
            Router::Equi {
                kind,
                model,
                hyper: hyper.clone(),
            },
            Some(log),
        )
    };
    Ok(match cfg.router {
        RouterKind::Oracle => (Router::Oracle, None),
        RouterKind::EquiRouter => equi(RouterKind::EquiRouter, train_equirouter(table, split, hyper)?),
        RouterKind::EquiRouterNoJoint => equi(
            RouterKind::EquiRouterNoJoint,
            train_no_joint_ablation(table, split, hyper)?,
        ),
        RouterKind::Mse => equi(RouterKind::Mse, train_mse_ablation(table, split, hyper)?),
        RouterKind::Knn => (Router::Knn(KnnRouter::fit(table, split, cfg.knn_k)?), None),
        RouterKind::Mlp => {
            let (m, log) = MlpRouter::train(table, split, &cfg.mlp)?;
            (Router::Mlp(m), Some(log))
        }
        RouterKind::Cost => return Err(Error::Invalid("cost is not a router kind".into())),
    })
}

fn cost_ckpt_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.checkpoint_path().with_file_name(COST_CKPT)
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    check_out_dir(&cfg.out)?;
    match cmd {
        Command::Synth => synth(cfg),
        Command::Train => train(cfg),
        Command::Sweep => sweep(cfg),
        Command::Diagnose => diagnose(cfg),
        Command::Pipeline => {
            if let TableSource::Dir(dir) = &cfg.source {
                if !dir.is_dir() {
                    return Err(Error::Invalid(format!(
                        "table directory {} does not exist",
                        dir.display()
                    )));
                }
            }
            let mut outcome = Outcome::default();
            if matches!(cfg.source, TableSource::Synth(_)) {
                outcome.absorb(synth(cfg)?);
            }
            outcome.absorb(train(cfg)?);
            outcome.absorb(sweep(cfg)?);
            outcome.absorb(diagnose(cfg)?);
            Ok(outcome)
        }
    }
}

#[derive(Serialize)]
struct SynthSummary {
    n_queries: usize,
    n_models: usize,
    tie_rate: f64,
    /// Highest over lowest per-model mean cost.
    cost_ratio: f64,
}

fn synth(cfg: &ExperimentConfig) -> Result<Outcome> {
    let TableSource::Synth(_) = &cfg.source else {
        return Err(Error::Invalid(
            "synth needs a synthetic source, not a table directory".into(),
        ));
    };
    let table = load_source(cfg)?;
    let split = split_for(cfg, &table)?;
    let tie_rate = margin_stats(&table, f64::INFINITY, &[0.0])?.tie_rate;
    let n = table.n_queries() as f64;
    let means: Vec<f64> = (0..table.n_models())
        .map(|j| (0..table.n_queries()).map(|q| table.cost().get(q, j)).sum::<f64>() / n)
        .collect();
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let summary = SynthSummary {
        n_queries: table.n_queries(),
        n_models: table.n_models(),
        tie_rate,
        cost_ratio: hi / lo,
    };

    let table_dir = cfg.out.join(TABLE_DIR);
    save_table(&table, &table_dir)?;
    let mut w = Writes::default();
    w.add(cfg.out.join(SPLIT_FILE), json(&split));
    w.add(cfg.out.join(SYNTH_SUMMARY), json(&summary));
    let mut written = vec![table_dir];
    written.extend(w.flush()?);
    Ok(Outcome {
        written,
        ..Default::default()
    })
}

fn train(cfg: &ExperimentConfig) -> Result<Outcome> {
    let table = load_source(cfg)?;
    let split = split_for(cfg, &table)?;
    let (router, log) = train_router(cfg, &table, &split)?;
    let mut w = Writes::default();
    w.add(cfg.out.join(SPLIT_FILE), json(&split));
    w.add(cfg.checkpoint_path(), router.to_checkpoint()?.to_bytes());
    if let Some(log) = log {
        w.add(cfg.out.join(TRAIN_LOG), log.to_csv());
    }
    if cfg.needs_cost_predictor() {
        let (cp, log) = CostPredictor::train(&table, &split, &cfg.cost)?;
        w.add(cost_ckpt_path(cfg), cp.to_checkpoint()?.to_bytes());
        w.add(cfg.out.join(COST_TRAIN_LOG), log.to_csv());
    }
    Ok(Outcome {
        written: w.flush()?,
        ..Default::default()
    })
}

fn load_router(cfg: &ExperimentConfig, table: &RoutingTable) -> Result<(Router, Option<CostPredictor>)> {
    let router = if cfg.router == RouterKind::Oracle {
        Router::Oracle
    } else {
        let path = cfg.checkpoint_path();
        if !path.is_file() {
            return Err(Error::Invalid(format!(
                "router checkpoint {} not found; run train first",
                path.display()
            )));
        }
        let router = Router::from_checkpoint(&Checkpoint::load(&path)?, table)?;
        if router.kind() != cfg.router {
            return Err(Error::Invalid(format!(
                "checkpoint {} holds a {} router but router = {}",
                path.display(),
                router.kind(),
                cfg.router
            )));
        }
        router
    };
    let predictor = if cfg.needs_cost_predictor() {
        let path = cost_ckpt_path(cfg);
        if !path.is_file() {
            return Err(Error::Invalid(format!(
                "cost checkpoint {} not found; run train first",
                path.display()
            )));
        }
        Some(CostPredictor::from_checkpoint(&Checkpoint::load(&path)?)?)
    } else {
        None
    };
    Ok((router, predictor))
}

fn sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let table = load_source(cfg)?;
    let split = split_for(cfg, &table)?;
    let (router, predictor) = load_router(cfg, &table)?;
    let Evaluation {
        curve,
        collapse,
        metrics,
        ..
    } = evaluate(
        &router,
        predictor.as_ref(),
        &table,
        &split.test,
        cfg.grid_points,
        cfg.cost_source,
    )?;
    let mut w = Writes::default();
    w.add(cfg.out.join(CURVE), curve_csv(&curve));
    w.add(cfg.out.join(METRICS), metrics.to_json());
    w.add(cfg.out.join(RCI_DETAIL), rci_detail_csv(&collapse));
    let violations = cfg.thresholds.check(&metrics);
    Ok(Outcome {
        written: w.flush()?,
        metrics: Some(metrics),
        violations,
    })
}

fn diagnose(cfg: &ExperimentConfig) -> Result<Outcome> {
    let table = load_source(cfg)?;
    let d = &cfg.diagnose;
    let margins = margin_stats(&table, d.budget, &d.thresholds)?;
    let all: Vec<usize> = (0..table.n_queries()).collect();
    let noise = noise_sensitivity(&table, &all, &d.sigmas, d.budget, d.noise_seed)?;
    let trainset = training_set_eval(
        &table,
        |t, s| {
            let (router, _) = train_router(cfg, t, s)?;
            let predictor = if cfg.needs_cost_predictor() {
                Some(CostPredictor::train(t, s, &cfg.cost)?.0)
            } else {
                None
            };
            Ok((router, predictor))
        },
        cfg.grid_points,
        cfg.cost_source,
    )?;

    let mut margins_csv = String::from("threshold,cdf\n");
    for (e, p) in &margins.cdf_at {
        let _ = writeln!(margins_csv, "{e},{p}");
    }
    let mut w = Writes::default();
    w.add(cfg.out.join(MARGINS), margins_csv);
    w.add(cfg.out.join(NOISE), noise_csv(&noise));
    w.add(cfg.out.join(TRAINSET_METRICS), trainset.metrics.to_json());
    w.add(cfg.out.join(TRAINSET_CURVE), curve_csv(&trainset.curve));
    w.add(cfg.out.join(CALLRATES), callrates_csv(&trainset.curve));
    Ok(Outcome {
        written: w.flush()?,
        ..Default::default()
    })
}
