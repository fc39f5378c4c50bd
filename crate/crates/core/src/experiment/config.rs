//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Recognized keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `table` | – | directory of a saved routing table |
//! | `synth.n_queries`, `synth.n_models`, `synth.embed_dim`, `synth.tie_fraction`, `synth.margin_scale`, `synth.cost_spread`, `synth.embed_noise`, `synth.unsolvable_fraction` | generator defaults | synthetic table parameters |
//! | `synth.seed` | `seed` | generator seed |
//! | `split` | `3:1:6` | train:valid:test ratio |
//! | `split.seed` | `seed` | shuffle seed for the split |
//! | `seed` | `42` | training seed |
//! | `router` | `equirouter` | `oracle`, `equirouter`, `equirouter-nojoint`, `mse`, `knn`, `mlp` |
//! | `cost_source` | `predicted` | `predicted` or `oracle` |
//! | `grid_points` | `100` | budget grid size |
//! | `out` | `out` | output directory |
//! | `checkpoint` | `<out>/router.ckpt` | router checkpoint read by `sweep` |
//! | `equirouter.hidden`, `equirouter.model_dim` | `128`, `64` | EquiRouter widths |
//! | `train.epochs`, `train.batch_size`, `train.learning_rate`, `train.weight_decay`, `train.lr_schedule` | `30`, `2048`, `0.001`, `0.0001`, `constant` | router optimizer |
//! | `knn.k` | `50` | neighbours |
//! | `mlp.hidden` | `128` | MLP baseline width |
//! | `cost.hidden`, `cost.epochs`, `cost.batch_size`, `cost.learning_rate`, `cost.weight_decay`, `cost.lr_schedule` | `128`, `30`, `2048`, `0.001`, `0`, `constant` | cost predictor |
//! | `diagnose.sigmas` | `0,0.05,0.1,0.2,0.4` | oracle noise levels |
//! | `diagnose.thresholds` | `0,0.001,0.01,0.05,0.1` | margin CDF thresholds |
//! | `diagnose.budget` | `inf` | budget for margin and noise diagnostics |
//! | `diagnose.noise_seed` | `seed` | noise field seed |
//! | `threshold.min_nauc`, `threshold.min_peak_score`, `threshold.max_rci`, `threshold.max_qnc_relative` | unset | pass/fail gates checked by `sweep` |
//!
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::SynthConfig;
use crate::error::{Error, Result};
use crate::router::{CostSource, EquiRouterHyper, LrSchedule, MlpHyper, RouterKind, TrainHyper, DEFAULT_K};

#[derive(Debug, Clone, PartialEq)]
pub enum TableSource {
    Dir(PathBuf),
    Synth(SynthConfig),
}

/// Pass/fail gates on sweep metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Thresholds {
    pub min_nauc: Option<f64>,
    pub min_peak_score: Option<f64>,
    pub max_rci: Option<f64>,
    /// An unreached QNC always fails this gate.
    pub max_qnc_relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseConfig {
    pub sigmas: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub budget: f64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: TableSource,
    pub split_ratio: [f64; 3],
    pub split_seed: u64,
    pub seed: u64,
    pub router: RouterKind,
    pub cost_source: CostSource,
    pub grid_points: usize,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub equirouter: EquiRouterHyper,
    pub knn_k: usize,
    pub mlp: MlpHyper,
    pub cost: MlpHyper,
    pub diagnose: DiagnoseConfig,
    pub thresholds: Thresholds,
}

/// Raw key/value pairs; a later assignment to the same key wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut raw = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(origin, format!("line {}: expected key = value", i + 1)));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::parse(origin, format!("line {}: empty key", i + 1)));
            }
            raw.set(key, v.trim());
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Sets or overrides one key.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "table",
    "synth.n_queries",
    "synth.n_models",
    "synth.embed_dim",
    "synth.tie_fraction",
    "synth.margin_scale",
    "synth.cost_spread",
    "synth.embed_noise",
    "synth.unsolvable_fraction",
    "synth.seed",
    "split",
    "split.seed",
    "seed",
    "router",
    "cost_source",
    "grid_points",
    "out",
    "checkpoint",
    "equirouter.hidden",
    "equirouter.model_dim",
    "train.epochs",
    "train.batch_size",
    "train.learning_rate",
    "train.weight_decay",
    "train.lr_schedule",
    "knn.k",
    "mlp.hidden",
    "cost.hidden",
    "cost.epochs",
    "cost.batch_size",
    "cost.learning_rate",
    "cost.weight_decay",
    "cost.lr_schedule",
    "diagnose.sigmas",
    "diagnose.thresholds",
    "diagnose.budget",
    "diagnose.noise_seed",
    "threshold.min_nauc",
    "threshold.min_peak_score",
    "threshold.max_rci",
    "threshold.max_qnc_relative",
];

fn value<T: FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    raw.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| Error::Invalid(format!("{key} = '{v}': {e}")))
        })
        .transpose()
}

fn list(raw: &RawConfig, key: &str) -> Result<Option<Vec<f64>>> {
    raw.get(key)
        .map(|v| {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Invalid(format!("{key}: '{x}': {e}")))
                })
                .collect()
        })
        .transpose()
}

fn schedule(raw: &RawConfig, key: &str) -> Result<Option<LrSchedule>> {
    raw.get(key)
        .map(|v| match v {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::Cosine),
            other => Err(Error::Invalid(format!("{key}: unknown schedule '{other}'"))),
        })
        .transpose()
}

fn parse_ratio(v: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = v.split(':').collect();
    let bad = || Error::Invalid(format!("split = '{v}': expected three positive numbers like 3:1:6"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut r = [0.0; 3];
    for (slot, p) in r.iter_mut().zip(parts) {
        let v: f64 = p.trim().parse().map_err(|_| bad())?;
        *slot = v;
        if !(v.is_finite() && v > 0.0) {
            return Err(bad());
        }
    }
    Ok(r)
}

fn train_hyper(raw: &RawConfig, prefix: &str, seed: u64, base: TrainHyper) -> Result<TrainHyper> {
    let key = |k: &str| format!("{prefix}.{k}");
    let h = TrainHyper {
        epochs: value(raw, &key("epochs"))?.unwrap_or(base.epochs),
        batch_size: value(raw, &key("batch_size"))?.unwrap_or(base.batch_size),
        learning_rate: value(raw, &key("learning_rate"))?.unwrap_or(base.learning_rate),
        weight_decay: value(raw, &key("weight_decay"))?.unwrap_or(base.weight_decay),
        seed,
        lr_schedule: schedule(raw, &key("lr_schedule"))?.unwrap_or(base.lr_schedule),
    };
    h.validate()?;
    Ok(h)
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        if let Some(k) = raw.entries.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::Invalid(format!("unknown config key '{k}'")));
        }
        let seed: u64 = value(raw, "seed")?.unwrap_or(42);
        let has_synth = raw.entries.keys().any(|k| k.starts_with("synth."));
        let source = match (raw.get("table"), has_synth) {
            (Some(_), true) => {
                return Err(Error::Invalid("set either table or synth.* keys, not both".into()));
            }
            (Some(dir), false) => TableSource::Dir(PathBuf::from(dir)),
            (None, _) => {
                let d = SynthConfig::default();
                let cfg = SynthConfig {
                    n_queries: value(raw, "synth.n_queries")?.unwrap_or(d.n_queries),
                    n_models: value(raw, "synth.n_models")?.unwrap_or(d.n_models),
                    embed_dim: value(raw, "synth.embed_dim")?.unwrap_or(d.embed_dim),
                    tie_fraction: value(raw, "synth.tie_fraction")?.unwrap_or(d.tie_fraction),
                    margin_scale: value(raw, "synth.margin_scale")?.unwrap_or(d.margin_scale),
                    cost_spread: value(raw, "synth.cost_spread")?.unwrap_or(d.cost_spread),
                    noise_seed: value(raw, "synth.seed")?.unwrap_or(seed),
                    embed_noise: value(raw, "synth.embed_noise")?.unwrap_or(d.embed_noise),
                    unsolvable_fraction: value(raw, "synth.unsolvable_fraction")?.unwrap_or(d.unsolvable_fraction),
                };
                cfg.validate()?;
                TableSource::Synth(cfg)
            }
        };

        let router = match raw.get("router") {
            Some(v) => {
                let kind = RouterKind::from_tag(v)?;
                if kind == RouterKind::Cost {
                    return Err(Error::Invalid("router = cost is not a router".into()));
                }
                kind
            }
            None => RouterKind::EquiRouter,
        };
        let grid_points: usize = value(raw, "grid_points")?.unwrap_or(100);
        if grid_points < 2 {
            return Err(Error::Invalid(format!(
                "grid_points must be at least 2, got {grid_points}"
            )));
        }

        let train = train_hyper(raw, "train", seed, TrainHyper::default())?;
        let mut equirouter = EquiRouterHyper {
            hidden: value(raw, "equirouter.hidden")?.unwrap_or(128),
            model_dim: value(raw, "equirouter.model_dim")?.unwrap_or(64),
            train: train.clone(),
            ..Default::default()
        };
        if equirouter.hidden == 0 || equirouter.model_dim == 0 {
            return Err(Error::Invalid("equirouter widths must be positive".into()));
        }
        match router {
            RouterKind::EquiRouterNoJoint => equirouter.head_input = crate::router::HeadInput::Concat,
            RouterKind::Mse => equirouter.objective = crate::router::ScoreObjective::Mse,
            _ => {}
        }
        let mlp = MlpHyper {
            hidden: value(raw, "mlp.hidden")?.unwrap_or(128),
            train,
        };
        let cost_base = TrainHyper {
            weight_decay: 0.0,
            ..TrainHyper::default()
        };
        let cost = MlpHyper {
            hidden: value(raw, "cost.hidden")?.unwrap_or(128),
            train: train_hyper(raw, "cost", seed, cost_base)?,
        };
        if mlp.hidden == 0 || cost.hidden == 0 {
            return Err(Error::Invalid("mlp.hidden and cost.hidden must be positive".into()));
        }
        let knn_k = value(raw, "knn.k")?.unwrap_or(DEFAULT_K);
        if knn_k == 0 {
            return Err(Error::Invalid("knn.k must be positive".into()));
        }

        let diagnose = DiagnoseConfig {
            sigmas: list(raw, "diagnose.sigmas")?.unwrap_or_else(|| vec![0.0, 0.05, 0.1, 0.2, 0.4]),
            thresholds: list(raw, "diagnose.thresholds")?.unwrap_or_else(|| vec![0.0, 0.001, 0.01, 0.05, 0.1]),
            budget: value(raw, "diagnose.budget")?.unwrap_or(f64::INFINITY),
            noise_seed: value(raw, "diagnose.noise_seed")?.unwrap_or(seed),
        };
        if diagnose.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Invalid("diagnose.sigmas must be finite and nonnegative".into()));
        }
        if diagnose.thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("diagnose.thresholds must be ascending".into()));
        }
        if diagnose.budget.is_nan() || diagnose.budget <= 0.0 {
            return Err(Error::Invalid("diagnose.budget must be positive".into()));
        }

        let thresholds = Thresholds {
            min_nauc: value(raw, "threshold.min_nauc")?,
            min_peak_score: value(raw, "threshold.min_peak_score")?,
            max_rci: value(raw, "threshold.max_rci")?,
            max_qnc_relative: value(raw, "threshold.max_qnc_relative")?,
        };

        Ok(Self {
            source,
            split_ratio: raw
                .get("split")
                .map(parse_ratio)
                .transpose()?
                .unwrap_or([3.0, 1.0, 6.0]),
            split_seed: value(raw, "split.seed")?.unwrap_or(seed),
            seed,
            router,
            cost_source: value(raw, "cost_source")?.unwrap_or(CostSource::Predicted),
            grid_points,
            out: PathBuf::from(raw.get("out").unwrap_or("out")),
            checkpoint: raw.get("checkpoint").map(PathBuf::from),
            equirouter,
            knn_k,
            mlp,
            cost,
            diagnose,
            thresholds,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(&RawConfig::parse(text, Path::new("<config>"))?)
    }

    /// Whether the configured run needs the learned cost predictor.
    pub fn needs_cost_predictor(&self) -> bool {
        self.cost_source == CostSource::Predicted && self.router != RouterKind::Oracle
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join(super::ROUTER_CKPT))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.source, TableSource::Synth(SynthConfig::default()));
        assert_eq!(c.split_ratio, [3.0, 1.0, 6.0]);
        assert_eq!((c.seed, c.split_seed, c.grid_points), (42, 42, 100));
        assert_eq!(c.router, RouterKind::EquiRouter);
        assert_eq!(c.cost_source, CostSource::Predicted);
        assert_eq!(c.equirouter.train.epochs, 30);
        assert_eq!(c.equirouter.train.batch_size, 2048);
        assert_eq!(c.knn_k, 50);
        assert_eq!(c.checkpoint_path(), PathBuf::from("out/router.ckpt"));
    }

    #[test]
    fn parses_keys_and_comments() {
        let c = ExperimentConfig::parse(
            "# demo\nseed = 7\nsynth.n_queries = 300\nsynth.tie_fraction=0.9\nrouter = equirouter-nojoint\n\
             split = 2:1:1\ntrain.lr_schedule = cosine\ncost_source = oracle\ndiagnose.sigmas = 0, 0.1\n\
             threshold.max_rci = 0.2\n",
        )
        .unwrap();
        let TableSource::Synth(s) = &c.source else { panic!() };
        assert_eq!((s.n_queries, s.tie_fraction, s.noise_seed), (300, 0.9, 7));
        assert_eq!(c.router, RouterKind::EquiRouterNoJoint);
        assert_eq!(c.equirouter.head_input, crate::router::HeadInput::Concat);
        assert_eq!(c.equirouter.train.lr_schedule, LrSchedule::Cosine);
        assert_eq!(c.equirouter.train.seed, 7);
        assert_eq!(c.split_ratio, [2.0, 1.0, 1.0]);
        assert_eq!(c.diagnose.sigmas, vec![0.0, 0.1]);
        assert_eq!(c.thresholds.max_rci, Some(0.2));
        assert!(!c.needs_cost_predictor());
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "table = x\nsynth.n_queries = 5",
            "bogus = 1",
            "router = graph",
            "router = cost",
            "split = 3:1",
            "split = 3:0:6",
            "grid_points = 1",
            "train.epochs = 0",
            "cost_source = maybe",
            "seed = -1",
            "no equals sign",
            "diagnose.thresholds = 0.1, 0.0",
            "synth.tie_fraction = 1.5",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn later_assignment_wins() {
        let mut raw = RawConfig::parse("router = knn\nrouter = mlp\n", Path::new("c")).unwrap();
        assert_eq!(ExperimentConfig::from_raw(&raw).unwrap().router, RouterKind::Mlp);
        raw.set("router", "oracle");
        assert_eq!(ExperimentConfig::from_raw(&raw).unwrap().router, RouterKind::Oracle);
    }
}
