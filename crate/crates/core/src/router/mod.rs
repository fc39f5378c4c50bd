//! Routers and the shared decision rule.
//!
//! Every router produces a score vector over the model pool; [`route`]
//! filters models by (predicted or true) cost against the budget and picks
//! the highest score, breaking ties by lower cost and then lower index.

mod equirouter;
mod knn;
mod mlp;
mod pairs;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use equirouter::{
    film_modulate, joint_feature, objective_and_grad, objective_value, score_all, train_equirouter, train_mse_ablation,
    train_no_joint_ablation, EquiRouter, EquiRouterHyper, EquiRouterParams, HeadInput, ScoreObjective, ScoringCost,
};
pub use knn::{KnnRouter, DEFAULT_K};
pub use mlp::{CostPredictor, Mlp, MlpHyper, MlpRouter};
pub use pairs::{build_pairs, ranking_loss};
pub use train::{EpochLog, LrSchedule, TrainHyper, TrainingLog};

use crate::dataset::RoutingTable;
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::oracle::{feasible_members, select_lexicographic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterKind {
    Oracle,
    #[serde(rename = "equirouter")]
    EquiRouter,
    #[serde(rename = "equirouter_nojoint")]
    EquiRouterNoJoint,
    Mse,
    Knn,
    Mlp,
    Cost,
}

impl RouterKind {
    /// Checkpoint tag.
    pub fn tag(self) -> &'static str {
        match self {
            RouterKind::Oracle => "oracle",
            RouterKind::EquiRouter => "equirouter",
            RouterKind::EquiRouterNoJoint => "equirouter_nojoint",
            RouterKind::Mse => "mse",
            RouterKind::Knn => "knn",
            RouterKind::Mlp => "mlp",
            RouterKind::Cost => "cost",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "oracle" => RouterKind::Oracle,
            "equirouter" => RouterKind::EquiRouter,
            "equirouter_nojoint" | "equirouter-nojoint" => RouterKind::EquiRouterNoJoint,
            "mse" => RouterKind::Mse,
            "knn" => RouterKind::Knn,
            "mlp" => RouterKind::Mlp,
            "cost" => RouterKind::Cost,
            other => return Err(Error::Invalid(format!("unknown router kind '{other}'"))),
        })
    }
}

impl fmt::Display for RouterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RouterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_tag(s)
    }
}

/// Which costs the feasibility filter sees. Realized costs are always true costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSource {
    Predicted,
    Oracle,
}

impl FromStr for CostSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predicted" => Ok(CostSource::Predicted),
            "oracle" => Ok(CostSource::Oracle),
            other => Err(Error::Invalid(format!("unknown cost source '{other}'"))),
        }
    }
}

impl fmt::Display for CostSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostSource::Predicted => "predicted",
            CostSource::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterDecision {
    pub query_index: usize,
    pub budget: f64,
    pub chosen: usize,
    pub scores: Vec<f64>,
    pub predicted_costs: Vec<f64>,
    pub feasible_clamped: bool,
}

/// A trained router of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Router {
    /// Scores are the true performance labels.
    Oracle,
    Equi {
        kind: RouterKind,
        model: EquiRouter,
        hyper: EquiRouterHyper,
    },
    Knn(KnnRouter),
    Mlp(MlpRouter),
}

impl Router {
    pub fn kind(&self) -> RouterKind {
        match self {
            Router::Oracle => RouterKind::Oracle,
            Router::Equi { kind, .. } => *kind,
            Router::Knn(_) => RouterKind::Knn,
            Router::Mlp(_) => RouterKind::Mlp,
        }
    }

    /// Score vector for query `n` of `table`.
    pub fn scores(&self, table: &RoutingTable, n: usize) -> Result<Vec<f64>> {
        match self {
            Router::Oracle => Ok(table.perf_row(n).to_vec()),
            Router::Equi { model, .. } => model.score(table.embedding(n)),
            Router::Knn(k) => k.predict(table.embedding(n)),
            Router::Mlp(m) => m.predict(table.embedding(n)),
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        match self {
            Router::Oracle => Checkpoint::new("oracle", serde_json::Value::Null, Vec::new(), Vec::new()),
            Router::Equi { kind, model, hyper } => model.to_checkpoint(kind.tag(), hyper),
            Router::Knn(k) => k.to_checkpoint(),
            Router::Mlp(m) => m.to_checkpoint(),
        }
    }

    /// Restores a router; kNN checkpoints need the table they index.
    pub fn from_checkpoint(ckpt: &Checkpoint, table: &RoutingTable) -> Result<Self> {
        let router = match RouterKind::from_tag(&ckpt.kind)? {
            RouterKind::Oracle => Router::Oracle,
            kind @ (RouterKind::EquiRouter | RouterKind::EquiRouterNoJoint | RouterKind::Mse) => {
                let (model, hyper) = EquiRouter::from_checkpoint(ckpt)?;
                Router::Equi { kind, model, hyper }
            }
            RouterKind::Knn => Router::Knn(KnnRouter::from_checkpoint(ckpt, table)?),
            RouterKind::Mlp => Router::Mlp(MlpRouter::from_checkpoint(ckpt)?),
            RouterKind::Cost => {
                return Err(Error::Invalid("a cost checkpoint is not a router".into()));
            }
        };
        router.check_compatible(table)?;
        Ok(router)
    }

    pub fn check_compatible(&self, table: &RoutingTable) -> Result<()> {
        let (k, d) = match self {
            Router::Oracle => return Ok(()),
            Router::Equi { model, .. } => (model.params().n_models(), model.params().embed_dim()),
            Router::Knn(knn) => (
                table.n_models(),
                knn.predict(table.embedding(0)).map(|_| table.embed_dim())?,
            ),
            Router::Mlp(m) => (m.net.output.out_dim(), m.net.hidden.in_dim()),
        };
        if k != table.n_models() || d != table.embed_dim() {
            return Err(Error::Shape(format!(
                "router expects K={k}, d_q={d}; table has K={}, d_q={}",
                table.n_models(),
                table.embed_dim()
            )));
        }
        Ok(())
    }
}

/// Costs used for feasibility filtering of query `n`.
pub fn filter_costs(
    table: &RoutingTable,
    n: usize,
    source: CostSource,
    predictor: Option<&CostPredictor>,
) -> Result<Vec<f64>> {
    match source {
        CostSource::Oracle => Ok(table.cost_row(n).to_vec()),
        CostSource::Predicted => predictor
            .ok_or_else(|| Error::Invalid("cost_source=predicted requires a trained cost predictor".into()))?
            .predict(table.embedding(n)),
    }
}

/// Budget decision from precomputed scores and filtering costs:
/// `(chosen, clamped)`.
pub fn decide(scores: &[f64], costs: &[f64], budget: f64) -> (usize, bool) {
    let (members, clamped) = feasible_members(costs, budget);
    (select_lexicographic(scores, costs, &members), clamped)
}

pub fn route(
    router: &Router,
    predictor: Option<&CostPredictor>,
    table: &RoutingTable,
    n: usize,
    budget: f64,
    source: CostSource,
) -> Result<RouterDecision> {
    let scores = router.scores(table, n)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score for query {n}")));
    }
    let costs = filter_costs(table, n, source, predictor)?;
    let (chosen, clamped) = decide(&scores, &costs, budget);
    Ok(RouterDecision {
        query_index: n,
        budget,
        chosen,
        scores,
        predicted_costs: costs,
        feasible_clamped: clamped,
    })
}
