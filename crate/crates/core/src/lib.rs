//! Budget-constrained model routing.
//!
//! Given a pool of models with per-query performance and cost, a router picks
//! one model per query subject to a cost budget. This crate provides the
//! oracle rule, EquiRouter (a FiLM-conditioned pairwise ranking network) and
//! its ablations, kNN/MLP baselines, a shared cost predictor, and the
//! evaluation suite: budget sweeps, nAUC, peak score, QNC and the routing
//! collapse index.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod router;

pub use dataset::{load_table, save_table, ModelInfo, RoutingTable, SplitIndices, SynthConfig};
pub use error::{Error, ErrorKind, Result};
pub use eval::{MetricsSummary, SweepCurve};
pub use router::{CostSource, RouterDecision, RouterKind};
