//! Ensembles of trees: averaging forests and gradient-boosted sequences.

mod boost;
mod forest;

pub use boost::{fit_boost, BoostConfig, BoostModel, BoostStage};
pub use forest::{bootstrap_multiplicities, fit_forest, ForestConfig, ForestModel, PrefixSummary, StructureKind};
