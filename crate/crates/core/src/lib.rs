//! Tree ensembles viewed as smoothers.
//!
//! Every averaging model in this crate (trees, forests, and gradient-boosted
//! ensembles) can report the weight vector it implicitly places on the
//! training labels for any query point. On top of those weights the crate
//! computes effective parameters, effective nearest neighbours,
//! covariance-based degrees of freedom and several bias/variance
//! decompositions, and ships an experiment harness that regenerates the
//! underlying tables at desk scale.

pub mod datagen;
pub mod decomp;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod stats;
pub mod tree;
pub mod weights;

pub use datagen::{Dataset, NoiseSpec, OffsetSpec, Task};
pub use ensemble::{BoostConfig, BoostModel, ForestConfig, ForestModel};
pub use error::{Error, Result};
pub use tree::{TreeConfig, TreeModel};
pub use weights::{Smoother, SmootherWeights, WeightMatrix};
