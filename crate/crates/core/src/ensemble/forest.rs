use rand::Rng as _;
use rayon::prelude::*;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_path, rng_from_seed};
use crate::tree::{fit_totally_randomized_weighted, fit_tree, TreeConfig, TreeModel};
use crate::weights::{Smoother, SmootherWeights};

/// How member tree structures are grown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StructureKind {
    /// Splits chosen on the observed outcomes.
    #[default]
    Adaptive,
    /// Splits chosen on a seeded permutation of the outcomes; leaves filled
    /// from the observed outcomes.
    TotallyRandomized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    /// Number of trees `B`.
    pub trees: usize,
    pub bootstrap: bool,
    pub tree: TreeConfig,
    pub structure: StructureKind,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(trees: usize, tree: TreeConfig) -> Self {
        ForestConfig {
            trees,
            bootstrap: false,
            tree,
            structure: StructureKind::Adaptive,
            seed: 0,
        }
    }

    pub fn with_bootstrap(mut self, bootstrap: bool) -> Self {
        self.bootstrap = bootstrap;
        self
    }

    pub fn with_structure(mut self, structure: StructureKind) -> Self {
        self.structure = structure;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        self.tree.validate()
    }

    /// Tree config of member `b`; its seed depends only on the forest seed
    /// and `b`.
    pub fn member_config(&self, b: usize) -> TreeConfig {
        self.tree.clone().with_seed(derive_path(self.seed, &[b as u64, 0]))
    }
}

/// Counts from drawing `n` rows uniformly with replacement.
pub fn bootstrap_multiplicities(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1.0;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixSummary {
    pub prediction: f64,
    pub squared_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    member_weights: Vec<f64>,
    outcomes: Vec<f64>,
    config: ForestConfig,
}

/// Fit `B` trees independently (in parallel); member `b` uses only seeds
/// derived from `(config.seed, b)`.
pub fn fit_forest(data: &Dataset, config: &ForestConfig) -> Result<ForestModel> {
    config.validate()?;
    let n = data.sample_count();
    let trees = (0..config.trees)
        .into_par_iter()
        .map(|b| {
            let tree_config = config.member_config(b);
            let mult = config
                .bootstrap
                .then(|| bootstrap_multiplicities(n, derive_path(config.seed, &[b as u64, 1])));
            match config.structure {
                StructureKind::Adaptive => fit_tree(data, &tree_config, mult.as_deref()),
                StructureKind::TotallyRandomized => fit_totally_randomized_weighted(data, &tree_config, mult.as_deref()),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel::from_trees(trees, data.outcomes().to_vec(), config.clone()))
}

impl ForestModel {
    fn from_trees(trees: Vec<TreeModel>, outcomes: Vec<f64>, config: ForestConfig) -> Self {
        let b = trees.len();
        ForestModel {
            trees,
            member_weights: vec![1.0 / b as f64; b],
            outcomes,
            config,
        }
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    /// Ensemble weights `w_b = 1/B`.
    pub fn member_weights(&self) -> &[f64] {
        &self.member_weights
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    /// The forest made of the first `b` members.
    pub fn prefix(&self, b: usize) -> ForestModel {
        assert!(b >= 1 && b <= self.trees.len(), "prefix size out of range");
        let mut config = self.config.clone();
        config.trees = b;
        ForestModel::from_trees(self.trees[..b].to_vec(), self.outcomes.clone(), config)
    }

    /// Same structures with every leaf refilled from `outcomes`.
    pub fn refit_leaves(&self, outcomes: &[f64]) -> Result<ForestModel> {
        let trees = self
            .trees
            .iter()
            .map(|t| t.refit_leaves(outcomes))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForestModel::from_trees(trees, outcomes.to_vec(), self.config.clone()))
    }

    pub fn forest_weights(&self, x: &[f64]) -> SmootherWeights {
        let members: Vec<SmootherWeights> = self.trees.iter().map(|t| t.tree_weights(x)).collect();
        SmootherWeights::average(&members, self.outcomes.len())
    }

    /// `forest_weights(x) . y`.
    pub fn predict_forest(&self, x: &[f64]) -> f64 {
        self.forest_weights(x).dot(&self.outcomes)
    }

    /// Prediction and squared weight norm of every prefix forest listed in
    /// `sizes` (ascending, each in `1..=B`), evaluated at `x` in one pass
    /// over the members. Both agree exactly with `prefix(b).forest_weights(x)`.
    pub fn prefix_summaries(&self, x: &[f64], sizes: &[usize]) -> Vec<PrefixSummary> {
        debug_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        assert!(sizes.last().is_none_or(|&b| b <= self.trees.len()), "prefix size out of range");
        let mut acc = vec![0.0; self.outcomes.len()];
        let mut support = Vec::new();
        let mut out = Vec::with_capacity(sizes.len());
        let mut next = sizes.iter().peekable();
        for (b, tree) in self.trees.iter().enumerate() {
            if next.peek().is_none() {
                break;
            }
            let leaf = tree.leaf(tree.leaf_of(x));
            for &(i, w) in leaf.weights().entries() {
                if acc[i] == 0.0 {
                    support.push(i);
                }
                acc[i] += w;
            }
            if next.peek() != Some(&&(b + 1)) {
                continue;
            }
            support.sort_unstable();
            let count = (b + 1) as f64;
            let (mut prediction, mut squared_norm) = (0.0, 0.0);
            for &i in &support {
                let w = acc[i] / count;
                prediction += w * self.outcomes[i];
                squared_norm += w * w;
            }
            while next.next_if(|&&s| s == b + 1).is_some() {
                out.push(PrefixSummary {
                    prediction,
                    squared_norm,
                });
            }
        }
        out
    }

    /// Mean of the member predictions.
    pub fn mean_member_prediction(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

impl Smoother for ForestModel {
    fn train_size(&self) -> usize {
        self.outcomes.len()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_forest(x)
    }

    fn weights(&self, x: &[f64]) -> SmootherWeights {
        self.forest_weights(x)
    }
}
