//! Gradient boosting with squared loss, tracked as a smoother.
//!
//! Starting from `f_0 = 0`, stage `p` fits a tree to the residuals
//! `y - f_{p-1}(x_i)`, uses the mean residual of each leaf as its value and
//! updates `f_p = f_{p-1} + eta * T_p`. The weights follow the recursion
//!
//! ```text
//! s_p(x) = s_{p-1}(x) + eta * (s_tree_p(x) - R_p[leaf_p(x)])
//! R_p[j] = mean over training rows i in leaf j of s_{p-1}(x_i)
//! ```
//!
//! so `s_P(x) . y` reproduces the staged prediction. The rows `R_p` are
//! stored per stage; they are all a query needs besides its leaf in each
//! stage.

use crate::datagen::{Dataset, Task};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tree::{fit_tree, TreeConfig, TreeModel};
use crate::weights::{Smoother, SmootherWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    /// Number of boosting stages `P`.
    pub rounds: usize,
    /// Learning rate `eta`.
    pub learning_rate: f64,
    pub tree: TreeConfig,
}

impl BoostConfig {
    pub fn new(rounds: usize, learning_rate: f64, tree: TreeConfig) -> Self {
        BoostConfig {
            rounds,
            learning_rate,
            tree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.learning_rate;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid(format!("learning rate must be in (0, 1], got {eta}")));
        }
        self.tree.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostStage {
    /// Structure fitted on the stage residuals; leaf values are the mean
    /// residuals `gamma_jp`.
    pub tree: TreeModel,
    /// Leaf-residual correction rows, one dense `n`-vector per leaf.
    pub correction: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostModel {
    stages: Vec<BoostStage>,
    learning_rate: f64,
    train_weights: Vec<Vec<f64>>,
    train_predictions: Vec<f64>,
}

pub fn fit_boost(data: &Dataset, config: &BoostConfig) -> Result<BoostModel> {
    config.validate()?;
    if data.task() != Task::Regression {
        return Err(Error::invalid("boosting supports regression outcomes only"));
    }
    let n = data.sample_count();
    let eta = config.learning_rate;
    let y = data.outcomes();

    let mut f = vec![0.0; n];
    let mut s = vec![vec![0.0; n]; n];
    let mut stages = Vec::with_capacity(config.rounds);
    for p in 0..config.rounds {
        let residuals: Vec<f64> = y.iter().zip(&f).map(|(yi, fi)| yi - fi).collect();
        let stage_config = config.tree.clone().with_seed(derive_seed(config.tree.seed, p as u64));
        let tree = fit_tree(&data.with_outcomes(residuals)?, &stage_config, None)?;

        let correction: Vec<Vec<f64>> = tree
            .leaves()
            .iter()
            .map(|leaf| {
                let mut row = vec![0.0; n];
                for &(i, _) in leaf.members() {
                    for (r, v) in row.iter_mut().zip(&s[i]) {
                        *r += v;
                    }
                }
                let size = leaf.members().len() as f64;
                row.iter_mut().for_each(|r| *r /= size);
                row
            })
            .collect();

        for (j, leaf) in tree.leaves().iter().enumerate() {
            let gamma = leaf.value();
            for &(i, _) in leaf.members() {
                f[i] += eta * gamma;
                step(&mut s[i], eta, leaf.weights(), &correction[j]);
            }
        }
        stages.push(BoostStage { tree, correction });
    }
    Ok(BoostModel {
        stages,
        learning_rate: eta,
        train_weights: s,
        train_predictions: f,
    })
}

/// `s += eta * (tree - correction)` coordinatewise.
fn step(s: &mut [f64], eta: f64, tree: &SmootherWeights, correction: &[f64]) {
    let mut entries = tree.entries().iter().peekable();
    for (k, (sk, ck)) in s.iter_mut().zip(correction).enumerate() {
        let t = match entries.peek() {
            Some(&&(i, w)) if i == k => {
                entries.next();
                w
            }
            _ => 0.0,
        };
        *sk += eta * (t - ck);
    }
}

impl BoostModel {
    pub fn stages(&self) -> &[BoostStage] {
        &self.stages
    }

    pub fn rounds(&self) -> usize {
        self.stages.len()
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Cached final weights of training row `i`.
    pub fn train_weights(&self, i: usize) -> SmootherWeights {
        SmootherWeights::from_dense(&self.train_weights[i])
    }

    /// Staged predictions `f_P(x_i)` at the training rows.
    pub fn train_predictions(&self) -> &[f64] {
        &self.train_predictions
    }

    /// `f_P(x) = sum_p eta * gamma_{leaf_p(x), p}`.
    pub fn predict_staged(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for stage in &self.stages {
            f += self.learning_rate * stage.tree.predict(x);
        }
        f
    }

    /// Dense weight vector after every stage, passed to `visit(p, s_p)` for
    /// `p = 1..=P`.
    pub fn visit_stage_weights(&self, x: &[f64], mut visit: impl FnMut(usize, &[f64])) {
        let mut s = vec![0.0; self.train_size()];
        for (p, stage) in self.stages.iter().enumerate() {
            let leaf = stage.tree.leaf_of(x);
            step(&mut s, self.learning_rate, stage.tree.leaf(leaf).weights(), &stage.correction[leaf.0]);
            visit(p + 1, &s);
        }
    }

    /// Staged prediction after every stage, `f_1(x), ..., f_P(x)`.
    pub fn stage_predictions(&self, x: &[f64]) -> Vec<f64> {
        let mut f = 0.0;
        self.stages
            .iter()
            .map(|stage| {
                f += self.learning_rate * stage.tree.predict(x);
                f
            })
            .collect()
    }

    pub fn boost_weights(&self, x: &[f64]) -> SmootherWeights {
        let mut last = vec![0.0; self.train_size()];
        self.visit_stage_weights(x, |_, s| last.copy_from_slice(s));
        SmootherWeights::from_dense(&last)
    }
}

impl Smoother for BoostModel {
    fn train_size(&self) -> usize {
        self.train_weights.len()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_staged(x)
    }

    fn weights(&self, x: &[f64]) -> SmootherWeights {
        self.boost_weights(x)
    }
}
