//! Per-replication runners behind the catalog.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{Axis, ExperimentSpec, GridPoint, LeafLimit, Metric};
use crate::datagen::{
    load_csv_dataset, marsadd_sample, offset_test_set, resample_labels, Dataset, MarsAdd, NoiseSpec, OffsetSpec,
    Task,
};
use crate::decomp::{
    decompose_predictions, predictive_variance_experiment, rep_mod_from_predictions, ForestVariant,
    PredictiveVarianceSettings,
};
use crate::ensemble::{fit_boost, fit_forest, BoostConfig, ForestConfig, ForestModel, PrefixSummary};
use crate::error::Result;
use crate::metrics::{dof_from_draws, effective_params_from_norms, misclassification, mse};
use crate::rng::{derive_path, derive_seed};
use crate::tree::TreeConfig;

type Row = (GridPoint, Metric, f64);

const TRAIN: u64 = 0;
const TEST: u64 = 1;
const INSAMPLE: u64 = 2;
const MODEL: u64 = 3;
const DOF: u64 = 4;
const DRAWS: u64 = 5;
const OUTER: u64 = 6;
const PRED_VAR: u64 = 7;

pub(super) fn run_replication(spec: &ExperimentSpec, rep: usize) -> Result<Vec<Row>> {
    let ctx = Context::new(spec, rep)?;
    match spec.name.as_str() {
        "boost" => ctx.boost(),
        "rep-mod" => ctx.rep_mod(),
        "var-decomp" => ctx.var_decomp(),
        "pred-variance-adaptive" => ctx.pred_variance(ForestVariant::Adaptive),
        "pred-variance-randomized" => ctx.pred_variance(ForestVariant::TotallyRandomized),
        "pred-variance-frozen" => ctx.pred_variance(ForestVariant::Frozen),
        _ => ctx.forest_sweep(),
    }
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    seed: u64,
    /// Train/test split of the external data, if any.
    real: Option<(Dataset, Dataset)>,
}

/// Sorted distinct sizes and the position of each size in that list.
fn size_index(sizes: &[usize]) -> (Vec<usize>, HashMap<usize, usize>) {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let index = sorted.iter().enumerate().map(|(k, &b)| (b, k)).collect();
    (sorted, index)
}

fn tree_config(point: &GridPoint) -> TreeConfig {
    TreeConfig::default()
        .with_feature_fraction(point.m.unwrap_or(1.0))
        .with_max_leaves(point.max_leaves.and_then(LeafLimit::as_option))
}

/// Summaries of every prefix in `sizes` at every row of `points`.
fn summaries(forest: &ForestModel, points: &Dataset, sizes: &[usize]) -> Vec<Vec<PrefixSummary>> {
    let rows: Vec<&[f64]> = points.rows().collect();
    rows.par_iter().map(|x| forest.prefix_summaries(x, sizes)).collect()
}

fn column(summaries: &[Vec<PrefixSummary>], k: usize, f: impl Fn(&PrefixSummary) -> f64) -> Vec<f64> {
    summaries.iter().map(|s| f(&s[k])).collect()
}

impl<'a> Context<'a> {
    fn new(spec: &'a ExperimentSpec, rep: usize) -> Result<Self> {
        let seed = spec.replication_seed(rep);
        let real = match &spec.data {
            Some(source) if spec.name == "csv-real" => {
                let want = spec.n_train + spec.n_test;
                let data = load_csv_dataset(&source.path, &source.target, source.task, Some(want), seed)?;
                Some(data.split_at(spec.n_train))
            }
            _ => None,
        };
        Ok(Context { spec, seed, real })
    }

    fn noise(point: &GridPoint) -> Result<NoiseSpec> {
        NoiseSpec::new(point.sigma.unwrap_or(1.0))
    }

    /// Training sample; its inputs and standardised noise draws do not
    /// depend on sigma.
    fn train(&self, point: &GridPoint) -> Result<Dataset> {
        match &self.real {
            Some((train, _)) => Ok(train.clone()),
            None => marsadd_sample(
                self.spec.n_train,
                self.spec.feature_count,
                Self::noise(point)?,
                derive_seed(self.seed, TRAIN),
            ),
        }
    }

    /// Fresh test sample, or offset copies of the training inputs when the
    /// point carries a delta.
    fn test(&self, point: &GridPoint, train: &Dataset) -> Result<Dataset> {
        if let Some((_, test)) = &self.real {
            return Ok(test.clone());
        }
        let noise = Self::noise(point)?;
        match point.delta {
            Some(delta) => offset_test_set(train, OffsetSpec::new(delta)?, &MarsAdd, noise, derive_seed(self.seed, TEST)),
            None => marsadd_sample(self.spec.n_test, self.spec.feature_count, noise, derive_seed(self.seed, TEST)),
        }
    }

    fn insample(&self, point: &GridPoint, train: &Dataset) -> Result<Option<Dataset>> {
        if self.real.is_some() {
            return Ok(None);
        }
        resample_labels(train, &MarsAdd, Self::noise(point)?, derive_seed(self.seed, INSAMPLE)).map(Some)
    }

    /// Grid points with the listed columns removed.
    fn cells(&self, drop: &[Axis]) -> Vec<GridPoint> {
        let mut grids = self.spec.grids.clone();
        for axis in drop {
            match axis {
                Axis::Trees => grids.trees.clear(),
                Axis::MaxLeaves => grids.max_leaves.clear(),
                Axis::Rounds => grids.rounds.clear(),
                _ => unreachable!("only size-like columns are evaluated inside a cell"),
            }
        }
        grids.points()
    }

    fn forest_config(&self, point: &GridPoint, trees: usize, seed: u64) -> ForestConfig {
        ForestConfig::new(trees, tree_config(point))
            .with_bootstrap(point.bootstrap.unwrap_or(false))
            .with_seed(seed)
    }

    fn forest_sweep(&self) -> Result<Vec<Row>> {
        let (sizes, index) = size_index(&self.spec.grids.trees);
        let b_max = *sizes.last().expect("validated nonempty");
        let mut rows = Vec::new();
        for cell in self.cells(&[Axis::Trees]) {
            let train = self.train(&cell)?;
            let test = self.test(&cell, &train)?;
            let insample = self.insample(&cell, &train)?;
            let n = train.sample_count();
            let config = self.forest_config(&cell, b_max, derive_seed(self.seed, MODEL));
            let forest = fit_forest(&train, &config)?;
            let on_train = summaries(&forest, &train, &sizes);
            let on_test = summaries(&forest, &test, &sizes);
            let dof = if self.spec.name == "dof-grid" {
                Some(self.dof_by_size(&cell, &train, &sizes)?)
            } else {
                None
            };

            for &b in &self.spec.grids.trees {
                let k = index[&b];
                let point = GridPoint {
                    trees: Some(b),
                    ..cell.clone()
                };
                let p_train = effective_params_from_norms(&column(&on_train, k, |s| s.squared_norm), n)?;
                let p_test = effective_params_from_norms(&column(&on_test, k, |s| s.squared_norm), n)?;
                let train_pred = column(&on_train, k, |s| s.prediction);
                let test_pred = column(&on_test, k, |s| s.prediction);
                let mut push = |metric, value| rows.push((point.clone(), metric, value));
                push(Metric::PTrain, p_train);
                push(Metric::PTest, p_test);
                push(Metric::KEff, n as f64 / p_test);
                push(Metric::EpGap, p_train - p_test);
                push(Metric::MseTrain, mse(&train_pred, train.outcomes())?);
                push(Metric::MseTest, mse(&test_pred, test.outcomes())?);
                if let Some(insample) = &insample {
                    push(Metric::MseInsample, mse(&train_pred, insample.outcomes())?);
                }
                if test.task() == Task::AveragingClassification {
                    push(Metric::MisclassTest, misclassification(&test_pred, test.outcomes())?);
                }
                if let Some(dof) = &dof {
                    push(Metric::Dof, dof[k]);
                }
            }
        }
        Ok(rows)
    }

    /// Covariance degrees of freedom of every prefix size from one set of
    /// label resamples.
    fn dof_by_size(&self, cell: &GridPoint, train: &Dataset, sizes: &[usize]) -> Result<Vec<f64>> {
        let noise = Self::noise(cell)?;
        let b_max = *sizes.last().expect("nonempty sizes");
        let dof_seed = derive_seed(self.seed, DOF);
        let draws: Vec<(Vec<f64>, Vec<Vec<PrefixSummary>>)> = (0..self.spec.dof_replications)
            .into_par_iter()
            .map(|r| {
                let y = resample_labels(train, &MarsAdd, noise, derive_path(dof_seed, &[r as u64, 0]))?;
                let forest = fit_forest(&y, &self.forest_config(cell, b_max, derive_path(dof_seed, &[r as u64, 1])))?;
                Ok((y.outcomes().to_vec(), summaries(&forest, &y, sizes)))
            })
            .collect::<Result<_>>()?;
        let labels: Vec<Vec<f64>> = draws.iter().map(|d| d.0.clone()).collect();
        (0..sizes.len())
            .map(|k| {
                let predictions: Vec<Vec<f64>> = draws.iter().map(|d| column(&d.1, k, |s| s.prediction)).collect();
                Ok(dof_from_draws(&labels, &predictions, noise.sigma())?.value)
            })
            .collect()
    }

    fn boost(&self) -> Result<Vec<Row>> {
        let (rounds, index) = size_index(&self.spec.grids.rounds);
        let p_max = *rounds.last().expect("validated nonempty");
        let mut rows = Vec::new();
        for cell in self.cells(&[Axis::Rounds]) {
            let train = self.train(&cell)?;
            let test = self.test(&cell, &train)?;
            let insample = self.insample(&cell, &train)?.expect("synthetic data");
            let n = train.sample_count();
            let tree = tree_config(&cell).with_seed(derive_seed(self.seed, MODEL));
            let model = fit_boost(&train, &BoostConfig::new(p_max, cell.eta.unwrap_or(0.05), tree))?;
            // per point: (squared norm, staged prediction) at each listed round
            let staged = |data: &Dataset| -> Vec<Vec<(f64, f64)>> {
                let points: Vec<&[f64]> = data.rows().collect();
                points
                    .par_iter()
                    .map(|x| {
                        let mut norms = Vec::with_capacity(rounds.len());
                        model.visit_stage_weights(x, |p, s| {
                            if index.contains_key(&p) {
                                norms.push(s.iter().map(|w| w * w).sum::<f64>());
                            }
                        });
                        let predictions = model.stage_predictions(x);
                        norms.into_iter().zip(rounds.iter().map(|&p| predictions[p - 1])).collect()
                    })
                    .collect()
            };
            let on_train = staged(&train);
            let on_test = staged(&test);
            for &p in &self.spec.grids.rounds {
                let k = index[&p];
                let point = GridPoint {
                    rounds: Some(p),
                    ..cell.clone()
                };
                let norms = |s: &[Vec<(f64, f64)>]| s.iter().map(|v| v[k].0).collect::<Vec<_>>();
                let preds = |s: &[Vec<(f64, f64)>]| s.iter().map(|v| v[k].1).collect::<Vec<_>>();
                let p_train = effective_params_from_norms(&norms(&on_train), n)?;
                let p_test = effective_params_from_norms(&norms(&on_test), n)?;
                let train_pred = preds(&on_train);
                let mut push = |metric, value| rows.push((point.clone(), metric, value));
                push(Metric::PTrain, p_train);
                push(Metric::PTest, p_test);
                push(Metric::EpGap, p_train - p_test);
                push(Metric::MseTrain, mse(&train_pred, train.outcomes())?);
                push(Metric::MseInsample, mse(&train_pred, insample.outcomes())?);
                push(Metric::MseTest, mse(&preds(&on_test), test.outcomes())?);
            }
        }
        Ok(rows)
    }

    fn rep_mod(&self) -> Result<Vec<Row>> {
        let (sizes, index) = size_index(&self.spec.grids.trees);
        let b_max = *sizes.last().expect("validated nonempty");
        let draw_seed = derive_seed(self.seed, DRAWS);
        let mut rows = Vec::new();
        for cell in self.cells(&[Axis::Trees]) {
            let train = self.train(&cell)?;
            let test = self.test(&cell, &train)?;
            // per draw, per test point, per size
            let draws: Vec<Vec<Vec<PrefixSummary>>> = (0..self.spec.model_draws)
                .into_par_iter()
                .map(|d| {
                    let forest = fit_forest(&train, &self.forest_config(&cell, b_max, derive_path(draw_seed, &[d as u64])))?;
                    Ok(summaries(&forest, &test, &sizes))
                })
                .collect::<Result<_>>()?;
            for &b in &self.spec.grids.trees {
                let k = index[&b];
                let predictions: Vec<Vec<f64>> = draws.iter().map(|s| column(s, k, |p| p.prediction)).collect();
                let decomposition = rep_mod_from_predictions(&predictions, test.outcomes())?;
                let point = GridPoint {
                    trees: Some(b),
                    ..cell.clone()
                };
                rows.push((point.clone(), Metric::MseTest, decomposition.mean_mse));
                rows.push((point.clone(), Metric::RepBias, decomposition.rep_bias_proxy));
                rows.push((point, Metric::ModVar, decomposition.mod_var_proxy));
            }
        }
        Ok(rows)
    }

    fn var_decomp(&self) -> Result<Vec<Row>> {
        let (sizes, index) = size_index(&self.spec.grids.trees);
        let b_max = *sizes.last().expect("validated nonempty");
        let outer_seed = derive_seed(self.seed, OUTER);
        let mut rows = Vec::new();
        for cell in self.cells(&[Axis::Trees]) {
            let noise = Self::noise(&cell)?;
            let test = marsadd_sample(self.spec.n_test, self.spec.feature_count, noise, derive_seed(self.seed, TEST))?;
            // [outer][inner][test point][size]
            let draws: Vec<Vec<Vec<Vec<PrefixSummary>>>> = (0..self.spec.outer_reps)
                .into_par_iter()
                .map(|o| {
                    let z = marsadd_sample(
                        self.spec.n_train,
                        self.spec.feature_count,
                        noise,
                        derive_path(outer_seed, &[0, o as u64]),
                    )?;
                    (0..self.spec.inner_reps)
                        .into_par_iter()
                        .map(|i| {
                            let config = self.forest_config(&cell, b_max, derive_path(outer_seed, &[1, i as u64]));
                            Ok(summaries(&fit_forest(&z, &config)?, &test, &sizes))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            for &b in &self.spec.grids.trees {
                let k = index[&b];
                let predictions: Vec<Vec<Vec<f64>>> = draws
                    .iter()
                    .map(|o| o.iter().map(|i| column(i, k, |s| s.prediction)).collect())
                    .collect();
                let decomposition = decompose_predictions(&predictions)?;
                let point = GridPoint {
                    trees: Some(b),
                    ..cell.clone()
                };
                rows.push((point.clone(), Metric::SampVar, decomposition.samp_var));
                rows.push((point, Metric::WithinZVar, decomposition.within_z_var));
            }
        }
        Ok(rows)
    }

    fn pred_variance(&self, variant: ForestVariant) -> Result<Vec<Row>> {
        let (sizes, _) = size_index(&self.spec.grids.trees);
        let mut rows = Vec::new();
        for cell in self.cells(&[Axis::Trees, Axis::MaxLeaves]) {
            let train = self.train(&cell)?;
            let test = self.test(&cell, &train)?;
            let settings = PredictiveVarianceSettings {
                variant,
                leaf_grid: self.spec.grids.max_leaves.iter().map(|l| l.as_option()).collect(),
                size_grid: sizes.clone(),
                feature_fraction: cell.m.unwrap_or(1.0),
                resamples: self.spec.outcome_resamples,
                seed: derive_seed(self.seed, PRED_VAR),
            };
            let records = predictive_variance_experiment(&settings, &train, &test, &MarsAdd, Self::noise(&cell)?)?;
            for r in records {
                let point = GridPoint {
                    trees: Some(r.trees),
                    max_leaves: Some(r.max_leaves.map_or(LeafLimit::Unlimited, LeafLimit::Leaves)),
                    ..cell.clone()
                };
                let (var_metric, norm_metric) = if r.in_sample {
                    (Metric::PredVarInsample, Metric::WeightNormVarInsample)
                } else {
                    (Metric::PredVar, Metric::WeightNormVar)
                };
                rows.push((point.clone(), var_metric, r.true_var));
                rows.push((point, norm_metric, r.weight_norm_var));
            }
        }
        Ok(rows)
    }
}
