//! Bias/variance decompositions estimated by Monte Carlo.
//!
//! Two views are covered. The statistical one splits the prediction
//! variance into the part due to the training sample (`samp_var`) and the
//! part due to model randomness given the sample (`within_z_var`). The
//! representation view compares every model draw against the best draw on
//! a fixed train/test pair: the best draw's error approximates the
//! representation bias, and the mean squared distance of the other draws to
//! it approximates the model variability.

use rayon::prelude::*;

use crate::datagen::{resample_labels, Dataset, MeanFunction, NoiseSpec};
use crate::ensemble::{fit_forest, ForestConfig, ForestModel, StructureKind};
use crate::error::{Error, Result};
use crate::metrics::mse;
use crate::rng::derive_path;
use crate::stats::{jackknife_std_error, mean, sample_variance, std_error};
use crate::tree::TreeConfig;
use crate::weights::Smoother;

/// Model draws per train/test pair in [`rep_mod_decompose`].
pub const DEFAULT_MODEL_DRAWS: usize = 50;
/// Outcome resamples per input realisation in
/// [`predictive_variance_experiment`].
pub const DEFAULT_OUTCOME_RESAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    /// Pooled variance over all draws.
    pub total_var: f64,
    /// Variance over training sets of the per-set mean prediction.
    pub samp_var: f64,
    /// Mean over training sets of the within-set prediction variance.
    pub within_z_var: f64,
    pub outer_reps: usize,
    pub inner_reps: usize,
}

/// Estimate `Var = SampVar + WithinZVar` at the rows of `x_eval`.
///
/// Outer replication `o` draws a training set with `data_factory(seed_o)`;
/// inner replication `i` fits `fit(&z_o, seed_i)`, with the same model seeds
/// reused for every training set. All three components are
/// unbiased sample variances averaged over the query rows.
pub fn variance_decompose<M, F, D>(
    fit: F,
    data_factory: D,
    x_eval: &Dataset,
    outer_reps: usize,
    inner_reps: usize,
    seed: u64,
) -> Result<VarianceDecomposition>
where
    M: Smoother,
    F: Fn(&Dataset, u64) -> Result<M> + Sync,
    D: Fn(u64) -> Result<Dataset> + Sync,
{
    if outer_reps < 2 || inner_reps < 2 {
        return Err(Error::invalid("variance decomposition needs at least 2 outer and 2 inner replications"));
    }
    // predictions[o][i][j]
    let predictions: Vec<Vec<Vec<f64>>> = (0..outer_reps)
        .into_par_iter()
        .map(|o| {
            let z = data_factory(derive_path(seed, &[o as u64, 0]))?;
            (0..inner_reps)
                .into_par_iter()
                .map(|i| Ok(fit(&z, derive_path(seed, &[1, i as u64]))?.predict_all(x_eval)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    decompose_predictions(&predictions)
}

/// Decompose already collected predictions, indexed
/// `predictions[outer][inner][query]`.
pub fn decompose_predictions(predictions: &[Vec<Vec<f64>>]) -> Result<VarianceDecomposition> {
    let outer_reps = predictions.len();
    let inner_reps = predictions.first().map_or(0, Vec::len);
    if outer_reps < 2 || inner_reps < 2 {
        return Err(Error::invalid("variance decomposition needs at least 2 outer and 2 inner replications"));
    }
    let q = predictions[0][0].len();
    if predictions.iter().any(|o| o.len() != inner_reps || o.iter().any(|p| p.len() != q)) {
        return Err(Error::invalid("ragged prediction array"));
    }
    if q == 0 {
        return Err(Error::EmptySample);
    }
    let (mut total, mut samp, mut within) = (0.0, 0.0, 0.0);
    let mut column = vec![0.0; inner_reps];
    let mut outer_means = vec![0.0; outer_reps];
    let mut inner_vars = vec![0.0; outer_reps];
    let mut pooled = Vec::with_capacity(outer_reps * inner_reps);
    for j in 0..q {
        pooled.clear();
        for (o, draws) in predictions.iter().enumerate() {
            for (c, p) in column.iter_mut().zip(draws) {
                *c = p[j];
            }
            outer_means[o] = mean(&column);
            inner_vars[o] = sample_variance(&column);
            pooled.extend_from_slice(&column);
        }
        total += sample_variance(&pooled);
        samp += sample_variance(&outer_means);
        within += mean(&inner_vars);
    }
    let q = q as f64;
    Ok(VarianceDecomposition {
        total_var: total / q,
        samp_var: samp / q,
        within_z_var: within / q,
        outer_reps,
        inner_reps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepModDecomposition {
    /// Mean test MSE over the draws.
    pub mean_mse: f64,
    /// Test MSE of the best draw.
    pub rep_bias_proxy: f64,
    /// Mean over draws of the mean squared distance to the best draw's
    /// predictions.
    pub mod_var_proxy: f64,
    pub model_draws: usize,
    pub best_draw: usize,
    pub draw_mse: Vec<f64>,
}

/// Decompose from per-draw test predictions (`predictions[draw][j]`). The
/// best draw is the one with the lowest test MSE; ties keep the earliest.
pub fn rep_mod_from_predictions(predictions: &[Vec<f64>], targets: &[f64]) -> Result<RepModDecomposition> {
    if predictions.is_empty() {
        return Err(Error::invalid("need at least one model draw"));
    }
    let draw_mse = predictions.iter().map(|p| mse(p, targets)).collect::<Result<Vec<_>>>()?;
    let best_draw = draw_mse
        .iter()
        .enumerate()
        .fold(0, |best, (d, &m)| if m < draw_mse[best] { d } else { best });
    let best = &predictions[best_draw];
    let mod_var_proxy = mean(
        &predictions
            .iter()
            .map(|p| mse(p, best))
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(RepModDecomposition {
        mean_mse: mean(&draw_mse),
        rep_bias_proxy: draw_mse[best_draw],
        mod_var_proxy,
        model_draws: predictions.len(),
        best_draw,
        draw_mse,
    })
}

/// Fit `model_draws` re-initialisations on `train` and decompose their
/// test error with oracle selection of the best draw.
pub fn rep_mod_decompose<M, F>(
    fit: F,
    train: &Dataset,
    test: &Dataset,
    model_draws: usize,
    seed: u64,
) -> Result<RepModDecomposition>
where
    M: Smoother,
    F: Fn(&Dataset, u64) -> Result<M> + Sync,
{
    if model_draws < 2 {
        return Err(Error::invalid("need at least 2 model draws"));
    }
    let predictions: Vec<Vec<f64>> = (0..model_draws)
        .into_par_iter()
        .map(|d| Ok(fit(train, derive_path(seed, &[d as u64]))?.predict_all(test)))
        .collect::<Result<_>>()?;
    rep_mod_from_predictions(&predictions, test.outcomes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Holds,
    Violated,
    InsufficientDraws,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub status: BoundStatus,
    pub emse: f64,
    /// `2 * (mean RepBias + mean ModVar)`.
    pub bound: f64,
    /// Combined Monte Carlo standard error of `emse - bound`.
    pub std_error: f64,
    /// `bound + 3 * std_error - emse`; negative when violated.
    pub margin: f64,
}

/// Check `EMSE <= 2 E_Z[RepBias + ModVar]` up to three combined standard
/// errors, over a family of decompositions from independent training sets.
pub fn emse_bound_check(family: &[RepModDecomposition], emse_estimate: f64, emse_std_error: f64) -> BoundCheck {
    if family.len() < 2 || family.iter().any(|r| r.model_draws < 2) {
        return BoundCheck {
            status: BoundStatus::InsufficientDraws,
            emse: emse_estimate,
            bound: f64::NAN,
            std_error: f64::NAN,
            margin: f64::NAN,
        };
    }
    let sums: Vec<f64> = family.iter().map(|r| r.rep_bias_proxy + r.mod_var_proxy).collect();
    let bound = 2.0 * mean(&sums);
    let se = (4.0 * std_error(&sums).powi(2) + emse_std_error.powi(2)).sqrt();
    let margin = bound + 3.0 * se - emse_estimate;
    BoundCheck {
        status: if margin >= 0.0 { BoundStatus::Holds } else { BoundStatus::Violated },
        emse: emse_estimate,
        bound,
        std_error: se,
        margin,
    }
}

/// How forests are rebuilt across outcome resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestVariant {
    /// Standard forests refit on every resample.
    Adaptive,
    /// Structures grown on permuted outcomes, refit on every resample.
    TotallyRandomized,
    /// Structures grown once on permuted outcomes and kept fixed; only the
    /// leaf values follow the resampled outcomes.
    Frozen,
}

impl ForestVariant {
    pub fn name(self) -> &'static str {
        match self {
            ForestVariant::Adaptive => "adaptive",
            ForestVariant::TotallyRandomized => "totally-randomized",
            ForestVariant::Frozen => "frozen",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveVarianceSettings {
    pub variant: ForestVariant,
    /// Leaf budgets of the member trees; `None` grows to purity.
    pub leaf_grid: Vec<Option<usize>>,
    /// Ensemble sizes, ascending.
    pub size_grid: Vec<usize>,
    pub feature_fraction: f64,
    pub resamples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveVarianceRecord {
    pub variant: ForestVariant,
    pub max_leaves: Option<usize>,
    pub trees: usize,
    pub in_sample: bool,
    /// Mean over query points of the prediction variance across resamples.
    pub true_var: f64,
    /// Mean over query points and resamples of `||s(x)||^2 sigma^2`.
    pub weight_norm_var: f64,
    /// Jackknife (over resamples) standard error of `true_var`.
    pub true_var_se: f64,
    /// Jackknife standard error of `true_var - weight_norm_var`.
    pub diff_se: f64,
}

/// Compare the true prediction variance under outcome resampling with the
/// fixed-linear-smoother prediction `||s(x)||^2 sigma^2`, at the training
/// inputs and at the rows of `test`.
pub fn predictive_variance_experiment<G: MeanFunction + ?Sized>(
    settings: &PredictiveVarianceSettings,
    train: &Dataset,
    test: &Dataset,
    mean_fn: &G,
    noise: NoiseSpec,
) -> Result<Vec<PredictiveVarianceRecord>> {
    let sigma2 = noise.sigma() * noise.sigma();
    if sigma2 == 0.0 {
        return Err(Error::invalid("predictive variance experiment needs sigma > 0"));
    }
    if settings.resamples < 3 {
        return Err(Error::invalid("need at least 3 outcome resamples"));
    }
    let sizes = &settings.size_grid;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::invalid("ensemble sizes must be positive and strictly ascending"));
    }
    let b_max = *sizes.last().unwrap();

    let mut records = Vec::new();
    for (grid_index, &max_leaves) in settings.leaf_grid.iter().enumerate() {
        let tree = TreeConfig::default()
            .with_feature_fraction(settings.feature_fraction)
            .with_max_leaves(max_leaves);
        let forest_config = |seed: u64, structure| {
            ForestConfig::new(b_max, tree.clone())
                .with_structure(structure)
                .with_seed(seed)
        };
        let grid_seed = derive_path(settings.seed, &[grid_index as u64]);
        let frozen = match settings.variant {
            ForestVariant::Frozen => Some(fit_forest(
                train,
                &forest_config(derive_path(grid_seed, &[u64::MAX]), StructureKind::TotallyRandomized),
            )?),
            _ => None,
        };

        // per resample: forests for this resample
        let forests: Vec<ForestModel> = (0..settings.resamples)
            .into_par_iter()
            .map(|r| {
                let y = resample_labels(train, mean_fn, noise, derive_path(grid_seed, &[r as u64, 0]))?;
                let model_seed = derive_path(grid_seed, &[r as u64, 1]);
                match settings.variant {
                    ForestVariant::Frozen => frozen.as_ref().expect("frozen structure").refit_leaves(y.outcomes()),
                    ForestVariant::Adaptive => fit_forest(&y, &forest_config(model_seed, StructureKind::Adaptive)),
                    ForestVariant::TotallyRandomized => {
                        fit_forest(&y, &forest_config(model_seed, StructureKind::TotallyRandomized))
                    }
                }
            })
            .collect::<Result<_>>()?;

        for (in_sample, points) in [(true, train), (false, test)] {
            // summaries[r][j][size]
            let summaries: Vec<Vec<Vec<_>>> = forests
                .par_iter()
                .map(|f| points.rows().map(|x| f.prefix_summaries(x, sizes)).collect())
                .collect();
            for (k, &b) in sizes.iter().enumerate() {
                let stats = |skip: Option<usize>| -> (f64, f64) {
                    let used: Vec<usize> = (0..settings.resamples).filter(|&r| Some(r) != skip).collect();
                    let mut var_sum = 0.0;
                    let mut norm_sum = 0.0;
                    #[allow(clippy::needless_range_loop)]
                    for j in 0..points.sample_count() {
                        let preds: Vec<f64> = used.iter().map(|&r| summaries[r][j][k].prediction).collect();
                        var_sum += sample_variance(&preds);
                        norm_sum += used.iter().map(|&r| summaries[r][j][k].squared_norm).sum::<f64>() / used.len() as f64;
                    }
                    let q = points.sample_count() as f64;
                    (var_sum / q, sigma2 * norm_sum / q)
                };
                let (true_var, weight_norm_var) = stats(None);
                let true_var_se = jackknife_std_error(settings.resamples, |r| stats(Some(r)).0);
                let diff_se = jackknife_std_error(settings.resamples, |r| {
                    let (t, w) = stats(Some(r));
                    t - w
                });
                records.push(PredictiveVarianceRecord {
                    variant: settings.variant,
                    max_leaves,
                    trees: b,
                    in_sample,
                    true_var,
                    weight_norm_var,
                    true_var_se,
                    diff_se,
                });
            }
        }
    }
    Ok(records)
}
