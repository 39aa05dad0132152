//! Smoothing and error metrics.

use rayon::prelude::*;

use crate::datagen::{resample_labels, Dataset, MeanFunction, NoiseSpec};
use crate::error::{Error, Result};
use crate::rng::derive_path;
use crate::stats::{compensated_sum, jackknife_std_error};
use crate::weights::{Smoother, WeightMatrix};

/// Replications used by [`estimate_dof`] unless told otherwise.
pub const DEFAULT_DOF_REPLICATIONS: usize = 50;

/// Tolerance on row sums when checking that weights are normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Effective parameters `p = (n / |I|) * sum_j ||s(x_j)||^2`.
///
/// Ranges over `[1, n]` for nonnegative weights summing to one: uniform
/// weights give 1, unit vectors give `n`.
pub fn effective_params(weights: &WeightMatrix) -> Result<f64> {
    let norms: Vec<f64> = weights.rows().iter().map(|r| r.squared_norm()).collect();
    effective_params_from_norms(&norms, weights.train_size())
}

/// [`effective_params`] from precomputed squared row norms.
pub fn effective_params_from_norms(squared_norms: &[f64], train_size: usize) -> Result<f64> {
    if squared_norms.is_empty() {
        return Err(Error::invalid("effective parameters need at least one query point"));
    }
    let total = compensated_sum(squared_norms.iter().copied());
    Ok(train_size as f64 * total / squared_norms.len() as f64)
}

/// Effective number of nearest neighbours `n / p`.
///
/// Only defined for averaging smoothers; boosted weight matrices are
/// rejected.
pub fn effective_k(weights: &WeightMatrix) -> Result<f64> {
    if let Some((j, _)) = weights
        .rows()
        .iter()
        .enumerate()
        .find(|(_, r)| !r.is_normalized(NORMALIZATION_TOL))
    {
        return Err(Error::invalid(format!(
            "effective k needs nonnegative weights summing to one (row {j} is not)"
        )));
    }
    Ok(weights.train_size() as f64 / effective_params(weights)?)
}

/// `p_train - p_test`; positive values mean the model smooths more at new
/// inputs than at the training inputs.
pub fn ep_gap(train_weights: &WeightMatrix, test_weights: &WeightMatrix) -> Result<f64> {
    if train_weights.train_size() != test_weights.train_size() {
        return Err(Error::LengthMismatch {
            expected: train_weights.train_size(),
            actual: test_weights.train_size(),
        });
    }
    Ok(effective_params(train_weights)? - effective_params(test_weights)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofEstimate {
    /// `sum_i Cov(yhat_i, y_i) / Var(y_i)` with both moments estimated over
    /// the replications.
    pub value: f64,
    /// `sum_i Cov(yhat_i, y_i) / sigma^2` using the known noise level.
    pub covariance_value: f64,
    /// Delete-one jackknife standard error of `value`.
    pub std_error: f64,
    pub replications: usize,
    pub sigma: f64,
}

/// Monte Carlo estimate of the covariance degrees of freedom
/// `df = (1/sigma^2) sum_i Cov(yhat_i, y_i)`.
///
/// Replication `r` redraws the outcomes at the fixed inputs of `data`, fits
/// `fit(&resampled, seed_r)` and records the in-sample predictions. The
/// reported `value` normalises each row's covariance by the sample variance
/// of its outcome, so a model with `yhat = y` returns exactly `n`.
pub fn estimate_dof<M, F, G>(
    fit: F,
    data: &Dataset,
    mean_fn: &G,
    noise: NoiseSpec,
    replications: usize,
    seed: u64,
) -> Result<DofEstimate>
where
    M: Smoother,
    F: Fn(&Dataset, u64) -> Result<M> + Sync,
    G: MeanFunction + ?Sized,
{
    let sigma = noise.sigma();
    if sigma == 0.0 {
        return Err(Error::invalid("degrees of freedom are undefined for sigma = 0"));
    }
    if replications < 2 {
        return Err(Error::invalid("degrees of freedom need at least 2 replications"));
    }
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let resampled = resample_labels(data, mean_fn, noise, derive_path(seed, &[r as u64, 0]))?;
            let model = fit(&resampled, derive_path(seed, &[r as u64, 1]))?;
            let predictions = model.predict_all(&resampled);
            Ok((resampled.outcomes().to_vec(), predictions))
        })
        .collect::<Result<_>>()?;

    let (labels, predictions): (Vec<_>, Vec<_>) = draws.into_iter().unzip();
    dof_from_draws(&labels, &predictions, sigma)
}

/// Covariance degrees of freedom from already collected replications:
/// `labels[r]` are the outcomes of replication `r` and `predictions[r]` the
/// in-sample predictions of the model fitted to them.
pub fn dof_from_draws(labels: &[Vec<f64>], predictions: &[Vec<f64>], sigma: f64) -> Result<DofEstimate> {
    if sigma <= 0.0 {
        return Err(Error::invalid("degrees of freedom are undefined for sigma = 0"));
    }
    let replications = labels.len();
    if replications < 2 {
        return Err(Error::invalid("degrees of freedom need at least 2 replications"));
    }
    if predictions.len() != replications {
        return Err(Error::LengthMismatch {
            expected: replications,
            actual: predictions.len(),
        });
    }
    let n = labels[0].len();
    for row in labels.iter().chain(predictions) {
        if row.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: row.len(),
            });
        }
    }
    let moments = |skip: Option<usize>| -> (f64, f64) {
        let used: Vec<usize> = (0..replications).filter(|&r| Some(r) != skip).collect();
        let k = used.len() as f64;
        let mut ratio_sum = 0.0;
        let mut cov_sum = 0.0;
        for i in 0..n {
            let y_bar = used.iter().map(|&r| labels[r][i]).sum::<f64>() / k;
            let f_bar = used.iter().map(|&r| predictions[r][i]).sum::<f64>() / k;
            let cov = used
                .iter()
                .map(|&r| (predictions[r][i] - f_bar) * (labels[r][i] - y_bar))
                .sum::<f64>()
                / (k - 1.0);
            let var = used.iter().map(|&r| (labels[r][i] - y_bar) * (labels[r][i] - y_bar)).sum::<f64>() / (k - 1.0);
            if var > 0.0 {
                ratio_sum += cov / var;
            }
            cov_sum += cov;
        }
        (ratio_sum, cov_sum / (sigma * sigma))
    };
    let (value, covariance_value) = moments(None);
    let std_error = if replications > 2 {
        jackknife_std_error(replications, |r| moments(Some(r)).0)
    } else {
        f64::NAN
    };
    Ok(DofEstimate {
        value,
        covariance_value,
        std_error,
        replications,
        sigma,
    })
}

fn check_lengths(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            actual: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::invalid("no targets to score against"));
    }
    Ok(())
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sse / targets.len() as f64)
}

/// Share of predictions whose nearest class (threshold 0.5, ties to 1)
/// differs from the 0/1 target.
pub fn misclassification(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let wrong = predictions
        .iter()
        .zip(targets)
        .filter(|&(&p, &t)| {
            let class = if p >= 0.5 { 1.0 } else { 0.0 };
            class != t
        })
        .count();
    Ok(wrong as f64 / targets.len() as f64)
}
