//! Datasets: the MARSadd generator, label resampling, offset test sets and
//! ingestion of external CSV files.

mod csv_source;
mod fetch;

pub use csv_source::load_csv_dataset;
pub use fetch::fetch_dataset;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Number of leading coordinates the MARSadd mean depends on.
pub const MARSADD_MIN_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    /// Binary labels in {0, 1}, predicted by averaging (never by voting).
    AveragingClassification,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" | "averaging-classification" => Ok(Task::AveragingClassification),
            other => Err(Error::invalid(format!(
                "unknown task `{other}` (expected regression or classification)"
            ))),
        }
    }
}

/// An `n x d` input matrix stored row-major together with its outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    outcomes: Vec<f64>,
    feature_count: usize,
    task: Task,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, feature_count: usize, outcomes: Vec<f64>, task: Task) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if inputs.len() != outcomes.len() * feature_count {
            return Err(Error::LengthMismatch {
                expected: outcomes.len() * feature_count,
                actual: inputs.len(),
            });
        }
        if task == Task::AveragingClassification {
            if let Some(bad) = outcomes.iter().find(|&&y| y != 0.0 && y != 1.0) {
                return Err(Error::invalid(format!(
                    "classification outcomes must be 0 or 1, found {bad}"
                )));
            }
        }
        let feature_names = (0..feature_count).map(|j| format!("x{}", j + 1)).collect();
        Ok(Dataset {
            inputs,
            outcomes,
            feature_count,
            task,
            feature_names,
        })
    }

    /// Build a regression dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], outcomes: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows have differing lengths"));
        }
        if rows.len() != outcomes.len() {
            return Err(Error::LengthMismatch {
                expected: rows.len(),
                actual: outcomes.len(),
            });
        }
        Dataset::new(rows.concat(), d, outcomes, Task::Regression)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.feature_count {
            return Err(Error::LengthMismatch {
                expected: self.feature_count,
                actual: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn sample_count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.feature_count..(i + 1) * self.feature_count]
    }

    #[inline]
    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.inputs[i * self.feature_count + feature]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.inputs.chunks_exact(self.feature_count)
    }

    /// Same inputs, new outcomes.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        if outcomes.len() != self.sample_count() {
            return Err(Error::LengthMismatch {
                expected: self.sample_count(),
                actual: outcomes.len(),
            });
        }
        let mut out = Dataset::new(self.inputs.clone(), self.feature_count, outcomes, self.task)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.feature_count);
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
        }
        Dataset {
            inputs,
            outcomes: indices.iter().map(|&i| self.outcomes[i]).collect(),
            feature_count: self.feature_count,
            task: self.task,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Uniformly random subset of `count` rows drawn without replacement.
    pub fn subsample(&self, count: usize, seed: u64) -> Result<Dataset> {
        let n = self.sample_count();
        if count > n {
            return Err(Error::SubsampleTooLarge {
                requested: count,
                available: n,
            });
        }
        let mut rng = rng_from_seed(seed);
        let indices = sample_indices(&mut rng, n, count).into_vec();
        Ok(self.select(&indices))
    }

    /// Split into the first `count` rows and the rest.
    pub fn split_at(&self, count: usize) -> (Dataset, Dataset) {
        let count = count.min(self.sample_count());
        let head: Vec<usize> = (0..count).collect();
        let tail: Vec<usize> = (count..self.sample_count()).collect();
        (self.select(&head), self.select(&tail))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("noise sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(NoiseSpec { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetSpec {
    delta: f64,
}

impl OffsetSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("offset delta must be finite and >= 0, got {delta}")));
        }
        Ok(OffsetSpec { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// A conditional mean function `x -> E[Y | X = x]`.
pub trait MeanFunction: Sync {
    fn mean(&self, x: &[f64]) -> Result<f64>;
}

impl<F> MeanFunction for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self(x))
    }
}

/// The additive MARSadd mean function.
#[derive(Debug, Clone, Copy, Default)]
pub struct MarsAdd;

impl MeanFunction for MarsAdd {
    fn mean(&self, x: &[f64]) -> Result<f64> {
        marsadd_mean(x)
    }
}

/// `0.1 e^{4 x1} + 4 / (1 + e^{-20 (x2 - 0.5)}) + 3 x3 + 2 x4 + x5`.
///
/// Coordinates past the fifth are ignored.
pub fn marsadd_mean(x: &[f64]) -> Result<f64> {
    if x.len() < MARSADD_MIN_DIM {
        return Err(Error::invalid(format!(
            "MARSadd needs at least {MARSADD_MIN_DIM} coordinates, got {}",
            x.len()
        )));
    }
    Ok(0.1 * (4.0 * x[0]).exp()
        + 4.0 / (1.0 + (-20.0 * (x[1] - 0.5)).exp())
        + 3.0 * x[2]
        + 2.0 * x[3]
        + x[4])
}

fn noisy_outcomes<M: MeanFunction + ?Sized>(
    inputs: &[f64],
    d: usize,
    mean_fn: &M,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    inputs
        .chunks_exact(d)
        .map(|x| {
            let z: f64 = rng.sample(StandardNormal);
            Ok(mean_fn.mean(x)? + noise.sigma * z)
        })
        .collect()
}

/// Draw `n` rows with inputs i.i.d. `Unif(0,1)^d` and MARSadd outcomes.
pub fn marsadd_sample(n: usize, d: usize, noise: NoiseSpec, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if d < MARSADD_MIN_DIM {
        return Err(Error::invalid(format!("MARSadd needs d >= {MARSADD_MIN_DIM}, got {d}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let inputs: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    let outcomes = noisy_outcomes(&inputs, d, &MarsAdd, noise, derive_seed(seed, 1))?;
    Dataset::new(inputs, d, outcomes, Task::Regression)
}

/// Keep the inputs of `data`, redraw outcomes as `mean_fn(x) + eps`.
pub fn resample_labels<M: MeanFunction + ?Sized>(
    data: &Dataset,
    mean_fn: &M,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Dataset> {
    let outcomes = noisy_outcomes(data.inputs(), data.feature_count(), mean_fn, noise, seed)?;
    data.with_outcomes(outcomes)
}

/// Test inputs `x_train + U(-delta, delta)` entrywise (no clipping), with
/// fresh outcomes drawn at the shifted inputs.
pub fn offset_test_set<M: MeanFunction + ?Sized>(
    train: &Dataset,
    spec: OffsetSpec,
    mean_fn: &M,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Dataset> {
    let inputs: Vec<f64> = if spec.delta == 0.0 {
        train.inputs().to_vec()
    } else {
        let mut rng = rng_from_seed(derive_seed(seed, 0));
        train
            .inputs()
            .iter()
            .map(|&x| x + (2.0 * rng.random::<f64>() - 1.0) * spec.delta)
            .collect()
    };
    let outcomes = noisy_outcomes(&inputs, train.feature_count(), mean_fn, noise, derive_seed(seed, 1))?;
    let mut out = Dataset::new(inputs, train.feature_count(), outcomes, train.task())?;
    out.feature_names = train.feature_names.clone();
    Ok(out)
}
