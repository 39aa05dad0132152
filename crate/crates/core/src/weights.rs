//! Smoother weight vectors.
//!
//! A smoother predicts `f(x) = sum_i s_i(x) * y_i`. [`SmootherWeights`] holds
//! the vector `s(x)` sparsely, as `(training index, weight)` pairs sorted by
//! index.

use crate::datagen::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherWeights {
    entries: Vec<(usize, f64)>,
    train_size: usize,
}

impl SmootherWeights {
    /// Build from arbitrary `(index, weight)` pairs. Duplicate indices are
    /// summed and the result is sorted by index.
    pub fn new(mut entries: Vec<(usize, f64)>, train_size: usize) -> Result<Self> {
        if let Some(&(i, _)) = entries.iter().find(|(i, _)| *i >= train_size) {
            return Err(Error::invalid(format!("weight index {i} out of range for n={train_size}")));
        }
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += w,
                _ => merged.push((i, w)),
            }
        }
        Ok(SmootherWeights {
            entries: merged,
            train_size,
        })
    }

    /// Entries must already be strictly increasing in index.
    pub(crate) fn from_sorted(entries: Vec<(usize, f64)>, train_size: usize) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.last().is_none_or(|&(i, _)| i < train_size));
        SmootherWeights { entries, train_size }
    }

    /// Keeps every nonzero coordinate of `dense`.
    pub fn from_dense(dense: &[f64]) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| (i, w))
            .collect();
        SmootherWeights {
            entries,
            train_size: dense.len(),
        }
    }

    pub fn zeros(train_size: usize) -> Self {
        SmootherWeights {
            entries: Vec::new(),
            train_size,
        }
    }

    pub fn unit(index: usize, train_size: usize) -> Self {
        assert!(index < train_size, "unit index out of range");
        SmootherWeights {
            entries: vec![(index, 1.0)],
            train_size,
        }
    }

    pub fn uniform(train_size: usize) -> Self {
        let w = 1.0 / train_size as f64;
        SmootherWeights {
            entries: (0..train_size).map(|i| (i, w)).collect(),
            train_size,
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn train_size(&self) -> usize {
        self.train_size
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |k| self.entries[k].1)
    }

    /// Indices carrying a nonzero weight.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().filter(|(_, w)| *w != 0.0).map(|&(i, _)| i)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum()
    }

    /// `s(x) . y`, accumulated in index order.
    pub fn dot(&self, outcomes: &[f64]) -> f64 {
        debug_assert_eq!(outcomes.len(), self.train_size);
        self.entries.iter().map(|&(i, w)| w * outcomes[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.train_size];
        for &(i, w) in &self.entries {
            dense[i] = w;
        }
        dense
    }

    /// Nonnegative entries summing to one within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        self.entries.iter().all(|&(_, w)| w >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }

    /// Arithmetic mean of weight vectors: coordinates are summed in member
    /// order and the total divided by the member count.
    pub fn average<'a, I>(members: I, train_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a SmootherWeights>,
    {
        let mut acc = vec![0.0; train_size];
        let mut touched = vec![false; train_size];
        let mut count = 0usize;
        for m in members {
            debug_assert_eq!(m.train_size, train_size);
            for &(i, w) in &m.entries {
                acc[i] += w;
                touched[i] = true;
            }
            count += 1;
        }
        if count == 0 {
            return SmootherWeights::zeros(train_size);
        }
        let b = count as f64;
        let entries = (0..train_size)
            .filter(|&i| touched[i])
            .map(|i| (i, acc[i] / b))
            .collect();
        SmootherWeights { entries, train_size }
    }
}

/// One weight vector per query point, all against the same training set.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: Vec<SmootherWeights>,
    train_size: usize,
}

impl WeightMatrix {
    pub fn new(rows: Vec<SmootherWeights>, train_size: usize) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.train_size != train_size) {
            return Err(Error::LengthMismatch {
                expected: train_size,
                actual: r.train_size,
            });
        }
        Ok(WeightMatrix { rows, train_size })
    }

    pub fn rows(&self) -> &[SmootherWeights] {
        &self.rows
    }

    pub fn query_count(&self) -> usize {
        self.rows.len()
    }

    pub fn train_size(&self) -> usize {
        self.train_size
    }

    /// Dense diagonal `s_i(x_i)`; only meaningful when the queries are the
    /// training inputs in order.
    pub fn diagonal(&self) -> Vec<f64> {
        self.rows.iter().enumerate().map(|(i, r)| r.get(i)).collect()
    }
}

/// A predictor that can expose its smoother weights.
pub trait Smoother {
    fn train_size(&self) -> usize;

    fn predict(&self, x: &[f64]) -> f64;

    fn weights(&self, x: &[f64]) -> SmootherWeights;

    fn predict_all(&self, data: &Dataset) -> Vec<f64> {
        data.rows().map(|x| self.predict(x)).collect()
    }

    fn weight_matrix(&self, data: &Dataset) -> WeightMatrix {
        WeightMatrix {
            rows: data.rows().map(|x| self.weights(x)).collect(),
            train_size: self.train_size(),
        }
    }
}
