//! Experiment registry, replication driver and record tables.
//!
//! An experiment is a named grid over the hyperparameter columns of the
//! output table. Each replication draws its own data from `base_seed` and the
//! replication index, and every grid point in the replication reuses it.
//! Records come back sorted by grid point, then replication, then metric
//! name, so output does not depend on the thread count.

mod experiments;
mod io;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Task;
use crate::error::{Error, Result};
use crate::rng::derive_path;
use crate::stats::std_error;

pub use io::{
    emit_records, emit_summaries, format_float, parse_records_csv, read_records, read_summaries, records_to_csv, records_to_json, summaries_to_csv,
    OutputFormat, RECORD_COLUMNS, SUMMARY_COLUMNS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    PTrain,
    PTest,
    KEff,
    EpGap,
    Dof,
    MseTrain,
    MseInsample,
    MseTest,
    MisclassTest,
    SampVar,
    WithinZVar,
    RepBias,
    ModVar,
    PredVar,
    WeightNormVar,
    PredVarInsample,
    WeightNormVarInsample,
}

impl Metric {
    pub const ALL: [Metric; 17] = [
        Metric::PTrain,
        Metric::PTest,
        Metric::KEff,
        Metric::EpGap,
        Metric::Dof,
        Metric::MseTrain,
        Metric::MseInsample,
        Metric::MseTest,
        Metric::MisclassTest,
        Metric::SampVar,
        Metric::WithinZVar,
        Metric::RepBias,
        Metric::ModVar,
        Metric::PredVar,
        Metric::WeightNormVar,
        Metric::PredVarInsample,
        Metric::WeightNormVarInsample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::PTrain => "p_train",
            Metric::PTest => "p_test",
            Metric::KEff => "k_eff",
            Metric::EpGap => "ep_gap",
            Metric::Dof => "dof",
            Metric::MseTrain => "mse_train",
            Metric::MseInsample => "mse_insample",
            Metric::MseTest => "mse_test",
            Metric::MisclassTest => "misclass_test",
            Metric::SampVar => "samp_var",
            Metric::WithinZVar => "within_z_var",
            Metric::RepBias => "rep_bias",
            Metric::ModVar => "mod_var",
            Metric::PredVar => "pred_var",
            Metric::WeightNormVar => "weight_norm_var",
            Metric::PredVarInsample => "pred_var_insample",
            Metric::WeightNormVarInsample => "weight_norm_var_insample",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric {s:?}")))
    }
}

/// Hyperparameter columns of the record table, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Trees,
    M,
    MaxLeaves,
    Bootstrap,
    Sigma,
    Delta,
    Eta,
    Rounds,
}

impl Axis {
    pub const ALL: [Axis; 8] = [
        Axis::Trees,
        Axis::M,
        Axis::MaxLeaves,
        Axis::Bootstrap,
        Axis::Sigma,
        Axis::Delta,
        Axis::Eta,
        Axis::Rounds,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Axis::Trees => "B",
            Axis::M => "m",
            Axis::MaxLeaves => "max_leaves",
            Axis::Bootstrap => "bootstrap",
            Axis::Sigma => "sigma",
            Axis::Delta => "delta",
            Axis::Eta => "eta",
            Axis::Rounds => "rounds",
        }
    }

    fn from_key(key: &str) -> Option<Axis> {
        Axis::ALL.into_iter().find(|a| a.column() == key)
    }
}

/// Leaf budget of a tree; `Unlimited` grows to purity and prints as `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeafLimit {
    Leaves(usize),
    Unlimited,
}

impl LeafLimit {
    pub fn as_option(self) -> Option<usize> {
        match self {
            LeafLimit::Leaves(k) => Some(k),
            LeafLimit::Unlimited => None,
        }
    }
}

impl fmt::Display for LeafLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeafLimit::Leaves(k) => write!(f, "{k}"),
            LeafLimit::Unlimited => f.write_str("none"),
        }
    }
}

impl FromStr for LeafLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(LeafLimit::Unlimited),
            _ => s
                .parse()
                .map(LeafLimit::Leaves)
                .map_err(|_| Error::invalid(format!("max_leaves must be an integer or \"none\", got {s:?}"))),
        }
    }
}

impl Serialize for LeafLimit {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LeafLimit::Leaves(k) => serializer.serialize_u64(*k as u64),
            LeafLimit::Unlimited => serializer.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for LeafLimit {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(k) => Ok(LeafLimit::Leaves(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One hyperparameter setting; `None` marks a column the experiment does
/// not use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(rename = "B")]
    pub trees: Option<usize>,
    pub m: Option<f64>,
    pub max_leaves: Option<LeafLimit>,
    pub bootstrap: Option<bool>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub rounds: Option<usize>,
}

impl GridPoint {
    /// Cell texts in column order, blank when absent.
    pub fn cells(&self) -> [String; 8] {
        fn cell<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        let float = |v: Option<f64>| v.map(io::format_float).unwrap_or_default();
        [
            cell(&self.trees),
            float(self.m),
            cell(&self.max_leaves),
            cell(&self.bootstrap),
            float(self.sigma),
            float(self.delta),
            float(self.eta),
            cell(&self.rounds),
        ]
    }

    fn key(&self) -> String {
        self.cells().join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub replication: usize,
    #[serde(flatten)]
    pub point: GridPoint,
    pub metric: Metric,
    pub value: f64,
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Value lists per column. Columns an experiment does not use stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grids {
    pub trees: Vec<usize>,
    pub m: Vec<f64>,
    pub max_leaves: Vec<LeafLimit>,
    pub bootstrap: Vec<bool>,
    pub sigma: Vec<f64>,
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
    pub rounds: Vec<usize>,
}

impl Grids {
    fn len_of(&self, axis: Axis) -> usize {
        match axis {
            Axis::Trees => self.trees.len(),
            Axis::M => self.m.len(),
            Axis::MaxLeaves => self.max_leaves.len(),
            Axis::Bootstrap => self.bootstrap.len(),
            Axis::Sigma => self.sigma.len(),
            Axis::Delta => self.delta.len(),
            Axis::Eta => self.eta.len(),
            Axis::Rounds => self.rounds.len(),
        }
    }

    fn has_duplicates(&self, axis: Axis) -> bool {
        fn dup<T: PartialEq>(v: &[T]) -> bool {
            v.iter().enumerate().any(|(k, a)| v[..k].contains(a))
        }
        match axis {
            Axis::Trees => dup(&self.trees),
            Axis::M => dup(&self.m),
            Axis::MaxLeaves => dup(&self.max_leaves),
            Axis::Bootstrap => dup(&self.bootstrap),
            Axis::Sigma => dup(&self.sigma),
            Axis::Delta => dup(&self.delta),
            Axis::Eta => dup(&self.eta),
            Axis::Rounds => dup(&self.rounds),
        }
    }

    /// Cartesian product over the nonempty columns, last column fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut points = vec![GridPoint::default()];
        for axis in Axis::ALL {
            if self.len_of(axis) == 0 {
                continue;
            }
            points = points
                .into_iter()
                .flat_map(|p| {
                    (0..self.len_of(axis)).map(move |k| {
                        let mut q = p.clone();
                        match axis {
                            Axis::Trees => q.trees = Some(self.trees[k]),
                            Axis::M => q.m = Some(self.m[k]),
                            Axis::MaxLeaves => q.max_leaves = Some(self.max_leaves[k]),
                            Axis::Bootstrap => q.bootstrap = Some(self.bootstrap[k]),
                            Axis::Sigma => q.sigma = Some(self.sigma[k]),
                            Axis::Delta => q.delta = Some(self.delta[k]),
                            Axis::Eta => q.eta = Some(self.eta[k]),
                            Axis::Rounds => q.rounds = Some(self.rounds[k]),
                        }
                        q
                    })
                })
                .collect();
        }
        points
    }

    fn set(&mut self, axis: Axis, values: &str) -> Result<()> {
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(Error::invalid(format!("empty value list for {}", axis.column())));
        }
        fn parse_all<T>(items: &[&str], parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
            items.iter().map(|s| parse(s)).collect()
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::invalid(format!("expected an integer, got {s:?}")));
        match axis {
            Axis::Trees => self.trees = parse_all(&items, int)?,
            Axis::M => self.m = parse_all(&items, parse_fraction)?,
            Axis::MaxLeaves => self.max_leaves = parse_all(&items, str::parse)?,
            Axis::Bootstrap => {
                self.bootstrap = parse_all(&items, |s| {
                    s.parse()
                        .map_err(|_| Error::invalid(format!("bootstrap must be true or false, got {s:?}")))
                })?
            }
            Axis::Sigma => self.sigma = parse_all(&items, parse_fraction)?,
            Axis::Delta => self.delta = parse_all(&items, parse_fraction)?,
            Axis::Eta => self.eta = parse_all(&items, parse_fraction)?,
            Axis::Rounds => self.rounds = parse_all(&items, int)?,
        }
        Ok(())
    }
}

/// Parse `0.25` or `1/3`.
pub fn parse_fraction(s: &str) -> Result<f64> {
    let bad = || Error::invalid(format!("expected a number or fraction, got {s:?}"));
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// External CSV data for `csv-real`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSource {
    pub path: PathBuf,
    pub target: String,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub grids: Grids,
    pub replications: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Input dimension of the synthetic data.
    pub feature_count: usize,
    pub base_seed: u64,
    /// Re-initialisations per training set for `rep-mod`.
    pub model_draws: usize,
    /// Label resamples behind each `dof` value.
    pub dof_replications: usize,
    /// Outcome resamples per replication for the predictive-variance runs.
    pub outcome_resamples: usize,
    /// Outer and inner loop sizes for `var-decomp`.
    pub outer_reps: usize,
    pub inner_reps: usize,
    pub data: Option<CsvSource>,
}

/// Catalog entry.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub axes: &'static [Axis],
}

pub const CATALOG: &[ExperimentInfo] = &[
    ExperimentInfo {
        name: "interp-by-m",
        description: "interpolating forests without bootstrap, by ensemble size and m (default m grid 1/d, 1/3, 2/3, 1 is a choice)",
        axes: &[Axis::Trees, Axis::M, Axis::Bootstrap, Axis::Sigma],
    },
    ExperimentInfo {
        name: "depth-sweep",
        description: "forests of leaf-limited trees without bootstrap, m = 1/3",
        axes: &[Axis::Trees, Axis::M, Axis::MaxLeaves, Axis::Bootstrap, Axis::Sigma],
    },
    ExperimentInfo {
        name: "boost",
        description: "gradient boosting effective parameters by rounds and tree size",
        axes: &[Axis::M, Axis::MaxLeaves, Axis::Sigma, Axis::Eta, Axis::Rounds],
    },
    ExperimentInfo {
        name: "dof-grid",
        description: "covariance degrees of freedom next to effective parameters and errors",
        axes: &[Axis::Trees, Axis::M, Axis::MaxLeaves, Axis::Bootstrap, Axis::Sigma],
    },
    ExperimentInfo {
        name: "bootstrap-effect",
        description: "full-depth forests with and without bootstrap, m = 1/3",
        axes: &[Axis::Trees, Axis::M, Axis::Bootstrap, Axis::Sigma],
    },
    ExperimentInfo {
        name: "m-gap",
        description: "train-test effective parameter gap of bootstrapped full-depth forests by m",
        axes: &[Axis::Trees, Axis::M, Axis::Bootstrap, Axis::Sigma],
    },
    ExperimentInfo {
        name: "snr-sweep",
        description: "in-sample and out-of-sample error by noise level, with and without bootstrap",
        axes: &[Axis::Trees, Axis::M, Axis::Bootstrap, Axis::Sigma],
    },
    ExperimentInfo {
        name: "dissimilarity",
        description: "smoothing and error on test inputs offset from the training inputs by up to delta",
        axes: &[Axis::Trees, Axis::M, Axis::Bootstrap, Axis::Sigma, Axis::Delta],
    },
    ExperimentInfo {
        name: "var-decomp",
        description: "prediction variance split into sampling and within-sample parts",
        axes: &[Axis::Trees, Axis::M, Axis::Bootstrap, Axis::Sigma],
    },
    ExperimentInfo {
        name: "rep-mod",
        description: "representation bias and model variability with oracle selection of the best draw",
        axes: &[Axis::Trees, Axis::M, Axis::MaxLeaves, Axis::Sigma, Axis::Delta],
    },
    ExperimentInfo {
        name: "pred-variance-adaptive",
        description: "true predictive variance against ||s||^2 sigma^2 for standard forests",
        axes: &[Axis::Trees, Axis::M, Axis::MaxLeaves, Axis::Sigma],
    },
    ExperimentInfo {
        name: "pred-variance-randomized",
        description: "true predictive variance against ||s||^2 sigma^2 for totally randomized forests",
        axes: &[Axis::Trees, Axis::M, Axis::MaxLeaves, Axis::Sigma],
    },
    ExperimentInfo {
        name: "pred-variance-frozen",
        description: "true predictive variance against ||s||^2 sigma^2 for frozen-structure forests",
        axes: &[Axis::Trees, Axis::M, Axis::MaxLeaves, Axis::Sigma],
    },
    ExperimentInfo {
        name: "csv-real",
        description: "interpolating and leaf-limited forests on a CSV dataset (set data=, target=, task=)",
        axes: &[Axis::Trees, Axis::M, Axis::MaxLeaves, Axis::Bootstrap],
    },
];

pub fn experiment_names() -> Vec<&'static str> {
    CATALOG.iter().map(|e| e.name).collect()
}

pub fn experiment_info(name: &str) -> Result<&'static ExperimentInfo> {
    CATALOG.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownExperiment {
        name: name.to_string(),
        valid: experiment_names().join(", "),
    })
}

const ENSEMBLE_SIZES: [usize; 6] = [1, 2, 5, 10, 20, 50];
const THIRD: f64 = 1.0 / 3.0;

impl ExperimentSpec {
    /// Default desk-scale settings of a catalog experiment.
    pub fn new(name: &str) -> Result<Self> {
        experiment_info(name)?;
        let d = 5;
        let mut g = Grids {
            trees: ENSEMBLE_SIZES.to_vec(),
            m: vec![THIRD],
            bootstrap: vec![false],
            sigma: vec![1.0],
            ..Grids::default()
        };
        match name {
            "interp-by-m" => g.m = vec![1.0 / d as f64, THIRD, 2.0 * THIRD, 1.0],
            "depth-sweep" => {
                g.max_leaves = vec![LeafLimit::Leaves(10), LeafLimit::Leaves(100), LeafLimit::Leaves(500)];
            }
            "boost" => {
                g.trees.clear();
                g.bootstrap.clear();
                g.m = vec![1.0];
                g.max_leaves = vec![LeafLimit::Leaves(8), LeafLimit::Leaves(32)];
                g.eta = vec![0.05];
                g.rounds = vec![1, 10, 25, 50, 100, 200];
            }
            "dof-grid" => {
                g.trees = vec![1, 5, 10, 25, 50];
                g.m = vec![THIRD, 2.0 * THIRD, 1.0];
                g.max_leaves = vec![LeafLimit::Leaves(20), LeafLimit::Unlimited];
                g.bootstrap = vec![true, false];
            }
            "bootstrap-effect" => g.bootstrap = vec![false, true],
            "m-gap" => {
                g.m = vec![1.0 / d as f64, THIRD, 2.0 * THIRD, 1.0];
                g.bootstrap = vec![true];
            }
            "snr-sweep" => {
                g.bootstrap = vec![false, true];
                g.sigma = vec![0.0, 0.5, 1.0, 2.0];
            }
            "dissimilarity" => {
                g.sigma = vec![0.0];
                g.delta = vec![0.0, 0.05, 0.1, 0.3];
            }
            "var-decomp" => {
                g.bootstrap = vec![false, true];
                g.sigma = vec![0.5, 1.0, 2.0];
            }
            "rep-mod" => {
                g.trees = vec![1, 5, 20, 50];
                g.bootstrap.clear();
                g.max_leaves = vec![LeafLimit::Unlimited];
                g.sigma = vec![0.0];
                g.delta = vec![0.1];
            }
            "pred-variance-adaptive" | "pred-variance-randomized" | "pred-variance-frozen" => {
                g.trees = vec![1, 5, 20, 50];
                g.bootstrap.clear();
                g.max_leaves = vec![
                    LeafLimit::Leaves(8),
                    LeafLimit::Leaves(32),
                    LeafLimit::Leaves(128),
                    LeafLimit::Unlimited,
                ];
            }
            "csv-real" => {
                g.sigma.clear();
                g.max_leaves = vec![LeafLimit::Leaves(10), LeafLimit::Leaves(100), LeafLimit::Unlimited];
            }
            _ => unreachable!("catalog and defaults out of sync"),
        }
        Ok(ExperimentSpec {
            name: name.to_string(),
            grids: g,
            replications: 10,
            n_train: 500,
            n_test: 500,
            feature_count: d,
            base_seed: 0,
            model_draws: crate::decomp::DEFAULT_MODEL_DRAWS,
            dof_replications: crate::metrics::DEFAULT_DOF_REPLICATIONS,
            outcome_resamples: crate::decomp::DEFAULT_OUTCOME_RESAMPLES,
            outer_reps: 5,
            inner_reps: 5,
            data: None,
        })
    }

    pub fn info(&self) -> Result<&'static ExperimentInfo> {
        experiment_info(&self.name)
    }

    /// Apply a `key=value` override. Grid columns take comma-separated
    /// lists; `m`, `sigma`, `delta` and `eta` accept fractions like `1/3`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let count = || {
            value
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("{key} must be a nonnegative integer, got {value:?}")))
        };
        if let Some(axis) = Axis::from_key(key) {
            if !self.info()?.axes.contains(&axis) {
                return Err(Error::invalid(format!("experiment {} has no {key} column", self.name)));
            }
            return self.grids.set(axis, value);
        }
        match key {
            "reps" | "replications" => self.replications = count()?,
            "n_train" => self.n_train = count()?,
            "n_test" => self.n_test = count()?,
            "d" => self.feature_count = count()?,
            "seed" => {
                self.base_seed = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("seed must be an unsigned integer, got {value:?}")))?
            }
            "draws" => self.model_draws = count()?,
            "dof_reps" => self.dof_replications = count()?,
            "resamples" => self.outcome_resamples = count()?,
            "outer" => self.outer_reps = count()?,
            "inner" => self.inner_reps = count()?,
            "data" | "target" | "task" => {
                let source = self.data.get_or_insert_with(|| CsvSource {
                    path: PathBuf::new(),
                    target: String::new(),
                    task: Task::Regression,
                });
                match key {
                    "data" => source.path = PathBuf::from(value),
                    "target" => source.target = value.to_string(),
                    _ => source.task = value.parse()?,
                }
            }
            _ => return Err(Error::invalid(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let info = self.info()?;
        for axis in Axis::ALL {
            let used = info.axes.contains(&axis);
            let len = self.grids.len_of(axis);
            if used && len == 0 {
                return Err(Error::invalid(format!("empty grid for {}", axis.column())));
            }
            if !used && len > 0 {
                return Err(Error::invalid(format!("experiment {} has no {} column", self.name, axis.column())));
            }
        }
        if Axis::ALL.into_iter().any(|a| self.grids.has_duplicates(a)) {
            return Err(Error::invalid("grid values must be distinct"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.n_train < 2 || (self.name != "csv-real" && self.n_test == 0) {
            return Err(Error::invalid("n_train must be at least 2 and n_test at least 1"));
        }
        let g = &self.grids;
        if g.trees.contains(&0) {
            return Err(Error::invalid("B values must be at least 1"));
        }
        if g.m.iter().any(|&m| !(m > 0.0 && m <= 1.0)) {
            return Err(Error::invalid("m values must lie in (0, 1]"));
        }
        if g.max_leaves.contains(&LeafLimit::Leaves(0)) {
            return Err(Error::invalid("max_leaves values must be at least 1"));
        }
        if g.sigma.iter().chain(&g.delta).any(|&v| v < 0.0) {
            return Err(Error::invalid("sigma and delta values must be nonnegative"));
        }
        if g.eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::invalid("eta values must lie in (0, 1]"));
        }
        let needs_noise = matches!(
            self.name.as_str(),
            "dof-grid" | "var-decomp" | "pred-variance-adaptive" | "pred-variance-randomized" | "pred-variance-frozen"
        );
        if needs_noise && g.sigma.contains(&0.0) {
            return Err(Error::invalid(format!("experiment {} is undefined at sigma = 0", self.name)));
        }
        match self.name.as_str() {
            "dof-grid" if self.dof_replications < 2 => Err(Error::invalid("dof_reps must be at least 2")),
            "rep-mod" if self.model_draws < 2 => Err(Error::invalid("draws must be at least 2")),
            "var-decomp" if self.outer_reps < 2 || self.inner_reps < 2 => {
                Err(Error::invalid("outer and inner must be at least 2"))
            }
            n if n.starts_with("pred-variance") && self.outcome_resamples < 3 => {
                Err(Error::invalid("resamples must be at least 3"))
            }
            "csv-real" => match &self.data {
                Some(s) if !s.path.as_os_str().is_empty() && !s.target.is_empty() => Ok(()),
                _ => Err(Error::invalid("csv-real needs data=<path> and target=<column>")),
            },
            _ => Ok(()),
        }
    }

    /// Seed of replication `rep`; independent of the grid.
    pub fn replication_seed(&self, rep: usize) -> u64 {
        derive_path(self.base_seed, &[rep as u64])
    }
}

/// Run every grid point of every replication and return the records in
/// deterministic order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    let points = spec.grids.points();
    let order: HashMap<String, usize> = points.iter().enumerate().map(|(k, p)| (p.key(), k)).collect();

    let per_rep: Vec<Vec<(GridPoint, Metric, f64)>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| experiments::run_replication(spec, rep))
        .collect::<Result<_>>()?;

    let mut keyed = Vec::new();
    for (rep, rows) in per_rep.into_iter().enumerate() {
        for (point, metric, value) in rows {
            let index = *order
                .get(&point.key())
                .unwrap_or_else(|| panic!("experiment produced a point outside its grid: {}", point.key()));
            keyed.push((index, rep, metric.name(), point, metric, value));
        }
    }
    keyed.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    Ok(keyed
        .into_iter()
        .map(|(_, replication, _, point, metric, value)| ExperimentRecord {
            experiment: spec.name.clone(),
            replication,
            point,
            metric,
            value,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    #[serde(flatten)]
    pub point: GridPoint,
    pub metric: Metric,
    pub mean: f64,
    /// Twice the standard error of the mean over replications.
    pub half_width: f64,
    pub replications: usize,
    /// Set when only one replication backs the row, so `half_width` is 0
    /// by convention rather than by measurement.
    pub single_replication: bool,
}

/// Mean and 2-SEM half-width per (experiment, grid point, metric), in order
/// of first appearance.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut index: HashMap<(String, String, Metric), usize> = HashMap::new();
    let mut groups: Vec<(&ExperimentRecord, Vec<f64>)> = Vec::new();
    for r in records {
        let key = (r.experiment.clone(), r.point.key(), r.metric);
        match index.get(&key) {
            Some(&g) => groups[g].1.push(r.value),
            None => {
                index.insert(key, groups.len());
                groups.push((r, vec![r.value]));
            }
        }
    }
    groups
        .into_iter()
        .map(|(first, values)| SummaryRow {
            experiment: first.experiment.clone(),
            point: first.point.clone(),
            metric: first.metric,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            half_width: 2.0 * std_error(&values),
            replications: values.len(),
            single_replication: values.len() == 1,
        })
        .collect()
}
