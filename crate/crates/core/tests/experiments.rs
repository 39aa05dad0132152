use std::collections::HashSet;
use std::io::Write as _;

use rand::Rng as _;

use treesmooth::datagen::{marsadd_sample, MarsAdd};
use treesmooth::decomp::{decompose_predictions, emse_bound_check, rep_mod_decompose, BoundStatus};
use treesmooth::ensemble::fit_forest;
use treesmooth::harness::{experiment_names, run_experiment, summarize, ExperimentSpec, Metric};
use treesmooth::metrics::estimate_dof;
use treesmooth::rng::rng_from_seed;
use treesmooth::stats::{mean, std_error};
use treesmooth::tree::fit_tree;
use treesmooth::{Dataset, ForestConfig, NoiseSpec, Smoother, SmootherWeights, TreeConfig};

fn noise(sigma: f64) -> NoiseSpec {
    NoiseSpec::new(sigma).unwrap()
}

fn small(name: &str) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(name).unwrap();
    for (k, v) in [
        ("reps", "2"),
        ("n_train", "40"),
        ("n_test", "30"),
        ("draws", "3"),
        ("dof_reps", "4"),
        ("resamples", "4"),
        ("outer", "2"),
        ("inner", "2"),
    ] {
        spec.set(k, v).unwrap();
    }
    spec
}

#[test]
fn every_synthetic_experiment_runs_small() {
    for name in experiment_names().into_iter().filter(|&n| n != "csv-real") {
        let spec = small(name);
        let records = run_experiment(&spec).unwrap();
        assert!(!records.is_empty(), "{name}");
        assert!(records.iter().all(|r| r.experiment == name && r.value.is_finite()), "{name}");
        let reps: HashSet<usize> = records.iter().map(|r| r.replication).collect();
        assert_eq!(reps.len(), 2, "{name}");
        // each (point, metric) pair appears once per replication
        let mut seen = HashSet::new();
        for r in &records {
            assert!(seen.insert((r.replication, r.point.cells(), r.metric)), "{name}: duplicate record");
        }
    }
}

#[test]
fn summary_mean_is_the_arithmetic_mean() {
    let mut spec = small("interp-by-m");
    spec.set("reps", "3").unwrap();
    let records = run_experiment(&spec).unwrap();
    for row in summarize(&records) {
        let values: Vec<f64> = records
            .iter()
            .filter(|r| r.metric == row.metric && r.point == row.point)
            .map(|r| r.value)
            .collect();
        assert_eq!(row.replications, 3);
        assert_eq!(row.mean, values.iter().sum::<f64>() / values.len() as f64);
        assert!((row.half_width - 2.0 * std_error(&values)).abs() <= 1e-12 * row.half_width.max(1.0));
    }
}

#[test]
fn seed_changes_output_and_replications_extend_a_prefix() {
    let mut a = small("depth-sweep");
    let b = run_experiment(&a).unwrap();
    a.set("reps", "3").unwrap();
    let longer = run_experiment(&a).unwrap();
    let prefix: Vec<_> = longer.iter().filter(|r| r.replication < 2).cloned().collect();
    let mut sorted = b.clone();
    sorted.sort_by_key(|r| (r.point.cells(), r.replication, r.metric));
    let mut prefix_sorted = prefix;
    prefix_sorted.sort_by_key(|r| (r.point.cells(), r.replication, r.metric));
    assert_eq!(sorted, prefix_sorted);
    a.set("seed", "5").unwrap();
    assert_ne!(run_experiment(&a).unwrap()[0].value, longer[0].value);
}

#[test]
fn csv_real_runs_on_a_local_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut file = std::fs::File::create(&path).unwrap();
    writeln!(file, "a,b,c,price").unwrap();
    let mut rng = rng_from_seed(3);
    for _ in 0..60 {
        let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        writeln!(file, "{a},{b},{c},{}", 2.0 * a - b + 0.1 * c).unwrap();
    }
    drop(file);

    let mut spec = ExperimentSpec::new("csv-real").unwrap();
    for (k, v) in [
        ("data", path.to_str().unwrap()),
        ("target", "price"),
        ("n_train", "40"),
        ("n_test", "20"),
        ("reps", "2"),
    ] {
        spec.set(k, v).unwrap();
    }
    let records = run_experiment(&spec).unwrap();
    assert!(records.iter().any(|r| r.metric == Metric::MseTest));
    assert!(records
        .iter()
        .filter(|r| r.metric == Metric::PTrain && r.point.trees == Some(1) && r.point.max_leaves.is_some_and(|l| l.as_option().is_none()))
        .all(|r| r.value == 40.0));

    spec.set("n_train", "50").unwrap();
    assert!(run_experiment(&spec).is_err(), "asking for more rows than the file has");
    spec.set("target", "missing").unwrap();
    assert!(run_experiment(&spec).is_err());
}

#[test]
fn variance_components_satisfy_the_anova_identity() {
    let mut rng = rng_from_seed(8);
    for (outer, inner, q) in [(2, 2, 1), (3, 5, 4), (7, 2, 3)] {
        let preds: Vec<Vec<Vec<f64>>> = (0..outer)
            .map(|_| (0..inner).map(|_| (0..q).map(|_| rng.random::<f64>() * 3.0).collect()).collect())
            .collect();
        let d = decompose_predictions(&preds).unwrap();
        let (o, i) = (outer as f64, inner as f64);
        // (OI - 1) total = I (O - 1) samp + O (I - 1) within
        let lhs = (o * i - 1.0) * d.total_var;
        let rhs = i * (o - 1.0) * d.samp_var + o * (i - 1.0) * d.within_z_var;
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn emse_bound_holds_for_forests() {
    let fit = |d: &Dataset, s: u64| {
        fit_forest(d, &ForestConfig::new(5, TreeConfig::default().with_feature_fraction(1.0 / 3.0)).with_seed(s))
    };
    let mut family = Vec::new();
    let mut mses = Vec::new();
    for z in 0..6 {
        let train = marsadd_sample(80, 5, noise(0.5), 100 + z).unwrap();
        let test = marsadd_sample(60, 5, noise(0.0), 200 + z).unwrap();
        let d = rep_mod_decompose(fit, &train, &test, 8, z).unwrap();
        mses.extend(d.draw_mse.iter().copied());
        family.push(d);
    }
    let check = emse_bound_check(&family, mean(&mses), std_error(&mses));
    assert_eq!(check.status, BoundStatus::Holds, "{check:?}");
    assert_eq!(emse_bound_check(&family[..1], 1.0, 0.1).status, BoundStatus::InsufficientDraws);
}

struct Constant {
    n: usize,
}

impl Smoother for Constant {
    fn train_size(&self) -> usize {
        self.n
    }

    fn predict(&self, _: &[f64]) -> f64 {
        2.5
    }

    fn weights(&self, _: &[f64]) -> SmootherWeights {
        SmootherWeights::zeros(self.n)
    }
}

#[test]
fn dof_of_label_free_and_mean_predictors() {
    let data = marsadd_sample(60, 5, noise(1.0), 4).unwrap();
    let constant = estimate_dof(|d: &Dataset, _| Ok(Constant { n: d.sample_count() }), &data, &MarsAdd, noise(1.0), 20, 1).unwrap();
    assert_eq!(constant.value, 0.0);

    // a one-leaf tree is the sample mean, whose smoother matrix has trace 1
    let stump = estimate_dof(
        |d: &Dataset, _| fit_tree(d, &TreeConfig::default().with_max_leaves(Some(1)), None),
        &data,
        &MarsAdd,
        noise(1.0),
        50,
        2,
    )
    .unwrap();
    assert!((stump.value - 1.0).abs() <= 3.0 * stump.std_error, "{stump:?}");
}
