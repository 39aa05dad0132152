//! Acceptance checks at desk scale (MARSadd, n_train = n_test = 500, 10
//! replications). Prints one PASS/FAIL line per criterion.
//!
//! Reference values are computed here from first principles: training rows
//! are routed through the fitted split nodes by hand, forest weights are
//! averaged densely, k-NN smoothers are built directly, and tiny CART
//! instances are enumerated exhaustively.

use std::collections::BTreeMap;
use std::process::Command;

use rand::Rng as _;

use treesmooth::datagen::{marsadd_sample, MarsAdd};
use treesmooth::decomp::{
    predictive_variance_experiment, rep_mod_decompose, ForestVariant, PredictiveVarianceRecord,
    PredictiveVarianceSettings,
};
use treesmooth::ensemble::{fit_boost, fit_forest, StructureKind};
use treesmooth::harness::{run_experiment, ExperimentRecord, ExperimentSpec, GridPoint, LeafLimit, Metric};
use treesmooth::metrics::{effective_params, estimate_dof};
use treesmooth::rng::{derive_seed, rng_from_seed, Rng};
use treesmooth::stats::{mean, std_error};
use treesmooth::tree::Node;
use treesmooth::{BoostConfig, Dataset, ForestConfig, NoiseSpec, SmootherWeights, TreeConfig, TreeModel, WeightMatrix};

const N: usize = 500;
const THIRD: f64 = 1.0 / 3.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn noise(sigma: f64) -> NoiseSpec {
    NoiseSpec::new(sigma).unwrap()
}

fn run(name: &str) -> Vec<ExperimentRecord> {
    run_experiment(&ExperimentSpec::new(name).unwrap()).unwrap()
}

/// Per-replication values of `metric` at the points accepted by `keep`,
/// ordered by replication.
fn series(records: &[ExperimentRecord], metric: Metric, keep: impl Fn(&GridPoint) -> bool) -> Vec<f64> {
    let mut by_rep: BTreeMap<usize, f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == metric && keep(&r.point)) {
        assert!(by_rep.insert(r.replication, r.value).is_none(), "selection is not unique");
    }
    by_rep.into_values().collect()
}

fn paired(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn is(a: Option<f64>, b: f64) -> bool {
    a == Some(b)
}

// Reference tree routing and weights.

fn route(tree: &TreeModel, x: &[f64]) -> usize {
    let mut node = 0;
    loop {
        match tree.nodes()[node] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => node = if x[feature] <= threshold { left } else { right },
            Node::Leaf(_) => return node,
        }
    }
}

/// `c_i / sum c` over the training rows that reach the query's terminal node.
fn brute_tree_weights(tree: &TreeModel, data: &Dataset, x: &[f64]) -> Vec<f64> {
    let target = route(tree, x);
    let c = tree.multiplicities();
    let members: Vec<usize> = (0..data.sample_count())
        .filter(|&i| c[i] > 0.0 && route(tree, data.row(i)) == target)
        .collect();
    let total: f64 = members.iter().map(|&i| c[i]).sum();
    let mut w = vec![0.0; data.sample_count()];
    for i in members {
        w[i] = c[i] / total;
    }
    w
}

fn brute_forest_weights(trees: &[TreeModel], data: &Dataset, x: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; data.sample_count()];
    for t in trees {
        for (a, w) in acc.iter_mut().zip(brute_tree_weights(t, data, x)) {
            *a += w;
        }
    }
    acc.iter().map(|a| a / trees.len() as f64).collect()
}

fn dense_dot(w: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(y).filter(|(w, _)| **w != 0.0).map(|(w, y)| w * y).sum()
}

fn random_small_dataset(rng: &mut Rng) -> Dataset {
    let n = rng.random_range(2..=50);
    let d = rng.random_range(1..=4);
    let coarse = rng.random_bool(0.3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let v: f64 = rng.random();
                    if coarse {
                        (v * 4.0).floor() / 4.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let y = (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
    Dataset::from_rows(&rows, y).unwrap()
}

fn random_forest_config(rng: &mut Rng) -> ForestConfig {
    let m = [0.25, 0.5, 1.0][rng.random_range(0..3)];
    let leaves = if rng.random_bool(0.5) {
        None
    } else {
        Some(rng.random_range(1..12))
    };
    ForestConfig::new(rng.random_range(1..=8), TreeConfig::default().with_feature_fraction(m).with_max_leaves(leaves))
        .with_bootstrap(rng.random_bool(0.5))
        .with_structure(if rng.random_bool(0.2) {
            StructureKind::TotallyRandomized
        } else {
            StructureKind::Adaptive
        })
        .with_seed(rng.random())
}

/// Random forests on random small datasets, `per_forest` queries each, until
/// `total` (forest, query) pairs have been visited.
fn for_each_forest_query(seed: u64, total: usize, per_forest: usize, mut visit: impl FnMut(&Dataset, &treesmooth::ForestModel, &[f64])) {
    let mut rng = rng_from_seed(seed);
    let mut done = 0;
    while done < total {
        let data = random_small_dataset(&mut rng);
        let forest = fit_forest(&data, &random_forest_config(&mut rng)).unwrap();
        for q in 0..per_forest.min(total - done) {
            let x: Vec<f64> = if q % 3 == 0 {
                data.row(rng.random_range(0..data.sample_count())).to_vec()
            } else {
                (0..data.feature_count()).map(|_| rng.random::<f64>() * 1.2 - 0.1).collect()
            };
            visit(&data, &forest, &x);
        }
        done += per_forest.min(total - done);
    }
}

fn criterion_1() -> Outcome {
    let mut mismatches = 0;
    let mut queries = 0;
    for_each_forest_query(1, 1000, 10, |data, forest, x| {
        queries += 1;
        let y = data.outcomes();
        let mut ok = true;
        for tree in forest.trees() {
            let expected = brute_tree_weights(tree, data, x);
            ok &= tree.tree_weights(x).to_dense() == expected;
            ok &= tree.predict(x) == dense_dot(&expected, y);
        }
        let expected = brute_forest_weights(forest.trees(), data, x);
        ok &= forest.forest_weights(x).to_dense() == expected;
        ok &= forest.predict_forest(x) == dense_dot(&expected, y);
        if !ok {
            mismatches += 1;
        }
    });
    outcome(
        mismatches == 0,
        format!("{queries} queries, {mismatches} with tree/forest weights or predictions differing from the routed reference"),
    )
}

fn criterion_2(interp: &[ExperimentRecord]) -> Outcome {
    let mut bad = Vec::new();
    for b in [1, 10, 50] {
        for metric in [Metric::PTrain, Metric::MseTrain] {
            let want = if metric == Metric::PTrain { N as f64 } else { 0.0 };
            let values: Vec<f64> = interp
                .iter()
                .filter(|r| r.metric == metric && r.point.trees == Some(b))
                .map(|r| r.value)
                .collect();
            if values.is_empty() || values.iter().any(|&v| v != want) {
                bad.push(format!("{} at B={b}", metric.name()));
            }
        }
    }
    // every member of an interpolating forest is itself a 1-NN smoother at its training rows
    let data = marsadd_sample(N, 5, noise(1.0), 77).unwrap();
    let forest = fit_forest(&data, &ForestConfig::new(50, TreeConfig::default().with_feature_fraction(THIRD)).with_seed(5)).unwrap();
    let trees_ok = forest
        .trees()
        .iter()
        .all(|t| (0..N).all(|i| t.tree_weights(data.row(i)) == SmootherWeights::unit(i, N)));
    if !trees_ok {
        bad.push("member tree weights at training rows are not unit vectors".into());
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "p_train = 500 and mse_train = 0 in every replication and m for B in {1,10,50}; all 50 member trees are unit smoothers".to_string()
        } else {
            bad.join("; ")
        },
    )
}

fn criterion_3(interp: &[ExperimentRecord]) -> Outcome {
    let at = |b: usize, m: f64| series(interp, Metric::PTest, |p| p.trees == Some(b) && is(p.m, m));
    let single = at(1, THIRD);
    let forest = at(50, THIRD);
    let wins = forest.iter().zip(&single).filter(|(f, s)| f < s).count();
    let first = wins == single.len() && single.len() == 10;

    let mut ms: Vec<f64> = interp.iter().filter_map(|r| r.point.m).collect();
    ms.sort_by(f64::total_cmp);
    ms.dedup();
    let bands: Vec<(f64, f64)> = ms
        .iter()
        .map(|&m| {
            let v = at(50, m);
            (mean(&v), 2.0 * std_error(&v))
        })
        .collect();
    let monotone = bands.windows(2).all(|w| {
        let ((a, ha), (b, hb)) = (w[0], w[1]);
        b <= a || (b - a).abs() <= ha + hb
    });
    let listing: Vec<String> = ms
        .iter()
        .zip(&bands)
        .map(|(m, (v, h))| format!("m={m:.3}: {v:.1}+-{h:.1}"))
        .collect();
    outcome(
        first && monotone,
        format!(
            "B=50 below B=1 in {wins}/{} replications; p_test at B=50 by m [{}] {}",
            single.len(),
            listing.join(", "),
            if monotone { "non-increasing" } else { "increases with m" }
        ),
    )
}

fn knn_matrix(k: usize, queries: usize, seed: u64) -> WeightMatrix {
    let train = marsadd_sample(N, 5, noise(0.0), seed).unwrap();
    let probe = marsadd_sample(queries, 5, noise(0.0), seed + 1).unwrap();
    let rows = probe
        .rows()
        .map(|x| {
            let mut dist: Vec<(f64, usize)> = train
                .rows()
                .enumerate()
                .map(|(i, t)| (t.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            SmootherWeights::new(dist[..k].iter().map(|&(_, i)| (i, 1.0 / k as f64)).collect(), N).unwrap()
        })
        .collect();
    WeightMatrix::new(rows, N).unwrap()
}

fn criterion_4(forest_runs: &[&[ExperimentRecord]]) -> Outcome {
    let mut evaluated = 0;
    let mut out_of_range = 0;
    for records in forest_runs {
        for r in records.iter().filter(|r| r.metric == Metric::KEff) {
            evaluated += 1;
            if !(r.value >= 1.0 && r.value <= N as f64) {
                out_of_range += 1;
            }
        }
    }
    let mut knn = Vec::new();
    let mut knn_ok = true;
    for k in [1, 2, 5, 500] {
        let p = effective_params(&knn_matrix(k, 50, 40 + k as u64)).unwrap();
        let want = N as f64 / k as f64;
        let ok = if k <= 2 { p == want } else { ((p - want) / want).abs() <= 1e-12 };
        knn_ok &= ok;
        knn.push(format!("k={k}: p={p}"));
    }
    outcome(
        evaluated > 0 && out_of_range == 0 && knn_ok,
        format!(
            "{evaluated} k_eff values, {out_of_range} outside [1, {N}]; k-NN {} (k=1,2 exact, k=5,500 within 1e-12 relative)",
            knn.join(", ")
        ),
    )
}

fn criterion_5(depth: &[ExperimentRecord]) -> Outcome {
    let mut lines = Vec::new();
    let mut nonneg = true;
    let mut means = Vec::new();
    for leaves in [10, 100, 500] {
        let v = series(depth, Metric::EpGap, |p| {
            p.trees == Some(50) && p.max_leaves == Some(LeafLimit::Leaves(leaves))
        });
        let (m, h) = (mean(&v), 2.0 * std_error(&v));
        nonneg &= m - h >= -0.05 * N as f64;
        means.push(m);
        lines.push(format!("{leaves} leaves: {m:.2}+-{h:.2}"));
    }
    let largest = means[2] > means[0] && means[2] > means[1];
    outcome(nonneg && largest, format!("ep_gap at B=50, {}", lines.join(", ")))
}

fn criterion_6() -> Outcome {
    let data = marsadd_sample(200, 5, noise(1.0), 11).unwrap();
    let interpolating = estimate_dof(
        |d: &Dataset, s| fit_forest(d, &ForestConfig::new(10, TreeConfig::default().with_feature_fraction(THIRD)).with_seed(s)),
        &data,
        &MarsAdd,
        noise(1.0),
        50,
        3,
    )
    .unwrap();
    let exact = interpolating.value == 200.0 && interpolating.std_error == 0.0;

    let frozen = fit_forest(
        &data,
        &ForestConfig::new(20, TreeConfig::default().with_feature_fraction(THIRD).with_max_leaves(Some(32)))
            .with_structure(StructureKind::TotallyRandomized)
            .with_seed(9),
    )
    .unwrap();
    let trace: f64 = (0..data.sample_count())
        .map(|i| brute_forest_weights(frozen.trees(), &data, data.row(i))[i])
        .sum();
    let estimate = estimate_dof(|d: &Dataset, _| frozen.refit_leaves(d.outcomes()), &data, &MarsAdd, noise(1.0), 50, 4).unwrap();
    let z = (estimate.value - trace) / estimate.std_error;
    outcome(
        exact && z.abs() <= 3.0,
        format!(
            "interpolating forest df={} (SE {}); frozen smoother df={:.2} vs trace {:.2} ({:+.2} SE)",
            interpolating.value, interpolating.std_error, estimate.value, trace, z
        ),
    )
}

fn criterion_7(boost: &[ExperimentRecord]) -> Outcome {
    let mut rng = rng_from_seed(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=4);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
        let y: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let data = Dataset::from_rows(&rows, y.clone()).unwrap();
        let eta = [0.05, 0.5, 1.0][rng.random_range(0..3)];
        let tree = TreeConfig::default()
            .with_feature_fraction([0.5, 1.0][rng.random_range(0..2)])
            .with_max_leaves(Some(rng.random_range(2..=6)))
            .with_seed(rng.random());
        let model = fit_boost(&data, &BoostConfig::new(rng.random_range(1..=10), eta, tree)).unwrap();
        let probes = rows.iter().cloned().chain((0..10).map(|_| (0..d).map(|_| rng.random()).collect()));
        for x in probes {
            let staged = model.predict_staged(&x);
            let via_weights = model.boost_weights(&x).dot(&y);
            worst = worst.max((staged - via_weights).abs() / staged.abs().max(1e-300));
        }
    }
    let identity = worst <= 1e-10;

    let mut trend = true;
    let mut lines = Vec::new();
    for leaves in [8, 32] {
        let at = |metric, rounds| {
            series(boost, metric, |p| p.max_leaves == Some(LeafLimit::Leaves(leaves)) && p.rounds == Some(rounds))
        };
        let grid = [1, 10, 25, 50, 100, 200];
        for metric in [Metric::PTrain, Metric::PTest] {
            let means: Vec<f64> = grid.iter().map(|&r| mean(&at(metric, r))).collect();
            trend &= means.windows(2).all(|w| w[1] > w[0]);
        }
        let gap = at(Metric::EpGap, 200);
        let (m, h) = (mean(&gap), 2.0 * std_error(&gap));
        trend &= m - h > 0.0;
        lines.push(format!("{leaves} leaves gap@200 {m:.1}+-{h:.1}"));
    }
    outcome(
        identity && trend,
        format!(
            "worst relative weight/staged difference {worst:.1e} over 100 instances; p_train, p_test increasing in rounds: {trend}; {}",
            lines.join(", ")
        ),
    )
}

fn criterion_8(snr: &[ExperimentRecord]) -> Outcome {
    let pick = |metric, b: usize, boot: bool, sigma: f64| {
        series(snr, metric, |p| p.trees == Some(b) && p.bootstrap == Some(boot) && is(p.sigma, sigma))
    };
    let forest = pick(Metric::MseTest, 50, false, 0.0);
    let tree = pick(Metric::MseTest, 1, false, 0.0);
    let wins = forest.iter().zip(&tree).filter(|(f, t)| f < t).count();

    let excess = paired(&pick(Metric::MseInsample, 50, true, 0.0), &pick(Metric::MseInsample, 50, false, 0.0));
    let (em, eh) = (mean(&excess), 2.0 * std_error(&excess));

    let gain = paired(&pick(Metric::MseInsample, 1, true, 2.0), &pick(Metric::MseInsample, 50, true, 2.0));
    let (gm, gh) = (mean(&gain), 2.0 * std_error(&gain));
    outcome(
        wins >= 9 && em - eh > 0.0 && gm - gh > 0.0,
        format!(
            "sigma=0: forest beats tree in {wins}/{} reps, bagged minus interpolating in-sample {em:.3}+-{eh:.3}; sigma=2: bagged tree minus bagged forest in-sample {gm:.3}+-{gh:.3}",
            tree.len()
        ),
    )
}

fn criterion_9(dis: &[ExperimentRecord]) -> Outcome {
    let at = |metric, b: usize, delta: f64| series(dis, metric, |p| p.trees == Some(b) && is(p.delta, delta));
    let k: Vec<f64> = [0.0, 0.1, 0.3].iter().map(|&d| mean(&at(Metric::KEff, 50, d))).collect();
    let smoother = k[0] < k[1] && k[1] < k[2];
    let gap0 = paired(&at(Metric::MseTest, 1, 0.0), &at(Metric::MseTest, 50, 0.0));
    let gap = paired(&at(Metric::MseTest, 1, 0.1), &at(Metric::MseTest, 50, 0.1));
    let (m, h) = (mean(&gap), 2.0 * std_error(&gap));
    let zero = gap0.iter().all(|&g| g == 0.0);
    outcome(
        smoother && zero && m - h > 0.0,
        format!(
            "k_eff at B=50 for delta 0/0.1/0.3: {:.2}/{:.2}/{:.2}; tree-forest mse gap at delta=0 exactly zero: {zero}; at delta=0.1 {m:.3}+-{h:.3}",
            k[0], k[1], k[2]
        ),
    )
}

/// Reference CART for two features with one candidate feature per node.
enum RefTree {
    Leaf(Vec<usize>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RefTree>,
        right: Box<RefTree>,
    },
}

impl RefTree {
    fn predict(&self, y: &[f64], x: &[f64]) -> f64 {
        match self {
            RefTree::Leaf(rows) => {
                let w = 1.0 / rows.len() as f64;
                rows.iter().map(|&i| w * y[i]).sum()
            }
            RefTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(y, x)
                } else {
                    right.predict(y, x)
                }
            }
        }
    }
}

fn sse(rows: &[usize], y: &[f64]) -> f64 {
    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&i| (y[i] - m) * (y[i] - m)).sum()
}

/// Best cut on one feature by direct SSE reduction; lowest cut wins ties.
fn best_cut(rows: &[usize], data: &Dataset, feature: usize) -> Option<(f64, Vec<usize>, Vec<usize>)> {
    let y = data.outcomes();
    let mut sorted = rows.to_vec();
    sorted.sort_by(|&a, &b| data.value(a, feature).total_cmp(&data.value(b, feature)));
    let parent = sse(rows, y);
    let mut best: Option<(f64, usize)> = None;
    for k in 1..sorted.len() {
        if data.value(sorted[k - 1], feature) == data.value(sorted[k], feature) {
            continue;
        }
        let gain = parent - sse(&sorted[..k], y) - sse(&sorted[k..], y);
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, k));
        }
    }
    best.map(|(_, k)| {
        let threshold = (data.value(sorted[k - 1], feature) + data.value(sorted[k], feature)) / 2.0;
        let (mut l, mut r) = (sorted[..k].to_vec(), sorted[k..].to_vec());
        l.sort_unstable();
        r.sort_unstable();
        (threshold, l, r)
    })
}

/// Every tree reachable by some sequence of per-node feature draws.
fn all_trees(rows: Vec<usize>, data: &Dataset) -> Vec<RefTree> {
    let y = data.outcomes();
    if rows.len() < 2 || rows.iter().all(|&i| y[i] == y[rows[0]]) {
        return vec![RefTree::Leaf(rows)];
    }
    let mut out = Vec::new();
    for feature in 0..data.feature_count() {
        match best_cut(&rows, data, feature) {
            None => out.push(RefTree::Leaf(rows.clone())),
            Some((threshold, l, r)) => {
                let rights = all_trees(r, data);
                for left in &all_trees(l, data) {
                    for right in &rights {
                        out.push(RefTree::Split {
                            feature,
                            threshold,
                            left: Box::new(clone_tree(left)),
                            right: Box::new(clone_tree(right)),
                        });
                    }
                }
            }
        }
    }
    out
}

fn clone_tree(t: &RefTree) -> RefTree {
    match t {
        RefTree::Leaf(rows) => RefTree::Leaf(rows.clone()),
        RefTree::Split {
            feature,
            threshold,
            left,
            right,
        } => RefTree::Split {
            feature: *feature,
            threshold: *threshold,
            left: Box::new(clone_tree(left)),
            right: Box::new(clone_tree(right)),
        },
    }
}

fn exhaustive_rep_bias(train: &Dataset, test: &Dataset) -> f64 {
    all_trees((0..train.sample_count()).collect(), train)
        .iter()
        .map(|t| {
            let sq: f64 = test
                .rows()
                .zip(test.outcomes())
                .map(|(x, target)| {
                    let p = t.predict(train.outcomes(), x);
                    (p - target) * (p - target)
                })
                .sum();
            sq / test.sample_count() as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_10(repmod: &[ExperimentRecord]) -> Outcome {
    let at = |metric, b: usize| series(repmod, metric, |p| p.trees == Some(b));
    let drop = paired(&at(Metric::RepBias, 1), &at(Metric::RepBias, 50));
    let (m, h) = (mean(&drop), 2.0 * std_error(&drop));
    let mod_var: Vec<f64> = [1, 5, 20, 50].iter().map(|&b| mean(&at(Metric::ModVar, b))).collect();
    let decreasing = mod_var.windows(2).all(|w| w[1] < w[0]);

    let train = marsadd_sample(100, 5, noise(0.0), 21).unwrap();
    let test = marsadd_sample(100, 5, noise(0.0), 22).unwrap();
    let frozen = fit_forest(
        &train,
        &ForestConfig::new(20, TreeConfig::default().with_feature_fraction(THIRD))
            .with_structure(StructureKind::TotallyRandomized)
            .with_seed(1),
    )
    .unwrap();
    let frozen_mod_var = rep_mod_decompose(|d: &Dataset, _| frozen.refit_leaves(d.outcomes()), &train, &test, 20, 2)
        .unwrap()
        .mod_var_proxy;

    let mut rng = rng_from_seed(10);
    let mut mismatches = 0;
    let instances = 60;
    for k in 0..instances {
        let n = rng.random_range(3..=6);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let train = Dataset::from_rows(&rows, (0..n).map(|_| rng.random()).collect()).unwrap();
        let probe: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random(), rng.random()]).collect();
        let test = Dataset::from_rows(&probe, (0..8).map(|_| rng.random()).collect()).unwrap();
        let draws = rep_mod_decompose(
            |d: &Dataset, s| fit_forest(d, &ForestConfig::new(1, TreeConfig::default().with_feature_fraction(0.5)).with_seed(s)),
            &train,
            &test,
            512,
            derive_seed(99, k),
        )
        .unwrap();
        if draws.rep_bias_proxy != exhaustive_rep_bias(&train, &test) {
            mismatches += 1;
        }
    }
    outcome(
        m - h > 0.0 && decreasing && frozen_mod_var == 0.0 && mismatches == 0,
        format!(
            "rep_bias B=1 minus B=50 {m:.3}+-{h:.3}; mod_var by B {:.3}/{:.3}/{:.3}/{:.3}; frozen mod_var {frozen_mod_var}; exhaustive oracle mismatches {mismatches}/{instances}",
            mod_var[0], mod_var[1], mod_var[2], mod_var[3]
        ),
    )
}

fn variance_records(variant: ForestVariant) -> Vec<PredictiveVarianceRecord> {
    let settings = PredictiveVarianceSettings {
        variant,
        leaf_grid: vec![Some(8), Some(32), Some(128), None],
        size_grid: vec![1, 5, 20, 50],
        feature_fraction: THIRD,
        resamples: 20,
        seed: 31,
    };
    let train = marsadd_sample(N, 5, noise(1.0), 32).unwrap();
    let test = marsadd_sample(N, 5, noise(1.0), 33).unwrap();
    predictive_variance_experiment(&settings, &train, &test, &MarsAdd, noise(1.0)).unwrap()
}

fn criterion_11() -> Outcome {
    let frozen = variance_records(ForestVariant::Frozen);
    let frozen_bad = frozen
        .iter()
        .filter(|r| (r.true_var - r.weight_norm_var).abs() > 3.0 * r.diff_se + 1e-12)
        .count();

    let adaptive = variance_records(ForestVariant::Adaptive);
    let tree = adaptive
        .iter()
        .find(|r| r.trees == 1 && r.max_leaves.is_none() && r.in_sample)
        .unwrap();
    let tree_ok = (tree.true_var - 1.0).abs() <= 3.0 * tree.true_var_se;

    let randomized = variance_records(ForestVariant::TotallyRandomized);
    let bound_bad = adaptive
        .iter()
        .chain(&randomized)
        .filter(|r| !r.in_sample && r.weight_norm_var > r.true_var + 3.0 * r.diff_se)
        .count();
    outcome(
        frozen_bad == 0 && tree_ok && bound_bad == 0,
        format!(
            "frozen cells outside 3 SE: {frozen_bad}/{}; interpolating tree in-sample variance {:.3} (SE {:.3}, sigma^2 = 1); out-of-sample norm bound violations {bound_bad}/{}",
            frozen.len(),
            tree.true_var,
            tree.true_var_se,
            adaptive.len() + randomized.len() - adaptive.iter().chain(&randomized).filter(|r| r.in_sample).count()
        ),
    )
}

fn criterion_12() -> Outcome {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    for_each_forest_query(12, 1000, 5, |_, forest, x| {
        pairs += 1;
        let combined = forest.forest_weights(x).squared_norm();
        let members = forest.trees().iter().map(|t| t.tree_weights(x).squared_norm()).sum::<f64>() / forest.trees().len() as f64;
        worst = worst.max(combined - members);
        if combined > members + 1e-12 {
            violations += 1;
        }
    });
    outcome(
        violations == 0,
        format!("{pairs} pairs, {violations} violations, largest forest-minus-member-mean {worst:.2e}"),
    )
}

fn criterion_13() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let invoke = |threads: &str, file: &str| -> Vec<u8> {
        let path = dir.path().join(file);
        let status = Command::new(env!("CARGO_BIN_EXE_treesmooth"))
            .args(["run", "--experiment", "interp-by-m", "--reps", "3", "--seed", "2024", "--out"])
            .arg(&path)
            .env("RAYON_NUM_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(path).unwrap()
    };
    let a = invoke("1", "a.csv");
    let b = invoke("1", "b.csv");
    let c = invoke("8", "c.csv");
    outcome(
        a == b && a == c && !a.is_empty(),
        format!("{} bytes; repeat identical: {}; 1 vs 8 threads identical: {}", a.len(), a == b, a == c),
    )
}

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

fn main() {
    let interp = run("interp-by-m");
    let depth = run("depth-sweep");
    let snr = run("snr-sweep");
    let dis = run("dissimilarity");
    let boost = run("boost");
    let repmod = run("rep-mod");

    let checks: Vec<(&str, Check)> = vec![
        ("smoother identity", Box::new(criterion_1)),
        ("interpolation identities", Box::new(|| criterion_2(&interp))),
        ("spiked-smooth quantification", Box::new(|| criterion_3(&interp))),
        ("effective-k bounds", Box::new(|| criterion_4(&[&interp, &depth, &snr, &dis]))),
        ("non-interpolating spiked-smooth", Box::new(|| criterion_5(&depth))),
        ("df identity", Box::new(criterion_6)),
        ("boosting weights", Box::new(|| criterion_7(&boost))),
        ("SNR behaviour", Box::new(|| criterion_8(&snr))),
        ("dissimilarity behaviour", Box::new(|| criterion_9(&dis))),
        ("RepBias/ModVar", Box::new(|| criterion_10(&repmod))),
        ("predictive variance", Box::new(criterion_11)),
        ("Jensen contraction", Box::new(criterion_12)),
        ("determinism", Box::new(criterion_13)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in checks.into_iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
    }
    println!("{} of 13 criteria pass", 13 - failed);
}
