use aquarisk_core::encode::FeatureMatrix;
use aquarisk_core::gbt::{
    split_gain, train_gbt, train_gbt_observed, GbtConfig, RoundObserver, TreeNode,
};
use aquarisk_core::math::{logistic_grad_hess, logistic_loss, sigmoid};
use aquarisk_core::rng::{standard_normal, stream};
use rand::Rng;

fn matrix(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> FeatureMatrix {
    let d = rows[0].len();
    let names = (0..d).map(|j| format!("f{j}")).collect();
    let ids = (0..rows.len()).map(|i| format!("P{i}")).collect();
    FeatureMatrix::from_rows(names, rows, ids, Some(labels)).unwrap()
}

fn one_stump() -> GbtConfig {
    GbtConfig {
        n_trees: 1,
        subsample: 1.0,
        colsample: 1.0,
        max_depth: 1,
        min_child_hessian: 0.0,
        ..GbtConfig::default()
    }
}

/// Best (feature, threshold, gain) by trying every midpoint of every column.
fn brute_force_root(rows: &[Vec<f64>], labels: &[u8], cfg: &GbtConfig) -> Option<(usize, f64)> {
    let (g, h): (Vec<f64>, Vec<f64>) = labels
        .iter()
        .map(|&y| logistic_grad_hess(0.0, f64::from(y)))
        .unzip();
    let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for (i, r) in rows.iter().enumerate() {
                if r[f] < t {
                    gl += g[i];
                    hl += h[i];
                }
            }
            let gain = split_gain(gl, hl, gt - gl, ht - hl, cfg);
            if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best.map(|b| (b.0, b.1))
}

fn root_of(model: &aquarisk_core::gbt::GbtModel) -> Option<(usize, f64)> {
    match model.trees[0].nodes[0] {
        TreeNode::Split {
            feature, threshold, ..
        } => Some((feature, threshold)),
        TreeNode::Leaf { .. } => None,
    }
}

#[test]
fn four_row_root_split_matches_enumeration() {
    let rows = vec![
        vec![1.0, 7.0],
        vec![2.0, 3.0],
        vec![3.0, 5.0],
        vec![4.0, 1.0],
    ];
    let labels = vec![0, 1, 0, 1];
    let cfg = one_stump();
    let model = train_gbt(&matrix(rows.clone(), labels.clone()), &cfg).unwrap();
    assert_eq!(root_of(&model), brute_force_root(&rows, &labels, &cfg));
    assert_eq!(root_of(&model), Some((1, 4.0)));
}

#[test]
fn random_root_splits_match_enumeration() {
    let cfg = one_stump();
    let mut checked = 0;
    for s in 0..200u64 {
        let mut r = stream(41, s);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..3).map(|_| f64::from(r.gen_range(0..6u8))).collect())
            .collect();
        let labels: Vec<u8> = (0..8).map(|_| r.gen_range(0..2u8)).collect();
        if labels.iter().all(|&y| y == labels[0]) {
            continue;
        }
        let model = train_gbt(&matrix(rows.clone(), labels.clone()), &cfg).unwrap();
        assert_eq!(
            root_of(&model),
            brute_force_root(&rows, &labels, &cfg),
            "case {s}"
        );
        checked += 1;
    }
    assert!(checked > 150);
}

#[test]
fn finite_difference_gradient_and_hessian() {
    let mut r = stream(5, 0);
    let eps = 1e-5;
    for _ in 0..1000 {
        let m = 6.0 * standard_normal(&mut r);
        let y = f64::from(r.gen_range(0..2u8));
        let (g, h) = logistic_grad_hess(m, y);
        let fd_g = (logistic_loss(m + eps, y) - logistic_loss(m - eps, y)) / (2.0 * eps);
        let fd_h =
            (logistic_grad_hess(m + eps, y).0 - logistic_grad_hess(m - eps, y).0) / (2.0 * eps);
        assert!((g - fd_g).abs() < 1e-6, "g at {m}");
        assert!((h - fd_h).abs() < 1e-5, "h at {m}");
    }
}

struct LossTrace {
    labels: Vec<f64>,
    losses: Vec<f64>,
}

impl RoundObserver for LossTrace {
    fn after_round(&mut self, _round: usize, margins: &[f64]) {
        self.losses.push(
            margins
                .iter()
                .zip(&self.labels)
                .map(|(&m, &y)| logistic_loss(m, y))
                .sum(),
        );
    }
}

fn synthetic(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut r = stream(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| standard_normal(&mut r)).collect())
        .collect();
    let labels = rows
        .iter()
        .map(|x| {
            let p = sigmoid(1.5 * x[0] - x[1] + 0.5 * x[2] * x[0]);
            u8::from(r.gen::<f64>() < p)
        })
        .collect();
    (rows, labels)
}

#[test]
fn training_loss_never_increases() {
    let (rows, labels) = synthetic(500, 5, 8);
    let cfg = GbtConfig {
        n_trees: 200,
        subsample: 1.0,
        colsample: 1.0,
        gamma: 0.0,
        ..GbtConfig::default()
    };
    let mut trace = LossTrace {
        labels: labels.iter().map(|&y| f64::from(y)).collect(),
        losses: Vec::new(),
    };
    train_gbt_observed(&matrix(rows, labels), &cfg, &mut trace).unwrap();
    assert_eq!(trace.losses.len(), 200);
    for w in trace.losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
}

fn trace_path(nodes: &[TreeNode], row: &[f64]) -> f64 {
    let mut i = 0;
    loop {
        match nodes[i] {
            TreeNode::Leaf { weight } => return weight,
            TreeNode::Split {
                feature,
                threshold,
                default_left,
                left,
                right,
            } => {
                let v = row[feature];
                i = match (v.is_nan(), default_left, v < threshold) {
                    (true, true, _) | (false, _, true) => left,
                    _ => right,
                };
            }
        }
    }
}

#[test]
fn proba_is_sigmoid_of_traced_leaves() {
    let (mut rows, labels) = synthetic(300, 4, 12);
    for (i, r) in rows.iter_mut().enumerate() {
        if i % 7 == 0 {
            r[1] = f64::NAN;
        }
    }
    let cfg = GbtConfig {
        n_trees: 3,
        max_depth: 2,
        ..GbtConfig::default()
    };
    let model = train_gbt(&matrix(rows.clone(), labels), &cfg).unwrap();
    assert_eq!(model.trees.len(), 3);
    for row in rows.iter().take(60) {
        let m: f64 = model.base_margin
            + model
                .trees
                .iter()
                .map(|t| trace_path(&t.nodes, row))
                .sum::<f64>();
        assert_eq!(model.predict_proba(row).unwrap(), sigmoid(m));
    }
}

#[test]
fn deterministic_and_depth_bounded() {
    let (rows, labels) = synthetic(400, 6, 3);
    let m = matrix(rows, labels);
    for depth in [0, 1, 3, 5] {
        let cfg = GbtConfig {
            n_trees: 20,
            max_depth: depth,
            seed: 9,
            ..GbtConfig::default()
        };
        let a = train_gbt(&m, &cfg).unwrap();
        let b = train_gbt(&m, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trees.iter().all(|t| t.depth() <= depth));
    }
}

#[test]
fn importances_normalize_and_favor_the_informative_feature() {
    let mut r = stream(77, 0);
    let rows: Vec<Vec<f64>> = (0..600)
        .map(|_| (0..4).map(|_| standard_normal(&mut r)).collect())
        .collect();
    let labels: Vec<u8> = rows
        .iter()
        .map(|x| u8::from(r.gen::<f64>() < sigmoid(3.0 * x[2])))
        .collect();
    let model = train_gbt(
        &matrix(rows, labels),
        &GbtConfig {
            n_trees: 50,
            ..GbtConfig::default()
        },
    )
    .unwrap();
    let imp = model.split_count_importance();
    let total: f64 = imp.values().sum();
    assert!((total - 1.0).abs() < 1e-12);
    let top = imp.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert_eq!(top.0, "f2");
}
