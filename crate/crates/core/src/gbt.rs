//! Gradient-boosted decision trees for binary classification.
//!
//! Each round fits a depth-bounded regression tree to the first and second
//! derivatives of the logistic loss at the current margins. Splits are found
//! by exact greedy enumeration over sorted unique values (midpoint
//! thresholds); rows whose value is missing follow a per-split default
//! direction chosen to maximize gain. Leaf weights are the L1/L2-regularized
//! Newton step, shrunk by the learning rate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::math::{logistic_grad_hess, logit, sigmoid};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub subsample: f64,
    pub colsample: f64,
    /// Zero builds single-leaf trees.
    pub max_depth: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub base_score: f64,
    pub min_child_hessian: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_trees: 512,
            subsample: 0.9,
            colsample: 0.6,
            max_depth: 3,
            gamma: 0.1,
            alpha: 0.5,
            lambda: 1.0,
            learning_rate: 0.1,
            base_score: 0.5,
            min_child_hessian: 1.0,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("gbt: {m}")));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad("colsample must lie in (0, 1]");
        }
        if !(self.gamma >= 0.0
            && self.alpha >= 0.0
            && self.lambda >= 0.0
            && self.min_child_hessian >= 0.0)
        {
            return bad("gamma, alpha, lambda and min_child_hessian must be nonnegative");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return bad("base_score must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Soft-thresholding by the L1 penalty.
#[inline]
pub fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

#[inline]
fn score_term(g: f64, h: f64, cfg: &GbtConfig) -> f64 {
    let denom = h + cfg.lambda;
    if denom <= 0.0 {
        return 0.0;
    }
    let s = soft_threshold(g, cfg.alpha);
    s * s / denom
}

/// Second-order gain of splitting a node into (left, right).
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, cfg: &GbtConfig) -> f64 {
    0.5 * (score_term(gl, hl, cfg) + score_term(gr, hr, cfg) - score_term(gl + gr, hl + hr, cfg))
        - cfg.gamma
}

/// Shrunk leaf weight for gradient/hessian sums.
pub fn leaf_weight(g: f64, h: f64, cfg: &GbtConfig) -> f64 {
    let denom = h + cfg.lambda;
    if denom <= 0.0 {
        return 0.0;
    }
    -soft_threshold(g, cfg.alpha) / denom * cfg.learning_rate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// A tree stored in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

/// Preorder node without child links, used for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatNode {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
    },
    Leaf {
        weight: f64,
    },
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    #[inline]
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = row[feature];
                    let go_left = if v.is_nan() {
                        default_left
                    } else {
                        v < threshold
                    };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { weight } => weight,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + rec(t, left).max(rec(t, right)),
            }
        }
        rec(self, 0)
    }

    pub fn flatten(&self) -> Vec<FlatNode> {
        self.nodes
            .iter()
            .map(|n| match *n {
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    ..
                } => FlatNode::Split {
                    feature,
                    threshold,
                    default_left,
                },
                TreeNode::Leaf { weight } => FlatNode::Leaf { weight },
            })
            .collect()
    }

    /// Rebuild child links from a preorder flattening.
    pub fn from_flat(flat: &[FlatNode], n_features: usize) -> Result<Self> {
        fn rec(
            flat: &[FlatNode],
            pos: &mut usize,
            out: &mut Vec<TreeNode>,
            n_features: usize,
            depth: usize,
        ) -> Result<usize> {
            if depth > 64 {
                return Err(Error::MalformedModel("tree too deep".into()));
            }
            let node = *flat
                .get(*pos)
                .ok_or_else(|| Error::MalformedModel("truncated tree".into()))?;
            let me = out.len();
            *pos += 1;
            match node {
                FlatNode::Leaf { weight } => out.push(TreeNode::Leaf { weight }),
                FlatNode::Split {
                    feature,
                    threshold,
                    default_left,
                } => {
                    if feature >= n_features {
                        return Err(Error::MalformedModel(format!(
                            "feature index {feature} out of range"
                        )));
                    }
                    out.push(TreeNode::Leaf { weight: 0.0 });
                    let left = rec(flat, pos, out, n_features, depth + 1)?;
                    let right = rec(flat, pos, out, n_features, depth + 1)?;
                    out[me] = TreeNode::Split {
                        feature,
                        threshold,
                        default_left,
                        left,
                        right,
                    };
                }
            }
            Ok(me)
        }
        let mut nodes = Vec::with_capacity(flat.len());
        let mut pos = 0;
        rec(flat, &mut pos, &mut nodes, n_features, 0)?;
        if pos != flat.len() {
            return Err(Error::MalformedModel("trailing nodes after tree".into()));
        }
        Ok(Tree { nodes })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub config: GbtConfig,
    pub feature_names: Vec<String>,
    pub base_margin: f64,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_margin(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::FeatureMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(self.base_margin + self.trees.iter().map(|t| t.predict(row)).sum::<f64>())
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.predict_margin(row).map(sigmoid)
    }

    pub fn predict_margins(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..m.n_rows())
            .map(|i| self.predict_margin(m.row(i)))
            .collect()
    }

    /// Share of all splits made on each feature; features never split on are omitted.
    pub fn split_count_importance(&self) -> BTreeMap<String, f64> {
        let mut counts = vec![0usize; self.n_features()];
        for t in &self.trees {
            for n in &t.nodes {
                if let TreeNode::Split { feature, .. } = n {
                    counts[*feature] += 1;
                }
            }
        }
        let total: usize = counts.iter().sum();
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(j, &c)| (self.feature_names[j].clone(), c as f64 / total as f64))
            .collect()
    }
}

pub(crate) fn check_binary(labels: &[u8]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Empty("matrix has no rows"));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Feature columns presorted once per training run.
struct SortedColumns {
    /// Rows with a value, ordered by (value, row).
    present: Vec<Vec<u32>>,
    missing: Vec<Vec<u32>>,
}

impl SortedColumns {
    fn new(m: &FeatureMatrix) -> Self {
        let mut present = Vec::with_capacity(m.n_cols);
        let mut missing = Vec::with_capacity(m.n_cols);
        for j in 0..m.n_cols {
            let mut p: Vec<u32> = Vec::new();
            let mut q: Vec<u32> = Vec::new();
            for i in 0..m.n_rows() {
                if m.get(i, j).is_nan() {
                    q.push(i as u32);
                } else {
                    p.push(i as u32);
                }
            }
            p.sort_by(|&a, &b| {
                m.get(a as usize, j)
                    .total_cmp(&m.get(b as usize, j))
                    .then(a.cmp(&b))
            });
            present.push(p);
            missing.push(q);
        }
        SortedColumns { present, missing }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

/// Frontier node under construction.
struct Open {
    slot: usize,
    depth: usize,
    g: f64,
    h: f64,
    best: Option<Candidate>,
}

const NO_NODE: u32 = u32::MAX;

/// Grow one tree on the sampled rows (`node_of[r] != NO_NODE`) and features.
fn grow_tree(
    m: &FeatureMatrix,
    cols: &SortedColumns,
    features: &[usize],
    grad: &[f64],
    hess: &[f64],
    node_of: &mut [u32],
    cfg: &GbtConfig,
) -> Tree {
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { weight: 0.0 }];
    let (mut g0, mut h0) = (0.0, 0.0);
    for r in 0..node_of.len() {
        if node_of[r] != NO_NODE {
            g0 += grad[r];
            h0 += hess[r];
        }
    }
    let mut open = vec![Open {
        slot: 0,
        depth: 0,
        g: g0,
        h: h0,
        best: None,
    }];

    while !open.is_empty() {
        // node_of holds the index into `open` for rows of frontier nodes
        let splittable: Vec<bool> = open.iter().map(|o| o.depth < cfg.max_depth).collect();
        if splittable.iter().any(|&s| s) {
            let k = open.len();
            let mut gm = vec![0.0; k];
            let mut hm = vec![0.0; k];
            let mut gl = vec![0.0; k];
            let mut hl = vec![0.0; k];
            let mut last = vec![0.0f64; k];
            let mut seen = vec![false; k];
            for &f in features {
                gm.iter_mut()
                    .chain(hm.iter_mut())
                    .chain(gl.iter_mut())
                    .chain(hl.iter_mut())
                    .for_each(|x| *x = 0.0);
                seen.iter_mut().for_each(|s| *s = false);
                for &r in &cols.missing[f] {
                    let n = node_of[r as usize];
                    if n != NO_NODE {
                        gm[n as usize] += grad[r as usize];
                        hm[n as usize] += hess[r as usize];
                    }
                }
                for &r in &cols.present[f] {
                    let n = node_of[r as usize];
                    if n == NO_NODE || !splittable[n as usize] {
                        continue;
                    }
                    let n = n as usize;
                    let v = m.get(r as usize, f);
                    if seen[n] && v > last[n] {
                        let o = &mut open[n];
                        let threshold = last[n] + (v - last[n]) * 0.5;
                        let gr = o.g - gm[n] - gl[n];
                        let hr = o.h - hm[n] - hl[n];
                        for default_left in [true, false] {
                            let (a_g, a_h, b_g, b_h) = if default_left {
                                (gl[n] + gm[n], hl[n] + hm[n], gr, hr)
                            } else {
                                (gl[n], hl[n], gr + gm[n], hr + hm[n])
                            };
                            if a_h < cfg.min_child_hessian || b_h < cfg.min_child_hessian {
                                continue;
                            }
                            let gain = split_gain(a_g, a_h, b_g, b_h, cfg);
                            if gain > 0.0 && o.best.is_none_or(|b| gain > b.gain) {
                                o.best = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold,
                                    default_left,
                                });
                            }
                        }
                    }
                    gl[n] += grad[r as usize];
                    hl[n] += hess[r as usize];
                    last[n] = v;
                    seen[n] = true;
                }
            }
        }

        // materialize this level
        let mut next: Vec<Open> = Vec::new();
        let mut remap = vec![NO_NODE; open.len() * 2];
        for (oi, o) in open.iter().enumerate() {
            match o.best {
                Some(c) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(TreeNode::Leaf { weight: 0.0 });
                    nodes.push(TreeNode::Leaf { weight: 0.0 });
                    nodes[o.slot] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        default_left: c.default_left,
                        left,
                        right,
                    };
                    remap[oi * 2] = next.len() as u32;
                    next.push(Open {
                        slot: left,
                        depth: o.depth + 1,
                        g: 0.0,
                        h: 0.0,
                        best: None,
                    });
                    remap[oi * 2 + 1] = next.len() as u32;
                    next.push(Open {
                        slot: right,
                        depth: o.depth + 1,
                        g: 0.0,
                        h: 0.0,
                        best: None,
                    });
                }
                None => {
                    nodes[o.slot] = TreeNode::Leaf {
                        weight: leaf_weight(o.g, o.h, cfg),
                    };
                }
            }
        }
        for r in 0..node_of.len() {
            let n = node_of[r];
            if n == NO_NODE {
                continue;
            }
            match open[n as usize].best {
                None => node_of[r] = NO_NODE,
                Some(c) => {
                    let v = m.get(r, c.feature);
                    let go_left = if v.is_nan() {
                        c.default_left
                    } else {
                        v < c.threshold
                    };
                    let child = remap[n as usize * 2 + usize::from(!go_left)];
                    node_of[r] = child;
                    next[child as usize].g += grad[r];
                    next[child as usize].h += hess[r];
                }
            }
        }
        open = next;
    }

    // children are appended in level order; reorder into preorder
    let mut pre = Vec::with_capacity(nodes.len());
    fn to_preorder(src: &[TreeNode], i: usize, out: &mut Vec<TreeNode>) -> usize {
        let me = out.len();
        out.push(src[i]);
        if let TreeNode::Split { left, right, .. } = src[i] {
            let l = to_preorder(src, left, out);
            let r = to_preorder(src, right, out);
            if let TreeNode::Split { left, right, .. } = &mut out[me] {
                *left = l;
                *right = r;
            }
        }
        me
    }
    to_preorder(&nodes, 0, &mut pre);
    Tree { nodes: pre }
}

/// Per-round observer used by tests and diagnostics.
pub trait RoundObserver {
    fn after_round(&mut self, round: usize, margins: &[f64]);
}

impl RoundObserver for () {
    fn after_round(&mut self, _: usize, _: &[f64]) {}
}

pub fn train_gbt(m: &FeatureMatrix, cfg: &GbtConfig) -> Result<GbtModel> {
    train_gbt_observed(m, cfg, &mut ())
}

pub fn train_gbt_observed<O: RoundObserver>(
    m: &FeatureMatrix,
    cfg: &GbtConfig,
    observer: &mut O,
) -> Result<GbtModel> {
    cfg.validate()?;
    let labels = m.labels()?;
    check_binary(labels)?;
    let n = m.n_rows();
    let base_margin = logit(cfg.base_score);
    let mut margins = vec![base_margin; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut node_of = vec![0u32; n];
    let cols = SortedColumns::new(m);
    let n_sampled_cols = if m.n_cols == 0 {
        0
    } else {
        (libm::round(cfg.colsample * m.n_cols as f64) as usize).clamp(1, m.n_cols)
    };
    let mut trees = Vec::with_capacity(cfg.n_trees);

    for round in 0..cfg.n_trees {
        let mut rng = rng::stream(cfg.seed, round as u64);
        for i in 0..n {
            let (g, h) = logistic_grad_hess(margins[i], f64::from(labels[i]));
            grad[i] = g;
            hess[i] = h;
        }
        for slot in node_of.iter_mut() {
            *slot = if cfg.subsample >= 1.0 || rng.gen::<f64>() < cfg.subsample {
                0
            } else {
                NO_NODE
            };
        }
        let mut features: Vec<usize> = if n_sampled_cols == m.n_cols {
            (0..m.n_cols).collect()
        } else {
            index::sample(&mut rng, m.n_cols, n_sampled_cols).into_vec()
        };
        features.sort_unstable();

        let tree = grow_tree(m, &cols, &features, &grad, &hess, &mut node_of, cfg);
        for (i, margin) in margins.iter_mut().enumerate() {
            *margin += tree.predict(m.row(i));
        }
        trees.push(tree);
        observer.after_round(round, &margins);
    }

    Ok(GbtModel {
        config: cfg.clone(),
        feature_names: m.feature_names.clone(),
        base_margin,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn matrix(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> FeatureMatrix {
        let d = rows[0].len();
        let names = (0..d).map(|j| format!("f{j}")).collect();
        let ids = (0..rows.len()).map(|i| format!("P{i}")).collect();
        FeatureMatrix::from_rows(names, rows, ids, Some(labels)).unwrap()
    }

    fn plain() -> GbtConfig {
        GbtConfig {
            n_trees: 1,
            subsample: 1.0,
            colsample: 1.0,
            max_depth: 1,
            gamma: 0.0,
            alpha: 0.0,
            lambda: 1.0,
            learning_rate: 1.0,
            base_score: 0.5,
            min_child_hessian: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn gain_examples() {
        let d = GbtConfig::default();
        assert_eq!(split_gain(0.0, 1.0, 0.0, 1.0, &d), -0.1);
        let c = GbtConfig {
            alpha: 0.0,
            lambda: 0.0,
            gamma: 0.0,
            ..d
        };
        assert_eq!(split_gain(2.0, 1.0, -2.0, 1.0, &c), 4.0);
        let a = split_gain(1.3, 2.0, -0.4, 0.7, &d);
        let b = split_gain(-0.4, 0.7, 1.3, 2.0, &d);
        assert_eq!(a, b);
    }

    #[test]
    fn separable_stump() {
        let m = matrix(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        let model = train_gbt(&m, &plain()).unwrap();
        let t = &model.trees[0];
        assert!(
            matches!(t.nodes[0], TreeNode::Split { feature: 0, threshold, .. } if threshold == 0.5)
        );
        let p0 = model.predict_proba(m.row(0)).unwrap();
        let p1 = model.predict_proba(m.row(1)).unwrap();
        assert!(p1 > 0.5 && p0 < 0.5);
    }

    #[test]
    fn single_class_and_empty_rejected() {
        let m = matrix(vec![vec![0.0], vec![1.0]], vec![1, 1]);
        assert_eq!(train_gbt(&m, &plain()), Err(Error::SingleClass));
        let e =
            FeatureMatrix::from_rows(vec!["a".to_string()], vec![], vec![], Some(vec![])).unwrap();
        assert!(matches!(train_gbt(&e, &plain()), Err(Error::Empty(_))));
    }

    #[test]
    fn empty_model_predicts_base_score() {
        let model = GbtModel {
            config: GbtConfig::default(),
            feature_names: vec!["a".into()],
            base_margin: logit(0.5),
            trees: vec![],
        };
        assert_eq!(model.predict_proba(&[3.0]).unwrap(), 0.5);
        assert!(model.split_count_importance().is_empty());
        assert!(matches!(
            model.predict_margin(&[1.0, 2.0]),
            Err(Error::FeatureMismatch { .. })
        ));
    }

    #[test]
    fn single_leaf_closed_form() {
        let mut model = GbtModel {
            config: GbtConfig::default(),
            feature_names: vec!["a".into()],
            base_margin: logit(0.5),
            trees: vec![Tree::leaf(0.7)],
        };
        assert_eq!(model.predict_proba(&[1.0]).unwrap(), sigmoid(0.7));
        model.trees.push(Tree::leaf(-0.2));
        assert_eq!(model.predict_margin(&[1.0]).unwrap(), 0.7 + -0.2);
    }

    #[test]
    fn forced_leaf_weight_formula() {
        // depth 0: a single leaf holding the regularized Newton step
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64]).collect();
        let labels = vec![1, 1, 1, 1, 1, 0, 0];
        let m = matrix(rows, labels.clone());
        let cfg = GbtConfig {
            max_depth: 0,
            alpha: 0.5,
            lambda: 1.0,
            learning_rate: 0.1,
            ..plain()
        };
        let model = train_gbt(&m, &cfg).unwrap();
        // p = 0.5 for all rows: G = sum(0.5 - y) = 2*0.5 - 5*0.5 = -1.5, H = 7 * 0.25
        let g: f64 = labels.iter().map(|&y| 0.5 - f64::from(y)).sum();
        let h = 7.0 * 0.25;
        let expected = -soft_threshold(g, 0.5) / (h + 1.0) * 0.1;
        assert_eq!(
            model.trees[0].nodes,
            vec![TreeNode::Leaf { weight: expected }]
        );
    }

    #[test]
    fn missing_values_take_learned_direction() {
        // missing rows are all positive, like the high side
        let rows = vec![
            vec![0.0],
            vec![1.0],
            vec![2.0],
            vec![10.0],
            vec![11.0],
            vec![f64::NAN],
            vec![f64::NAN],
        ];
        let m = matrix(rows, vec![0, 0, 0, 1, 1, 1, 1]);
        let model = train_gbt(&m, &plain()).unwrap();
        match model.trees[0].nodes[0] {
            TreeNode::Split {
                threshold,
                default_left,
                ..
            } => {
                assert_eq!(threshold, 6.0);
                assert!(!default_left);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, (i % 3) as f64])
            .collect();
        let labels = (0..40).map(|i| u8::from(i % 7 > 3 || i % 3 == 0)).collect();
        let m = matrix(rows, labels);
        let cfg = GbtConfig {
            n_trees: 5,
            max_depth: 3,
            ..plain()
        };
        let model = train_gbt(&m, &cfg).unwrap();
        for t in &model.trees {
            assert_eq!(Tree::from_flat(&t.flatten(), 2).unwrap(), *t);
            assert!(t.depth() <= 3);
        }
        assert!(Tree::from_flat(
            &[FlatNode::Split {
                feature: 0,
                threshold: 1.0,
                default_left: true
            }],
            2
        )
        .is_err());
    }

    #[test]
    fn stump_importance() {
        let m = matrix(vec![vec![5.0, 0.0], vec![1.0, 0.0]], vec![1, 0]);
        let model = train_gbt(&m, &plain()).unwrap();
        let imp = model.split_count_importance();
        assert_eq!(imp.len(), 1);
        assert_eq!(imp["f0"], 1.0);
    }
}
