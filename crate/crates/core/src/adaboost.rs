//! Discrete two-class AdaBoost over shallow Gini trees.
//!
//! Missing values are median-imputed with indicator columns before training,
//! since the weak learners have no notion of a default direction.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encode::{FeatureMatrix, MedianImputer};
use crate::error::{Error, Result};
use crate::gbt::check_binary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaBoostConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub weak_depth: usize,
    /// Recorded for reproducibility; training itself is deterministic.
    pub seed: u64,
}

impl Default for AdaBoostConfig {
    fn default() -> Self {
        AdaBoostConfig {
            n_estimators: 200,
            learning_rate: 0.2,
            weak_depth: 1,
            seed: 0,
        }
    }
}

impl AdaBoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::InvalidConfig(
                "adaboost: n_estimators must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "adaboost: learning_rate must be positive".into(),
            ));
        }
        if self.weak_depth == 0 {
            return Err(Error::InvalidConfig(
                "adaboost: weak_depth must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Largest odds ratio a perfect learner is credited with.
pub const MAX_ODDS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Weighted Gini decrease achieved by this split.
        decrease: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakTree {
    pub nodes: Vec<WeakNode>,
}

impl WeakTree {
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                WeakNode::Leaf { class } => return class,
                WeakNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[feature] < threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub tree: WeakTree,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub config: AdaBoostConfig,
    /// Names of the raw input features (before imputation).
    pub feature_names: Vec<String>,
    pub imputer: MedianImputer,
    pub learners: Vec<Learner>,
}

/// State after one boosting round, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub error: f64,
    pub alpha: f64,
    /// `false` when the learner was discarded (error at or above one half).
    pub kept: bool,
    /// Normalized row weights after the update.
    pub weights: Vec<f64>,
}

/// Weighted Gini impurity times node weight: W - (w0^2 + w1^2) / W.
#[inline]
fn weighted_gini(w0: f64, w1: f64) -> f64 {
    let w = w0 + w1;
    if w <= 0.0 {
        0.0
    } else {
        w - (w0 * w0 + w1 * w1) / w
    }
}

struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(x: &FeatureMatrix) -> Self {
        let order = (0..x.n_cols)
            .map(|j| {
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, j)
                        .total_cmp(&x.get(b as usize, j))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Presorted { order }
    }
}

fn fit_weak_tree(
    x: &FeatureMatrix,
    y: &[u8],
    w: &[f64],
    sorted: &Presorted,
    depth: usize,
) -> WeakTree {
    let mut nodes = Vec::new();
    let mut member = vec![true; x.n_rows()];
    grow(x, y, w, sorted, depth, &mut member, &mut nodes);
    WeakTree { nodes }
}

fn grow(
    x: &FeatureMatrix,
    y: &[u8],
    w: &[f64],
    sorted: &Presorted,
    depth: usize,
    member: &mut [bool],
    nodes: &mut Vec<WeakNode>,
) -> usize {
    let (mut w0, mut w1) = (0.0, 0.0);
    for i in 0..member.len() {
        if member[i] {
            if y[i] == 1 {
                w1 += w[i];
            } else {
                w0 += w[i];
            }
        }
    }
    let me = nodes.len();
    nodes.push(WeakNode::Leaf {
        class: u8::from(w1 > w0),
    });
    if depth == 0 {
        return me;
    }
    let parent = weighted_gini(w0, w1);
    // (decrease, feature, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    for (j, order) in sorted.order.iter().enumerate() {
        let (mut l0, mut l1) = (0.0, 0.0);
        let mut last = f64::NAN;
        for &r in order {
            let r = r as usize;
            if !member[r] {
                continue;
            }
            let v = x.get(r, j);
            if !last.is_nan() && v > last {
                let children = weighted_gini(l0, l1) + weighted_gini(w0 - l0, w1 - l1);
                let decrease = parent - children;
                if decrease > 0.0 && best.is_none_or(|b| decrease > b.0) {
                    best = Some((decrease, j, last + (v - last) * 0.5));
                }
            }
            if y[r] == 1 {
                l1 += w[r];
            } else {
                l0 += w[r];
            }
            last = v;
        }
    }
    let Some((decrease, feature, threshold)) = best else {
        return me;
    };
    let goes_left: Vec<usize> = (0..member.len())
        .filter(|&i| member[i] && x.get(i, feature) < threshold)
        .collect();
    let goes_right: Vec<usize> = (0..member.len())
        .filter(|&i| member[i] && x.get(i, feature) >= threshold)
        .collect();

    member.iter_mut().for_each(|m| *m = false);
    goes_left.iter().for_each(|&i| member[i] = true);
    let left = grow(x, y, w, sorted, depth - 1, member, nodes);
    member.iter_mut().for_each(|m| *m = false);
    goes_right.iter().for_each(|&i| member[i] = true);
    let right = grow(x, y, w, sorted, depth - 1, member, nodes);

    nodes[me] = WeakNode::Split {
        feature,
        threshold,
        decrease,
        left,
        right,
    };
    me
}

pub fn train_adaboost(m: &FeatureMatrix, cfg: &AdaBoostConfig) -> Result<AdaBoostModel> {
    train_adaboost_traced(m, cfg).map(|(model, _)| model)
}

/// Train and return the per-round errors, stage weights and row weights.
pub fn train_adaboost_traced(
    m: &FeatureMatrix,
    cfg: &AdaBoostConfig,
) -> Result<(AdaBoostModel, Vec<RoundTrace>)> {
    cfg.validate()?;
    let y = m.labels()?;
    check_binary(y)?;
    let imputer = MedianImputer::fit(m);
    let x = imputer.transform(m)?;
    let n = x.n_rows();
    let sorted = Presorted::new(&x);
    let mut w = vec![1.0 / n as f64; n];
    let mut learners = Vec::new();
    let mut trace = Vec::new();
    let alpha_cap = cfg.learning_rate * libm::log(MAX_ODDS);

    for _ in 0..cfg.n_estimators {
        let tree = fit_weak_tree(&x, y, &w, &sorted, cfg.weak_depth);
        let miss: Vec<bool> = (0..n).map(|i| tree.predict(x.row(i)) != y[i]).collect();
        let err: f64 = (0..n).filter(|&i| miss[i]).map(|i| w[i]).sum();
        if err >= 0.5 {
            trace.push(RoundTrace {
                error: err,
                alpha: 0.0,
                kept: false,
                weights: w.clone(),
            });
            break;
        }
        if err <= 0.0 {
            learners.push(Learner {
                tree,
                alpha: alpha_cap,
            });
            trace.push(RoundTrace {
                error: 0.0,
                alpha: alpha_cap,
                kept: true,
                weights: w.clone(),
            });
            break;
        }
        let alpha = cfg.learning_rate * libm::log((1.0 - err) / err);
        let boost = libm::exp(alpha);
        for i in 0..n {
            if miss[i] {
                w[i] *= boost;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        learners.push(Learner { tree, alpha });
        trace.push(RoundTrace {
            error: err,
            alpha,
            kept: true,
            weights: w.clone(),
        });
    }

    let model = AdaBoostModel {
        config: cfg.clone(),
        feature_names: m.feature_names.clone(),
        imputer,
        learners,
    };
    Ok((model, trace))
}

impl AdaBoostModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Weighted vote share for class 1 and the predicted class.
    /// An empty ensemble scores 0.5 and predicts 0.
    pub fn predict(&self, row: &[f64]) -> Result<(f64, u8)> {
        let mut buf = Vec::with_capacity(self.imputer.n_outputs());
        self.imputer.transform_row_into(row, &mut buf)?;
        let (mut pos, mut neg) = (0.0, 0.0);
        for l in &self.learners {
            if l.tree.predict(&buf) == 1 {
                pos += l.alpha;
            } else {
                neg += l.alpha;
            }
        }
        let total = pos + neg;
        let score = if total > 0.0 { pos / total } else { 0.5 };
        Ok((score, u8::from(pos > neg)))
    }

    pub fn predict_score(&self, row: &[f64]) -> Result<f64> {
        self.predict(row).map(|(s, _)| s)
    }

    pub fn predict_scores(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..m.n_rows())
            .map(|i| self.predict_score(m.row(i)))
            .collect()
    }

    /// Gini decrease per feature, averaged over learners and normalized to sum
    /// to one. Imputation indicator columns are credited to their source feature.
    pub fn gini_importance(&self) -> BTreeMap<String, f64> {
        let d = self.n_features();
        let mut total = vec![0.0; d];
        for l in &self.learners {
            let mut per = vec![0.0; d];
            for n in &l.tree.nodes {
                if let WeakNode::Split {
                    feature, decrease, ..
                } = *n
                {
                    let src = if feature < d {
                        feature
                    } else {
                        self.imputer.indicator_columns[feature - d]
                    };
                    per[src] += decrease;
                }
            }
            for (t, p) in total.iter_mut().zip(&per) {
                *t += p / self.learners.len() as f64;
            }
        }
        let sum: f64 = total.iter().sum();
        if !(sum > 0.0) {
            return BTreeMap::new();
        }
        total
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(j, &v)| (self.feature_names[j].clone(), v / sum))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn matrix(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> FeatureMatrix {
        let d = rows[0].len();
        let names = (0..d).map(|j| format!("f{j}")).collect();
        let ids = (0..rows.len()).map(|i| format!("P{i}")).collect();
        FeatureMatrix::from_rows(names, rows, ids, Some(labels)).unwrap()
    }

    #[test]
    fn separable_pair_stops_with_capped_alpha() {
        let m = matrix(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        let (model, trace) = train_adaboost_traced(&m, &AdaBoostConfig::default()).unwrap();
        assert_eq!(model.learners.len(), 1);
        assert_eq!(trace.len(), 1);
        assert_eq!(model.learners[0].alpha, 0.2 * libm::log(1e12));
        assert_eq!(model.predict(&[1.0]).unwrap(), (1.0, 1));
        assert_eq!(model.predict(&[0.0]).unwrap(), (0.0, 0));
    }

    #[test]
    fn coin_flip_learner_is_dropped() {
        // identical features: the best stump is a leaf with error exactly 0.5
        let m = matrix(vec![vec![1.0], vec![1.0]], vec![0, 1]);
        let (model, trace) = train_adaboost_traced(&m, &AdaBoostConfig::default()).unwrap();
        assert!(model.learners.is_empty());
        assert_eq!(trace[0].error, 0.5);
        assert!(!trace[0].kept);
        assert_eq!(model.predict(&[1.0]).unwrap(), (0.5, 0));
    }

    #[test]
    fn vote_arithmetic() {
        let stump = |class_right: u8| WeakTree {
            nodes: vec![
                WeakNode::Split {
                    feature: 0,
                    threshold: 0.5,
                    decrease: 0.1,
                    left: 1,
                    right: 2,
                },
                WeakNode::Leaf {
                    class: 1 - class_right,
                },
                WeakNode::Leaf { class: class_right },
            ],
        };
        let imputer = MedianImputer {
            medians: vec![0.0],
            indicator_columns: vec![],
            input_names: vec!["f0".into()],
        };
        let model = AdaBoostModel {
            config: AdaBoostConfig::default(),
            feature_names: vec!["f0".into()],
            imputer,
            learners: vec![
                Learner {
                    tree: stump(1),
                    alpha: 1.0,
                },
                Learner {
                    tree: stump(1),
                    alpha: 1.0,
                },
                Learner {
                    tree: stump(0),
                    alpha: 1.0,
                },
            ],
        };
        let (score, class) = model.predict(&[1.0]).unwrap();
        assert_eq!(class, 1);
        assert!((score - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            model.predict(&[1.0, 2.0]),
            Err(Error::FeatureMismatch { .. })
        ));
    }

    #[test]
    fn weights_stay_normalized() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i % 11) as f64, ((i * 7) % 13) as f64])
            .collect();
        let labels = (0..60)
            .map(|i| u8::from((i % 11) > 5 || (i * 7) % 13 == 2))
            .collect();
        let m = matrix(rows, labels);
        let (_, trace) = train_adaboost_traced(&m, &AdaBoostConfig::default()).unwrap();
        for t in &trace {
            let s: f64 = t.weights.iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            if t.kept {
                assert!(t.error < 0.5);
            }
        }
    }

    #[test]
    fn missing_values_are_imputed() {
        let m = matrix(
            vec![vec![f64::NAN], vec![1.0], vec![2.0], vec![3.0]],
            vec![1, 0, 0, 1],
        );
        let model = train_adaboost(&m, &AdaBoostConfig::default()).unwrap();
        assert_eq!(model.imputer.indicator_columns, vec![0]);
        assert!(model.predict(&[f64::NAN]).is_ok());
        let imp = model.gini_importance();
        assert!((imp.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stump_importance_is_one_feature() {
        let m = matrix(vec![vec![0.0, 5.0], vec![1.0, 5.0]], vec![0, 1]);
        let model = train_adaboost(&m, &AdaBoostConfig::default()).unwrap();
        let imp = model.gini_importance();
        assert_eq!(imp.len(), 1);
        assert_eq!(imp["f0"], 1.0);
    }
}
