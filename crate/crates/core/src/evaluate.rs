//! Metrics and resampling drivers: ROC/AUC, recall and accuracy at a
//! threshold, parcel-grouped cross-validation, repeated holdout, learning
//! curves and grid search.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::math::{mean, sample_sd};
use crate::model::ModelSpec;
use crate::rng;
use crate::split::{fold_rows, group_kfold, group_split};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending; the first entry is +inf (nothing predicted positive).
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    /// Area under the curve by the trapezoid rule.
    pub fn trapezoid_area(&self) -> f64 {
        self.fpr
            .windows(2)
            .zip(self.tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) * 0.5)
            .sum()
    }
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    (pos, labels.len() - pos)
}

/// Rank-statistic AUC with tied scores sharing their average rank.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidConfig(
            "scores and labels differ in length".into(),
        ));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(i));
    }
    let (n1, n0) = class_counts(labels);
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives, kept integral: a tie block occupying
    // ranks lo+1..=hi has average rank (lo + 1 + hi) / 2
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_block = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += pos_in_block * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n1u = n1 as u128;
    // 2U = 2R - n1(n1 + 1)
    let twice_u = twice_rank_sum - n1u * (n1u + 1);
    Ok(twice_u as f64 / (2 * n1u * n0 as u128) as f64)
}

pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let area = auc(scores, labels)?;
    let (n1, n0) = class_counts(labels);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        tpr.push(tp as f64 / n1 as f64);
        fpr.push(fp as f64 / n0 as f64);
    }
    Ok(RocCurve {
        thresholds,
        tpr,
        fpr,
        auc: area,
    })
}

/// TP / (TP + FN) with positives predicted at `score >= threshold`.
pub fn recall_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let (n1, _) = class_counts(labels);
    if n1 == 0 {
        return Err(Error::NoPositives);
    }
    let tp = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| y == 1 && s >= threshold)
        .count();
    Ok(tp as f64 / n1 as f64)
}

pub fn accuracy_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("no labels"));
    }
    let hit = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s >= threshold) == (y == 1))
        .count();
    Ok(hit as f64 / labels.len() as f64)
}

/// Mean squared error of real-valued predictions. Kept for reporting
/// regression baselines; no classifier metric routes through it.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::InvalidConfig(
            "mse needs two equal-length nonempty inputs".into(),
        ));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    Recall,
    Accuracy,
    Mse,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Recall => "recall",
            Metric::Accuracy => "accuracy",
            Metric::Mse => "mse",
        }
    }

    pub fn parse(s: &str) -> Result<Metric> {
        match s {
            "auc" => Ok(Metric::Auc),
            "recall" => Ok(Metric::Recall),
            "accuracy" => Ok(Metric::Accuracy),
            "mse" => Ok(Metric::Mse),
            _ => Err(Error::InvalidConfig(format!("unknown metric `{s}`"))),
        }
    }

    /// Score classifier outputs in [0, 1] against binary labels.
    pub fn score(self, probs: &[f64], labels: &[u8]) -> Result<f64> {
        match self {
            Metric::Auc => auc(probs, labels),
            Metric::Recall => recall_at_threshold(probs, labels, DEFAULT_THRESHOLD),
            Metric::Accuracy => accuracy_at_threshold(probs, labels, DEFAULT_THRESHOLD),
            Metric::Mse => Err(Error::InvalidConfig(
                "mse is not a classifier metric".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Fresh parcel-grouped k-fold partition per run; a run's value is the fold mean.
    KFold { folds: usize },
    /// Fresh parcel-grouped holdout split per run; `test_percent` of rows held out.
    Holdout { test_percent: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub metric: Metric,
    pub protocol: Protocol,
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub n_runs: usize,
    pub seed: u64,
}

impl CvReport {
    fn new(metric: Metric, protocol: Protocol, values: Vec<f64>, seed: u64) -> Self {
        CvReport {
            metric,
            protocol,
            mean: mean(&values),
            sd: sample_sd(&values),
            n_runs: values.len(),
            values,
            seed,
        }
    }
}

/// Train on `train` rows, score `held` rows; returns (train score, held-out score).
fn fit_and_score(
    m: &FeatureMatrix,
    spec: &ModelSpec,
    metric: Metric,
    train: &[usize],
    held: &[usize],
    seed: u64,
    with_train: bool,
) -> Result<(Option<f64>, f64)> {
    let tr = m.select_rows(train);
    let model = spec.with_seed(seed).train(&tr)?;
    let te = m.select_rows(held);
    let val = metric.score(&model.predict_probas(&te)?, te.labels()?)?;
    let train_score = if with_train {
        Some(metric.score(&model.predict_probas(&tr)?, tr.labels()?)?)
    } else {
        None
    };
    Ok((train_score, val))
}

fn run_seed(seed: u64, run: usize) -> u64 {
    rng::derive_seed(seed, run as u64)
}

fn model_seed(seed: u64, run: usize, fold: usize) -> u64 {
    rng::derive_seed(run_seed(seed, run), 1000 + fold as u64)
}

/// Repeated parcel-grouped k-fold cross-validation.
pub fn cross_validate<E: Executor>(
    m: &FeatureMatrix,
    spec: &ModelSpec,
    metric: Metric,
    folds: usize,
    n_runs: usize,
    seed: u64,
    exec: &E,
) -> Result<CvReport> {
    Ok(cross_validate_many(m, spec, &[metric], folds, n_runs, seed, exec)?.remove(0))
}

/// [`cross_validate`] scoring several metrics on the same fitted fold models.
pub fn cross_validate_many<E: Executor>(
    m: &FeatureMatrix,
    spec: &ModelSpec,
    metrics: &[Metric],
    folds: usize,
    n_runs: usize,
    seed: u64,
    exec: &E,
) -> Result<Vec<CvReport>> {
    if n_runs == 0 || metrics.is_empty() {
        return Err(Error::InvalidConfig(
            "need at least one run and one metric".into(),
        ));
    }
    m.labels()?;
    let partitions: Vec<Vec<usize>> = (0..n_runs)
        .map(|r| group_kfold(&m.parcel_ids, folds, run_seed(seed, r)))
        .collect::<Result<_>>()?;
    let scores = exec.map_indexed(n_runs * folds, |job| -> Result<Vec<f64>> {
        let (r, f) = (job / folds, job % folds);
        let (train, held) = fold_rows(&partitions[r], f);
        let model = spec
            .with_seed(model_seed(seed, r, f))
            .train(&m.select_rows(&train))?;
        let te = m.select_rows(&held);
        let probs = model.predict_probas(&te)?;
        metrics
            .iter()
            .map(|k| k.score(&probs, te.labels()?))
            .collect()
    });
    let scores: Vec<Vec<f64>> = scores.into_iter().collect::<Result<_>>()?;
    Ok(metrics
        .iter()
        .enumerate()
        .map(|(k, &metric)| {
            let values = scores
                .chunks(folds)
                .map(|run| mean(&run.iter().map(|s| s[k]).collect::<Vec<_>>()))
                .collect();
            CvReport::new(metric, Protocol::KFold { folds }, values, seed)
        })
        .collect())
}

/// A fresh parcel-grouped split per run, one held-out score per run.
pub fn repeated_holdout<E: Executor>(
    m: &FeatureMatrix,
    spec: &ModelSpec,
    metric: Metric,
    test_percent: u32,
    n_runs: usize,
    seed: u64,
    exec: &E,
) -> Result<CvReport> {
    if n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be positive".into()));
    }
    m.labels()?;
    let values = exec.map_indexed(n_runs, |r| {
        let split = group_split(
            &m.parcel_ids,
            f64::from(test_percent) / 100.0,
            run_seed(seed, r),
        )?;
        let (train, held) = split.row_indices(m);
        fit_and_score(
            m,
            spec,
            metric,
            &train,
            &held,
            model_seed(seed, r, 0),
            false,
        )
        .map(|(_, v)| v)
    });
    let values = values.into_iter().collect::<Result<_>>()?;
    Ok(CvReport::new(
        metric,
        Protocol::Holdout { test_percent },
        values,
        seed,
    ))
}

pub fn default_fractions() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurvePoint {
    pub fraction: f64,
    /// Per fold; `None` where the subsample lost a class.
    pub train: Vec<Option<f64>>,
    pub validation: Vec<Option<f64>>,
    pub train_mean: Option<f64>,
    pub train_sd: Option<f64>,
    pub validation_mean: Option<f64>,
    pub validation_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveReport {
    pub metric: Metric,
    pub folds: usize,
    pub seed: u64,
    pub points: Vec<LearningCurvePoint>,
}

fn summarize(cells: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let present: Vec<f64> = cells.iter().flatten().copied().collect();
    if present.is_empty() {
        (None, None)
    } else {
        (Some(mean(&present)), Some(sample_sd(&present)))
    }
}

/// Train on growing parcel subsets of each fold's training side. The fold
/// partition and model seeds match run 0 of [`cross_validate`] with the same
/// seed, so the full-fraction validation mean equals that run's score.
pub fn learning_curve<E: Executor>(
    m: &FeatureMatrix,
    spec: &ModelSpec,
    metric: Metric,
    fractions: &[f64],
    folds: usize,
    seed: u64,
    exec: &E,
) -> Result<LearningCurveReport> {
    if fractions.is_empty()
        || fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0))
        || fractions.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidConfig(
            "fractions must be strictly increasing in (0, 1]".into(),
        ));
    }
    m.labels()?;
    let partition = group_kfold(&m.parcel_ids, folds, run_seed(seed, 0))?;
    let nf = fractions.len();
    let cells = exec.map_indexed(folds * nf, |job| -> Result<Option<(f64, f64)>> {
        let (f, k) = (job / nf, job % nf);
        let (train, held) = fold_rows(&partition, f);
        let mut parcels: Vec<&str> = {
            let mut v: Vec<&str> = train.iter().map(|&i| m.parcel_ids[i].as_str()).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        parcels.shuffle(&mut rng::stream2(seed, 77, f as u64));
        let keep = libm::ceil(fractions[k] * parcels.len() as f64) as usize;
        let kept: alloc::collections::BTreeSet<&str> =
            parcels[..keep.min(parcels.len())].iter().copied().collect();
        let sub: Vec<usize> = train
            .iter()
            .copied()
            .filter(|&i| kept.contains(m.parcel_ids[i].as_str()))
            .collect();
        let labels = m.labels()?;
        let pos = sub.iter().filter(|&&i| labels[i] == 1).count();
        if pos == 0 || pos == sub.len() {
            return Ok(None);
        }
        let (tr, val) = fit_and_score(m, spec, metric, &sub, &held, model_seed(seed, 0, f), true)?;
        Ok(Some((tr.unwrap_or(f64::NAN), val)))
    });
    let cells: Vec<Option<(f64, f64)>> = cells.into_iter().collect::<Result<_>>()?;
    let points = fractions
        .iter()
        .enumerate()
        .map(|(k, &fraction)| {
            let train: Vec<Option<f64>> =
                (0..folds).map(|f| cells[f * nf + k].map(|c| c.0)).collect();
            let validation: Vec<Option<f64>> =
                (0..folds).map(|f| cells[f * nf + k].map(|c| c.1)).collect();
            let (train_mean, train_sd) = summarize(&train);
            let (validation_mean, validation_sd) = summarize(&validation);
            LearningCurvePoint {
                fraction,
                train,
                validation,
                train_mean,
                train_sd,
                validation_mean,
                validation_sd,
            }
        })
        .collect();
    Ok(LearningCurveReport {
        metric,
        folds,
        seed,
        points,
    })
}

/// Named hyperparameter axes; the Cartesian product is evaluated in key order.
pub type ParamGrid = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: Vec<(String, f64)>,
    pub spec: ModelSpec,
    pub report: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub rows: Vec<GridRow>,
}

impl GridSearchResult {
    pub fn best(&self) -> &GridRow {
        &self.rows[self.best_index]
    }
}

fn grid_points(grid: &ParamGrid) -> Result<Vec<Vec<(String, f64)>>> {
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(Error::InvalidConfig("parameter grid is empty".into()));
    }
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (name, values) in grid {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for &v in values {
                let mut q = p.clone();
                q.push((name.clone(), v));
                next.push(q);
            }
        }
        points = next;
    }
    Ok(points)
}

/// Exhaustive search; the best point has the highest mean metric, ties going
/// to the lexicographically smallest parameter vector.
pub fn grid_search<E: Executor>(
    m: &FeatureMatrix,
    base: &ModelSpec,
    grid: &ParamGrid,
    metric: Metric,
    folds: usize,
    n_runs: usize,
    seed: u64,
    exec: &E,
) -> Result<GridSearchResult> {
    let points = grid_points(grid)?;
    let mut rows = Vec::with_capacity(points.len());
    for params in points {
        let mut spec = base.clone();
        for (name, v) in &params {
            spec.set_param(name, *v)?;
        }
        spec.validate()?;
        let report = cross_validate(m, &spec, metric, folds, n_runs, seed, exec)?;
        rows.push(GridRow {
            params,
            spec,
            report,
        });
    }
    let lex = |a: &[(String, f64)], b: &[(String, f64)]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.1.total_cmp(&y.1))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    };
    let mut best_index = 0;
    for i in 1..rows.len() {
        let (a, b) = (rows[i].report.mean, rows[best_index].report.mean);
        if a > b || (a == b && lex(&rows[i].params, &rows[best_index].params).is_lt()) {
            best_index = i;
        }
    }
    Ok(GridSearchResult { best_index, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut c, mut t, mut n) = (0.0, 0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    n += 1.0;
                    if scores[i] > scores[j] {
                        c += 1.0;
                    } else if scores[i] == scores[j] {
                        t += 1.0;
                    }
                }
            }
        }
        (c + 0.5 * t) / n
    }

    #[test]
    fn hand_case() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [0, 0, 1, 1];
        assert_eq!(auc(&s, &y).unwrap(), 0.75);
        assert_eq!(pairwise(&s, &y), 0.75);
        let roc = roc_auc(&s, &y).unwrap();
        assert!((roc.trapezoid_area() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ties_and_separation() {
        assert_eq!(auc(&[0.0, 1.0], &[0, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5, 0.5], &[0, 1, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.5, 0.5], &[1, 1]), Err(Error::SingleClass));
    }

    #[test]
    fn curve_matches_rank_statistic() {
        let mut r = rng::stream(3, 0);
        for _ in 0..50 {
            let s: Vec<f64> = (0..40).map(|_| f64::from(r.gen_range(0..12u8))).collect();
            let mut y: Vec<u8> = (0..40).map(|_| r.gen_range(0..2u8)).collect();
            y[0] = 0;
            y[1] = 1;
            let roc = roc_auc(&s, &y).unwrap();
            assert_eq!(roc.auc, pairwise(&s, &y));
            assert!((roc.trapezoid_area() - roc.auc).abs() <= 1e-12);
            assert!(roc.tpr.windows(2).all(|w| w[0] <= w[1]));
            assert!(roc.fpr.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn recall_examples() {
        assert_eq!(
            recall_at_threshold(&[0.6, 0.4, 0.9], &[1, 1, 0], 0.5).unwrap(),
            0.5
        );
        assert_eq!(
            recall_at_threshold(&[0.6, 0.4, 0.9], &[1, 1, 0], 0.0).unwrap(),
            1.0
        );
        assert_eq!(
            recall_at_threshold(&[1.0, 1.0, 0.2], &[1, 1, 0], 0.5).unwrap(),
            1.0
        );
        assert_eq!(
            recall_at_threshold(&[0.2], &[0], 0.5),
            Err(Error::NoPositives)
        );
        assert_eq!(
            accuracy_at_threshold(&[0.6, 0.4, 0.9], &[1, 1, 0], 0.5).unwrap(),
            1.0 / 3.0
        );
        assert_eq!(mse(&[1.0, 3.0], &[0.0, 1.0]).unwrap(), 2.5);
    }

    #[test]
    fn monotone_transform_invariance() {
        let mut r = rng::stream(8, 0);
        let s: Vec<f64> = (0..200).map(|_| r.gen_range(-3.0..3.0)).collect();
        let y: Vec<u8> = s
            .iter()
            .map(|&v| u8::from(r.gen::<f64>() < crate::math::sigmoid(v)))
            .collect();
        let t: Vec<f64> = s.iter().map(|&v| libm::exp(2.0 * v) + 7.0).collect();
        assert_eq!(auc(&s, &y).unwrap(), auc(&t, &y).unwrap());
    }

    #[test]
    fn grid_points_are_cartesian() {
        let mut g = ParamGrid::new();
        g.insert("max_depth".into(), vec![1.0, 2.0]);
        g.insert("gamma".into(), vec![0.0, 0.1, 0.2]);
        let p = grid_points(&g).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![("gamma".into(), 0.0), ("max_depth".into(), 1.0)]);
        assert!(grid_points(&ParamGrid::new()).is_err());
    }
}
