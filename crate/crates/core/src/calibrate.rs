//! Sigmoid (Platt) calibration of classifier scores.
//!
//! The map is `p(s) = 1 / (1 + exp(A*s + B))`, fit by Newton's method with a
//! backtracking line search on the log-loss against smoothed targets.
//! [`fit_calibrated`] produces the scores to fit on out-of-fold, so the
//! calibration never sees a score from a model trained on the same row.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::model::{ModelSpec, TrainedModel};
use crate::rng;
use crate::split::{fold_rows, group_kfold};

pub const DEFAULT_FOLDS: usize = 5;
const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-10;
const MIN_STEP: f64 = 1e-10;
const SIGMA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationKind {
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    pub kind: CalibrationKind,
    pub a: f64,
    pub b: f64,
    pub fit_folds: usize,
}

impl CalibrationMap {
    #[inline]
    pub fn apply(&self, score: f64) -> f64 {
        apply_sigmoid(self.a, self.b, score)
    }
}

#[inline]
fn apply_sigmoid(a: f64, b: f64, s: f64) -> f64 {
    let f = a * s + b;
    if f >= 0.0 {
        let e = libm::exp(-f);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + libm::exp(f))
    }
}

/// Log-loss of the map (a, b) against smoothed targets.
pub fn platt_objective(scores: &[f64], labels: &[u8], a: f64, b: f64) -> f64 {
    let (hi, lo) = targets(labels);
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let t = if y == 1 { hi } else { lo };
            let f = a * s + b;
            if f >= 0.0 {
                t * f + libm::log1p(libm::exp(-f))
            } else {
                (t - 1.0) * f + libm::log1p(libm::exp(f))
            }
        })
        .sum()
}

fn targets(labels: &[u8]) -> (f64, f64) {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    ((pos + 1.0) / (pos + 2.0), 1.0 / (neg + 2.0))
}

/// Fit (A, B) on the given scores.
pub fn fit_platt(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidConfig(
            "scores and labels differ in length".into(),
        ));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    crate::gbt::check_binary(labels)?;
    let (hi, lo) = targets(labels);
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;

    let mut a = 0.0;
    let mut b = libm::log((neg + 1.0) / (pos + 1.0));
    let mut fval = platt_objective(scores, labels, a, b);

    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&s, &y) in scores.iter().zip(labels) {
            let t = if y == 1 { hi } else { lo };
            let p = apply_sigmoid(a, b, s);
            let d2 = p * (1.0 - p);
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = t - p;
            g1 += s * d1;
            g2 += d1;
        }
        if libm::sqrt(g1 * g1 + g2 * g2) < GRAD_TOL {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0;
        let mut accepted = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_objective(scores, labels, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent available at machine precision
            break;
        }
    }
    Ok((a, b))
}

/// Fit a sigmoid map; `folds` records how the scores were produced.
pub fn fit_calibration(scores: &[f64], labels: &[u8], folds: usize) -> Result<CalibrationMap> {
    let (a, b) = fit_platt(scores, labels)?;
    Ok(CalibrationMap {
        kind: CalibrationKind::Sigmoid,
        a,
        b,
        fit_folds: folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedClassifier {
    pub base: TrainedModel,
    pub calibration: CalibrationMap,
}

impl CalibratedClassifier {
    pub fn raw_score(&self, row: &[f64]) -> Result<f64> {
        self.base.raw_score(row)
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.base.raw_score(row).map(|s| self.calibration.apply(s))
    }

    pub fn predict_probas(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..m.n_rows())
            .map(|i| self.predict_proba(m.row(i)))
            .collect()
    }
}

/// Raw out-of-fold scores: parcel-grouped folds, one refit per fold.
pub fn out_of_fold_scores<E: Executor>(
    m: &FeatureMatrix,
    spec: &ModelSpec,
    folds: usize,
    seed: u64,
    exec: &E,
) -> Result<Vec<f64>> {
    let fold_of = group_kfold(&m.parcel_ids, folds, seed)?;
    let per_fold = exec.map_indexed(folds, |f| -> Result<(Vec<usize>, Vec<f64>)> {
        let (train, held) = fold_rows(&fold_of, f);
        let model = spec
            .with_seed(rng::derive_seed(spec.seed(), f as u64 + 1))
            .train(&m.select_rows(&train))?;
        let scores = model.raw_scores(&m.select_rows(&held))?;
        Ok((held, scores))
    });
    let mut oof = alloc::vec![0.0; m.n_rows()];
    for r in per_fold {
        let (held, scores) = r?;
        for (i, s) in held.into_iter().zip(scores) {
            oof[i] = s;
        }
    }
    Ok(oof)
}

/// Train the base model on all rows and wrap it with a map fit on
/// out-of-fold scores.
pub fn fit_calibrated<E: Executor>(
    m: &FeatureMatrix,
    spec: &ModelSpec,
    folds: usize,
    seed: u64,
    exec: &E,
) -> Result<CalibratedClassifier> {
    let labels = m.labels()?;
    let oof = out_of_fold_scores(m, spec, folds, seed, exec)?;
    let calibration = fit_calibration(&oof, labels, folds)?;
    let base = spec.train(m)?;
    Ok(CalibratedClassifier { base, calibration })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{logit, sigmoid};
    use rand::Rng;

    #[test]
    fn zero_map_is_one_half() {
        let m = CalibrationMap {
            kind: CalibrationKind::Sigmoid,
            a: 0.0,
            b: 0.0,
            fit_folds: 0,
        };
        for s in [-3.0, 0.0, 0.4, 100.0] {
            assert_eq!(m.apply(s), 0.5);
        }
    }

    #[test]
    fn log_odds_scores_recover_identity() {
        let mut r = rng::stream(11, 0);
        let n = 20_000;
        let scores: Vec<f64> = (0..n).map(|_| logit(r.gen_range(0.02..0.98))).collect();
        let labels: Vec<u8> = scores
            .iter()
            .map(|&s| u8::from(r.gen::<f64>() < sigmoid(s)))
            .collect();
        let map = fit_calibration(&scores, &labels, 0).unwrap();
        for k in 1..10 {
            let p = k as f64 / 10.0;
            assert!(
                (map.apply(logit(p)) - p).abs() < 0.02,
                "{p} -> {}",
                map.apply(logit(p))
            );
        }
    }

    #[test]
    fn constant_scores_give_base_rate() {
        let labels: Vec<u8> = (0..200).map(|i| u8::from(i % 4 == 0)).collect();
        let scores = alloc::vec![0.3; 200];
        let map = fit_calibration(&scores, &labels, 0).unwrap();
        assert!((map.apply(0.3) - 0.25).abs() < 0.02);
    }

    #[test]
    fn inverted_labels_flip_slope() {
        let mut r = rng::stream(5, 0);
        let scores: Vec<f64> = (0..500).map(|_| r.gen_range(-2.0..2.0)).collect();
        let labels: Vec<u8> = scores
            .iter()
            .map(|&s| u8::from(r.gen::<f64>() < sigmoid(2.0 * s)))
            .collect();
        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        let (a, _) = fit_platt(&scores, &labels).unwrap();
        let (a2, _) = fit_platt(&scores, &flipped).unwrap();
        assert!(a < 0.0 && a2 > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(fit_platt(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass));
        assert_eq!(
            fit_platt(&[0.1, f64::NAN], &[0, 1]),
            Err(Error::NonFinite(1))
        );
    }

    #[test]
    fn matches_grid_oracle() {
        let mut r = rng::stream(21, 0);
        let scores: Vec<f64> = (0..20).map(|_| r.gen_range(-3.0..3.0)).collect();
        let labels: Vec<u8> = scores
            .iter()
            .map(|&s| u8::from(r.gen::<f64>() < sigmoid(1.3 * s - 0.4)))
            .collect();
        let (a, b) = fit_platt(&scores, &labels).unwrap();
        let fitted = platt_objective(&scores, &labels, a, b);
        // coarse grid, then successively finer grids around the incumbent
        let (mut ba, mut bb, mut best) = (0.0, 0.0, f64::INFINITY);
        let mut span = 10.0;
        let (mut ca, mut cb) = (0.0, 0.0);
        for _ in 0..8 {
            for i in -40..=40 {
                for j in -40..=40 {
                    let ga = ca + span * i as f64 / 40.0;
                    let gb = cb + span * j as f64 / 40.0;
                    let f = platt_objective(&scores, &labels, ga, gb);
                    if f < best {
                        best = f;
                        ba = ga;
                        bb = gb;
                    }
                }
            }
            ca = ba;
            cb = bb;
            span /= 8.0;
        }
        assert!((fitted - best).abs() < 1e-3, "{fitted} vs {best}");
        assert!(fitted <= best + 1e-9);
    }
}
