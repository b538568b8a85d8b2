//! A uniform surface over the two learners.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adaboost::{train_adaboost, AdaBoostConfig, AdaBoostModel};
use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::gbt::{train_gbt, GbtConfig, GbtModel};
use crate::math::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbt,
    Adaboost,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::Adaboost => "adaboost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Gbt(GbtConfig),
    Adaboost(AdaBoostConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Gbt(_) => ModelKind::Gbt,
            ModelSpec::Adaboost(_) => ModelKind::Adaboost,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Gbt(c) => c.seed,
            ModelSpec::Adaboost(c) => c.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> ModelSpec {
        let mut s = self.clone();
        match &mut s {
            ModelSpec::Gbt(c) => c.seed = seed,
            ModelSpec::Adaboost(c) => c.seed = seed,
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Gbt(c) => c.validate(),
            ModelSpec::Adaboost(c) => c.validate(),
        }
    }

    /// Set a hyperparameter by name (used by grid search).
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let int = |v: f64| -> Result<usize> {
            if v >= 0.0 && libm::trunc(v) == v {
                Ok(v as usize)
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be a nonnegative integer"
                )))
            }
        };
        match self {
            ModelSpec::Gbt(c) => match name {
                "n_trees" => c.n_trees = int(value)?,
                "subsample" => c.subsample = value,
                "colsample" => c.colsample = value,
                "max_depth" => c.max_depth = int(value)?,
                "gamma" => c.gamma = value,
                "alpha" => c.alpha = value,
                "lambda" => c.lambda = value,
                "learning_rate" => c.learning_rate = value,
                "min_child_hessian" => c.min_child_hessian = value,
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown gbt parameter `{name}`"
                    )))
                }
            },
            ModelSpec::Adaboost(c) => match name {
                "n_estimators" => c.n_estimators = int(value)?,
                "learning_rate" => c.learning_rate = value,
                "weak_depth" => c.weak_depth = int(value)?,
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown adaboost parameter `{name}`"
                    )))
                }
            },
        }
        Ok(())
    }

    pub fn train(&self, m: &FeatureMatrix) -> Result<TrainedModel> {
        match self {
            ModelSpec::Gbt(c) => train_gbt(m, c).map(TrainedModel::Gbt),
            ModelSpec::Adaboost(c) => train_adaboost(m, c).map(TrainedModel::Adaboost),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Gbt(GbtModel),
    Adaboost(AdaBoostModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Gbt(_) => ModelKind::Gbt,
            TrainedModel::Adaboost(_) => ModelKind::Adaboost,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::Gbt(m) => &m.feature_names,
            TrainedModel::Adaboost(m) => &m.feature_names,
        }
    }

    /// The score fed to calibration: the boosted margin for GBT, the vote share for AdaBoost.
    pub fn raw_score(&self, row: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Gbt(m) => m.predict_margin(row),
            TrainedModel::Adaboost(m) => m.predict_score(row),
        }
    }

    /// Uncalibrated probability-like score in [0, 1].
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Gbt(m) => m.predict_margin(row).map(sigmoid),
            TrainedModel::Adaboost(m) => m.predict_score(row),
        }
    }

    pub fn raw_scores(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..m.n_rows()).map(|i| self.raw_score(m.row(i))).collect()
    }

    pub fn predict_probas(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..m.n_rows())
            .map(|i| self.predict_proba(m.row(i)))
            .collect()
    }

    /// Split-count importance for GBT, Gini importance for AdaBoost.
    pub fn importance(&self) -> BTreeMap<String, f64> {
        match self {
            TrainedModel::Gbt(m) => m.split_count_importance(),
            TrainedModel::Adaboost(m) => m.gini_importance(),
        }
    }
}
