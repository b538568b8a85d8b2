//! The `gbt-v1` model document: one JSON file holding the model kind, its
//! config, feature names, the encoding map, the calibration map and the
//! ensemble itself (trees in preorder, or AdaBoost learners with their alphas).

use std::path::Path;

use aquarisk_core::adaboost::{AdaBoostConfig, AdaBoostModel, Learner};
use aquarisk_core::calibrate::{CalibratedClassifier, CalibrationMap};
use aquarisk_core::encode::{EncodingMap, MedianImputer};
use aquarisk_core::gbt::{FlatNode, GbtConfig, GbtModel, Tree};
use aquarisk_core::model::{ModelKind, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const FORMAT_VERSION: &str = "gbt-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtBody {
    pub config: GbtConfig,
    pub base_margin: f64,
    pub trees: Vec<Vec<FlatNode>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostBody {
    pub config: AdaBoostConfig,
    pub imputer: MedianImputer,
    pub learners: Vec<Learner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: String,
    pub kind: ModelKind,
    /// What the model predicts, e.g. `lead_exceedance` or `submission`.
    pub target: String,
    pub feature_names: Vec<String>,
    pub encoding_map: EncodingMap,
    pub calibration: CalibrationMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbt: Option<GbtBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaboost: Option<AdaBoostBody>,
}

impl ModelDocument {
    pub fn from_model(
        model: &CalibratedClassifier,
        encoding_map: &EncodingMap,
        target: &str,
    ) -> Self {
        let (gbt, adaboost) = match &model.base {
            TrainedModel::Gbt(m) => (
                Some(GbtBody {
                    config: m.config.clone(),
                    base_margin: m.base_margin,
                    trees: m.trees.iter().map(Tree::flatten).collect(),
                }),
                None,
            ),
            TrainedModel::Adaboost(m) => (
                None,
                Some(AdaBoostBody {
                    config: m.config.clone(),
                    imputer: m.imputer.clone(),
                    learners: m.learners.clone(),
                }),
            ),
        };
        ModelDocument {
            version: FORMAT_VERSION.into(),
            kind: model.base.kind(),
            target: target.into(),
            feature_names: model.base.feature_names().to_vec(),
            encoding_map: encoding_map.clone(),
            calibration: model.calibration.clone(),
            gbt,
            adaboost,
        }
    }

    pub fn to_model(&self) -> aquarisk_core::Result<CalibratedClassifier> {
        let bad = |m: &str| aquarisk_core::Error::MalformedModel(m.into());
        if self.version != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        let d = self.feature_names.len();
        let base = match (self.kind, &self.gbt, &self.adaboost) {
            (ModelKind::Gbt, Some(b), None) => TrainedModel::Gbt(GbtModel {
                config: b.config.clone(),
                feature_names: self.feature_names.clone(),
                base_margin: b.base_margin,
                trees: b
                    .trees
                    .iter()
                    .map(|t| Tree::from_flat(t, d))
                    .collect::<aquarisk_core::Result<_>>()?,
            }),
            (ModelKind::Adaboost, None, Some(b)) => {
                if b.imputer.medians.len() != d {
                    return Err(bad("imputer width differs from feature names"));
                }
                TrainedModel::Adaboost(AdaBoostModel {
                    config: b.config.clone(),
                    feature_names: self.feature_names.clone(),
                    imputer: b.imputer.clone(),
                    learners: b.learners.clone(),
                })
            }
            _ => return Err(bad("body does not match kind")),
        };
        Ok(CalibratedClassifier {
            base,
            calibration: self.calibration.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        ModelDocument::from_json(&text).map_err(|e| AppError::json(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aquarisk_core::calibrate::fit_calibrated;
    use aquarisk_core::encode::FeatureMatrix;
    use aquarisk_core::model::ModelSpec;
    use aquarisk_core::rng::{standard_normal, stream};
    use aquarisk_core::Sequential;
    use rand::Rng;

    fn data() -> FeatureMatrix {
        let mut r = stream(4, 0);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let mut row: Vec<f64> = (0..4).map(|_| standard_normal(&mut r)).collect();
                if i % 9 == 0 {
                    row[2] = f64::NAN;
                }
                row
            })
            .collect();
        let labels = rows
            .iter()
            .map(|x| u8::from(r.gen::<f64>() < 1.0 / (1.0 + (-2.0 * x[0]).exp())))
            .collect();
        let ids = (0..300).map(|i| format!("P{}", i / 2)).collect();
        FeatureMatrix::from_rows(
            (0..4).map(|j| format!("f{j}")).collect(),
            rows,
            ids,
            Some(labels),
        )
        .unwrap()
    }

    fn encoding() -> EncodingMap {
        EncodingMap {
            numeric: (0..4).map(|j| format!("f{j}")).collect(),
            categorical: vec![],
        }
    }

    #[test]
    fn gbt_and_adaboost_roundtrip_bit_exact() {
        let m = data();
        let specs = [
            ModelSpec::Gbt(GbtConfig {
                n_trees: 30,
                ..GbtConfig::default()
            }),
            ModelSpec::Adaboost(AdaBoostConfig {
                n_estimators: 25,
                ..AdaBoostConfig::default()
            }),
        ];
        for spec in specs {
            let model = fit_calibrated(&m, &spec, 3, 1, &Sequential).unwrap();
            let doc = ModelDocument::from_model(&model, &encoding(), "lead_exceedance");
            let json = doc.to_json();
            let back = ModelDocument::from_json(&json).unwrap();
            assert_eq!(back, doc);
            assert_eq!(back.to_json(), json);
            let restored = back.to_model().unwrap();
            assert_eq!(restored, model);
            for i in 0..m.n_rows() {
                assert_eq!(
                    restored.predict_proba(m.row(i)).unwrap().to_bits(),
                    model.predict_proba(m.row(i)).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn rejects_mismatched_body() {
        let model = fit_calibrated(
            &data(),
            &ModelSpec::Gbt(GbtConfig {
                n_trees: 3,
                ..GbtConfig::default()
            }),
            3,
            1,
            &Sequential,
        )
        .unwrap();
        let mut doc = ModelDocument::from_model(&model, &encoding(), "x");
        doc.kind = ModelKind::Adaboost;
        assert!(doc.to_model().is_err());
        doc.kind = ModelKind::Gbt;
        doc.version = "gbt-v0".into();
        assert!(doc.to_model().is_err());
    }
}
