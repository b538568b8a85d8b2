//! Pipeline configuration, read from TOML. Every key is optional except the
//! master seed, which may also come from `--seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aquarisk_core::adaboost::AdaBoostConfig;
use aquarisk_core::calibrate::DEFAULT_FOLDS;
use aquarisk_core::evaluate::Metric;
use aquarisk_core::gbt::GbtConfig;
use aquarisk_core::model::ModelSpec;
use aquarisk_core::quantile::DEFAULT_BOOTSTRAP;
use aquarisk_core::risk::TierThresholds;
use aquarisk_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Source dataset paths. Unset paths default to files of the usual name in
/// the output directory, which is where `synth` writes them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub parcels: Option<PathBuf>,
    pub tests: Option<PathBuf>,
    pub census: Option<PathBuf>,
    pub service_lines: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub metric: String,
    pub folds: usize,
    pub runs: usize,
    pub learning_curve: bool,
    pub fractions: Vec<f64>,
    /// Parameter name to candidate values; empty disables grid search.
    pub grid: BTreeMap<String, Vec<f64>>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            metric: "auc".into(),
            folds: 5,
            runs: 10,
            learning_curve: false,
            fractions: aquarisk_core::evaluate::default_fractions(),
            grid: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesConfig {
    pub bootstrap: usize,
    pub q: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            bootstrap: DEFAULT_BOOTSTRAP,
            q: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankConfig {
    pub top_k: usize,
    pub high: f64,
    pub low: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        let t = TierThresholds::default();
        RankConfig {
            top_k: 1000,
            high: t.high,
            low: t.low,
        }
    }
}

impl RankConfig {
    pub fn thresholds(&self) -> TierThresholds {
        TierThresholds {
            high: self.high,
            low: self.low,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: DataPaths,
    /// Lead-exceedance model.
    pub model: ModelSpec,
    /// Submission-propensity model.
    pub propensity: ModelSpec,
    pub calibration_folds: usize,
    pub evaluate: EvaluateConfig,
    pub series: SeriesConfig,
    pub rank: RankConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            out: None,
            data: DataPaths::default(),
            model: ModelSpec::Gbt(GbtConfig::default()),
            propensity: ModelSpec::Adaboost(AdaBoostConfig::default()),
            calibration_folds: DEFAULT_FOLDS,
            evaluate: EvaluateConfig::default(),
            series: SeriesConfig::default(),
            rank: RankConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| AppError::Toml {
            path: path.into(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut cfg = PipelineConfig::from_toml(&text, path)?;
        // relative data paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.data.parcels,
            &mut cfg.data.tests,
            &mut cfg.data.census,
            &mut cfg.data.service_lines,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(o) = &mut cfg.out {
            if o.is_relative() {
                *o = base.join(&*o);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(AppError::Config(m));
        if self.seed.is_none() {
            return err("missing `seed`: set it in the config or pass --seed".into());
        }
        self.model.validate()?;
        self.propensity.validate()?;
        if self.calibration_folds < 2 {
            return err("calibration_folds must be at least 2".into());
        }
        Metric::parse(&self.evaluate.metric)?;
        if self.evaluate.folds < 2 || self.evaluate.runs == 0 {
            return err("evaluate needs folds >= 2 and runs >= 1".into());
        }
        if !(self.series.q > 0.0 && self.series.q < 1.0) {
            return err("series.q must lie in (0, 1)".into());
        }
        if self.rank.top_k == 0 {
            return err("rank.top_k must be positive".into());
        }
        self.rank.thresholds().validate()?;
        self.synth.validate()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config carries a seed")
    }
}
