//! Ranking untested parcels, risk tiers and submission-bucket quartile tables.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::calibrate::CalibratedClassifier;
use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::math::quantile_linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    High,
    Medium,
    Low,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::High => "high",
            Tier::Medium => "medium",
            Tier::Low => "low",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierThresholds {
    pub high: f64,
    pub low: f64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        TierThresholds {
            high: 0.33,
            low: 0.15,
        }
    }
}

impl TierThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.high > self.low {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "high tier threshold must exceed the low one".into(),
            ))
        }
    }

    /// High at or above `high`, low strictly below `low`, medium otherwise.
    pub fn tier(&self, p: f64) -> Tier {
        if p >= self.high {
            Tier::High
        } else if p < self.low {
            Tier::Low
        } else {
            Tier::Medium
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub parcel_id: String,
    pub probability: f64,
    pub tier: Tier,
    pub tested_before: bool,
}

/// Top `k` parcels by score among those never tested; ties by parcel id.
pub fn rank_by_score(
    parcel_ids: &[String],
    scores: &[f64],
    tested: &BTreeSet<String>,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if parcel_ids.len() != scores.len() {
        return Err(Error::InvalidConfig(
            "parcel ids and scores differ in length".into(),
        ));
    }
    let mut rows: Vec<(String, f64)> = parcel_ids
        .iter()
        .zip(scores)
        .filter(|(p, _)| !tested.contains(*p))
        .map(|(p, &s)| (p.clone(), s))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(k);
    Ok(rows)
}

/// Score the prediction matrix with the calibrated model and return the top
/// `k` untested parcels, tiered.
pub fn rank_untested(
    model: &CalibratedClassifier,
    m: &FeatureMatrix,
    tested: &BTreeSet<String>,
    k: usize,
    thresholds: &TierThresholds,
) -> Result<Vec<RiskAssessment>> {
    thresholds.validate()?;
    let probs = model.predict_probas(m)?;
    let ranked = rank_by_score(&m.parcel_ids, &probs, tested, k)?;
    Ok(ranked
        .into_iter()
        .map(|(parcel_id, probability)| RiskAssessment {
            parcel_id,
            probability,
            tier: thresholds.tier(probability),
            tested_before: false,
        })
        .collect())
}

/// Re-tier assessments under new thresholds.
pub fn assign_tiers(
    assessments: &[RiskAssessment],
    thresholds: &TierThresholds,
) -> Result<Vec<RiskAssessment>> {
    thresholds.validate()?;
    Ok(assessments
        .iter()
        .map(|a| RiskAssessment {
            tier: thresholds.tier(a.probability),
            ..a.clone()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmissionBucket {
    Zero,
    One,
    TwoOrMore,
}

impl SubmissionBucket {
    pub const ALL: [SubmissionBucket; 3] = [
        SubmissionBucket::Zero,
        SubmissionBucket::One,
        SubmissionBucket::TwoOrMore,
    ];

    pub fn of(count: usize) -> Self {
        match count {
            0 => SubmissionBucket::Zero,
            1 => SubmissionBucket::One,
            _ => SubmissionBucket::TwoOrMore,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SubmissionBucket::Zero => "0",
            SubmissionBucket::One => "1",
            SubmissionBucket::TwoOrMore => "2+",
        }
    }
}

/// Split year for the age strata.
pub const STRATUM_YEAR: i32 = 1940;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YearStratum {
    /// Built before 1940.
    Before1940,
    /// Built in 1940 or later.
    From1940,
}

impl YearStratum {
    pub fn of(year: i32) -> Self {
        if year < STRATUM_YEAR {
            YearStratum::Before1940
        } else {
            YearStratum::From1940
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            YearStratum::Before1940 => "<1940",
            YearStratum::From1940 => ">=1940",
        }
    }
}

/// One occupied parcel's inputs to the quartile tables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuartileInput {
    pub year_built: Option<i32>,
    pub submissions: usize,
    /// One entry per attribute, aligned with the attribute names.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    pub attribute: String,
    pub bucket: SubmissionBucket,
    pub stratum: Option<YearStratum>,
    /// Parcels in the bucket (and stratum).
    pub n_parcels: usize,
    /// Parcels with a value for this attribute.
    pub n_values: usize,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub nonzero_share: Option<f64>,
}

/// Quartiles (inclusive linear interpolation) of a set of values.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some((
        quantile_linear(&v, 0.25)?,
        quantile_linear(&v, 0.5)?,
        quantile_linear(&v, 0.75)?,
    ))
}

/// Quartile rows per attribute and submission bucket, optionally further
/// split by the 1940 year-built strata (parcels without a year are left out
/// of stratified rows). Empty cells yield rows with absent statistics.
pub fn quartile_tables(
    inputs: &[QuartileInput],
    attributes: &[String],
    stratify: bool,
) -> Result<Vec<QuartileRow>> {
    if let Some(bad) = inputs.iter().find(|r| r.values.len() != attributes.len()) {
        return Err(Error::FeatureMismatch {
            expected: attributes.len(),
            got: bad.values.len(),
        });
    }
    let strata: Vec<Option<YearStratum>> = if stratify {
        alloc::vec![Some(YearStratum::Before1940), Some(YearStratum::From1940)]
    } else {
        alloc::vec![None]
    };
    let mut rows = Vec::new();
    for (a, name) in attributes.iter().enumerate() {
        for &stratum in &strata {
            for bucket in SubmissionBucket::ALL {
                let members: Vec<&QuartileInput> = inputs
                    .iter()
                    .filter(|r| SubmissionBucket::of(r.submissions) == bucket)
                    .filter(|r| match stratum {
                        None => true,
                        Some(s) => r.year_built.map(YearStratum::of) == Some(s),
                    })
                    .collect();
                let vals: Vec<f64> = members
                    .iter()
                    .filter_map(|r| r.values[a])
                    .filter(|v| !v.is_nan())
                    .collect();
                let q = quartiles(&vals);
                let nonzero = if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().filter(|&&v| v != 0.0).count() as f64 / vals.len() as f64)
                };
                rows.push(QuartileRow {
                    attribute: name.clone(),
                    bucket,
                    stratum,
                    n_parcels: members.len(),
                    n_values: vals.len(),
                    q1: q.map(|t| t.0),
                    median: q.map(|t| t.1),
                    q3: q.map(|t| t.2),
                    nonzero_share: nonzero,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    #[test]
    fn tier_boundaries() {
        let t = TierThresholds::default();
        assert_eq!(t.tier(0.5), Tier::High);
        assert_eq!(t.tier(0.33), Tier::High);
        assert_eq!(t.tier(0.15), Tier::Medium);
        assert_eq!(t.tier(0.1499), Tier::Low);
        assert!(TierThresholds {
            high: 0.2,
            low: 0.2
        }
        .validate()
        .is_err());
    }

    #[test]
    fn ranking_excludes_tested_and_breaks_ties_by_id() {
        let ids: Vec<String> = ["c", "a", "b", "d"].iter().map(|s| s.to_string()).collect();
        let scores = [0.9, 0.5, 0.5, 0.95];
        let tested: BTreeSet<String> = ["d".to_string()].into_iter().collect();
        let r = rank_by_score(&ids, &scores, &tested, 10).unwrap();
        let order: Vec<&str> = r.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(order, ["c", "a", "b"]);
        assert_eq!(rank_by_score(&ids, &scores, &tested, 1).unwrap()[0].0, "c");
        let all: BTreeSet<String> = ids.iter().cloned().collect();
        assert!(rank_by_score(&ids, &scores, &all, 3).unwrap().is_empty());
        assert!(rank_by_score(&ids, &scores, &tested, 0).is_err());
    }

    fn sorted_oracle(v: &[f64], q: f64) -> f64 {
        // numpy-style linear interpolation written out directly
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let h = (s.len() - 1) as f64 * q;
        let i = h as usize;
        if i + 1 >= s.len() {
            s[i]
        } else {
            s[i] + (h - i as f64) * (s[i + 1] - s[i])
        }
    }

    #[test]
    fn quartiles_match_sort_oracle() {
        for v in [
            vec![3.0, 1.0, 2.0],
            vec![4.0, 1.0, 3.0, 2.0],
            vec![5.0, 1.0, 9.0, 2.0, 7.0],
            vec![10.0, 2.0, 8.0, 4.0, 6.0, 0.0],
        ] {
            let (a, b, c) = quartiles(&v).unwrap();
            assert_eq!(a, sorted_oracle(&v, 0.25));
            assert_eq!(b, sorted_oracle(&v, 0.5));
            assert_eq!(c, sorted_oracle(&v, 0.75));
        }
        assert_eq!(quartiles(&[2.0, 2.0, 2.0, 2.0]), Some((2.0, 2.0, 2.0)));
    }

    #[test]
    fn buckets_partition_and_empty_rows() {
        let inputs: Vec<QuartileInput> = (0..9)
            .map(|i| QuartileInput {
                year_built: Some(1900 + 10 * i as i32),
                submissions: i % 2,
                values: vec![Some(i as f64)],
            })
            .collect();
        let rows = quartile_tables(&inputs, &["v".to_string()], false).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.iter().map(|r| r.n_parcels).sum::<usize>(), 9);
        let two = rows
            .iter()
            .find(|r| r.bucket == SubmissionBucket::TwoOrMore)
            .unwrap();
        assert_eq!(two.median, None);
        let strat = quartile_tables(&inputs, &["v".to_string()], true).unwrap();
        assert_eq!(strat.len(), 6);
        assert_eq!(strat.iter().map(|r| r.n_parcels).sum::<usize>(), 9);
        assert_eq!(format!("{}", SubmissionBucket::TwoOrMore.as_str()), "2+");
    }
}
