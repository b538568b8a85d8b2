//! One-hot encoding of merged rows into a dense numeric matrix.
//!
//! Missing numeric values become `NaN`, which the tree learner routes along a
//! learned default direction. Categories are discovered from the fitting data
//! and ordered lexicographically; at replay time an unseen or missing
//! category encodes as all-zero indicators.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::{MergedTable, RowSchema};
use crate::records::ACTION_LEVEL_PPB;

/// Value used for a missing numeric feature.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    pub name: String,
    pub categories: Vec<String>,
}

/// Recorded column layout so prediction-time rows encode identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub numeric: Vec<String>,
    pub categorical: Vec<CategoricalColumn>,
}

impl EncodingMap {
    pub fn fit(table: &MergedTable) -> Self {
        let RowSchema {
            numeric,
            categorical,
        } = &table.schema;
        let categorical = categorical
            .iter()
            .enumerate()
            .map(|(ci, name)| {
                let cats: BTreeSet<&str> = table
                    .rows
                    .iter()
                    .filter_map(|r| r.categorical[ci].as_deref())
                    .collect();
                CategoricalColumn {
                    name: name.clone(),
                    categories: cats.into_iter().map(String::from).collect(),
                }
            })
            .collect();
        EncodingMap {
            numeric: numeric.clone(),
            categorical,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.numeric.clone();
        for c in &self.categorical {
            names.extend(c.categories.iter().map(|v| format!("{}={}", c.name, v)));
        }
        names
    }

    pub fn n_features(&self) -> usize {
        self.numeric.len()
            + self
                .categorical
                .iter()
                .map(|c| c.categories.len())
                .sum::<usize>()
    }

    /// Encode a table; labels are attached when every row carries a test.
    pub fn apply(&self, table: &MergedTable) -> Result<FeatureMatrix> {
        if table.schema.numeric != self.numeric
            || table.schema.categorical.len() != self.categorical.len()
            || table
                .schema
                .categorical
                .iter()
                .zip(&self.categorical)
                .any(|(a, b)| *a != b.name)
        {
            return Err(Error::InvalidConfig(
                "table schema differs from the encoding map".into(),
            ));
        }
        let n_cols = self.n_features();
        let mut data = Vec::with_capacity(n_cols * table.rows.len());
        for row in &table.rows {
            data.extend(row.numeric.iter().map(|v| v.unwrap_or(MISSING)));
            for (ci, col) in self.categorical.iter().enumerate() {
                let hit = row.categorical[ci]
                    .as_deref()
                    .and_then(|v| col.categories.binary_search_by(|c| c.as_str().cmp(v)).ok());
                data.extend(
                    (0..col.categories.len()).map(|k| if Some(k) == hit { 1.0 } else { 0.0 }),
                );
            }
        }
        let labeled = !table.rows.is_empty() && table.rows.iter().all(|r| r.test.is_some());
        let labels = labeled.then(|| {
            table
                .rows
                .iter()
                .map(|r| {
                    u8::from(
                        r.test
                            .as_ref()
                            .map(|t| t.lead_ppb > ACTION_LEVEL_PPB)
                            .unwrap_or(false),
                    )
                })
                .collect()
        });
        Ok(FeatureMatrix {
            feature_names: self.feature_names(),
            n_cols,
            data,
            parcel_ids: table.rows.iter().map(|r| r.parcel_id.clone()).collect(),
            labels,
            sample_dates: table
                .rows
                .iter()
                .map(|r| r.test.as_ref().map(|t| t.sample_date))
                .collect(),
        })
    }
}

/// Fit an encoding on `table` and apply it.
pub fn encode_features(table: &MergedTable) -> Result<(FeatureMatrix, EncodingMap)> {
    let map = EncodingMap::fit(table);
    let m = map.apply(table)?;
    Ok((m, map))
}

/// Dense row-major matrix with per-row parcel ids and optional binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub n_cols: usize,
    pub data: Vec<f64>,
    pub parcel_ids: Vec<String>,
    pub labels: Option<Vec<u8>>,
    pub sample_dates: Vec<Option<NaiveDate>>,
}

impl FeatureMatrix {
    /// Build from explicit rows (all rows must have `feature_names.len()` values).
    pub fn from_rows(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        parcel_ids: Vec<String>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        if parcel_ids.len() != rows.len() {
            return Err(Error::InvalidConfig(
                "parcel_ids and rows differ in length".into(),
            ));
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::InvalidConfig(
                    "labels and rows differ in length".into(),
                ));
            }
            if l.iter().any(|&y| y > 1) {
                return Err(Error::InvalidConfig("labels must be 0 or 1".into()));
            }
        }
        let mut data = Vec::with_capacity(n_cols * rows.len());
        for r in &rows {
            if r.len() != n_cols {
                return Err(Error::FeatureMismatch {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        let n = rows.len();
        Ok(FeatureMatrix {
            feature_names,
            n_cols,
            data,
            parcel_ids,
            labels,
            sample_dates: alloc::vec![None; n],
        })
    }

    pub fn n_rows(&self) -> usize {
        self.parcel_ids.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn labels(&self) -> Result<&[u8]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.n_rows() {
            return Err(Error::InvalidConfig(
                "label count differs from row count".into(),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            n_cols: self.n_cols,
            data,
            parcel_ids: idx.iter().map(|&i| self.parcel_ids[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            sample_dates: idx.iter().map(|&i| self.sample_dates[i]).collect(),
        }
    }

    /// Distinct parcel ids in sorted order.
    pub fn distinct_parcels(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.parcel_ids.iter().map(String::as_str).collect();
        set.into_iter().collect()
    }

    /// Bitwise equality (treats identical NaN payloads as equal).
    pub fn bit_eq(&self, other: &FeatureMatrix) -> bool {
        self.feature_names == other.feature_names
            && self.n_cols == other.n_cols
            && self.parcel_ids == other.parcel_ids
            && self.labels == other.labels
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Median imputation plus a missing-indicator column for every feature that
/// had missing values at fit time. Used by learners that cannot route `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianImputer {
    pub medians: Vec<f64>,
    /// Source columns that receive an indicator, in output order.
    pub indicator_columns: Vec<usize>,
    pub input_names: Vec<String>,
}

impl MedianImputer {
    pub fn fit(m: &FeatureMatrix) -> Self {
        let mut medians = Vec::with_capacity(m.n_cols);
        let mut indicator_columns = Vec::new();
        let mut col = Vec::with_capacity(m.n_rows());
        for j in 0..m.n_cols {
            col.clear();
            col.extend((0..m.n_rows()).map(|i| m.get(i, j)));
            if col.iter().any(|v| is_missing(*v)) {
                indicator_columns.push(j);
            }
            medians.push(crate::math::median(&col).unwrap_or(0.0));
        }
        MedianImputer {
            medians,
            indicator_columns,
            input_names: m.feature_names.clone(),
        }
    }

    pub fn output_names(&self) -> Vec<String> {
        let mut names = self.input_names.clone();
        names.extend(
            self.indicator_columns
                .iter()
                .map(|&j| format!("{}__missing", self.input_names[j])),
        );
        names
    }

    pub fn n_outputs(&self) -> usize {
        self.medians.len() + self.indicator_columns.len()
    }

    pub fn transform_row_into(&self, row: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if row.len() != self.medians.len() {
            return Err(Error::FeatureMismatch {
                expected: self.medians.len(),
                got: row.len(),
            });
        }
        out.clear();
        out.extend(
            row.iter()
                .zip(&self.medians)
                .map(|(&v, &m)| if is_missing(v) { m } else { v }),
        );
        out.extend(
            self.indicator_columns
                .iter()
                .map(|&j| if is_missing(row[j]) { 1.0 } else { 0.0 }),
        );
        Ok(())
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let n_cols = self.n_outputs();
        let mut data = Vec::with_capacity(n_cols * m.n_rows());
        let mut buf = Vec::with_capacity(n_cols);
        for i in 0..m.n_rows() {
            self.transform_row_into(m.row(i), &mut buf)?;
            data.extend_from_slice(&buf);
        }
        Ok(FeatureMatrix {
            feature_names: self.output_names(),
            n_cols,
            data,
            parcel_ids: m.parcel_ids.clone(),
            labels: m.labels.clone(),
            sample_dates: m.sample_dates.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::{MergedRow, TestInfo};
    use crate::records::TestSource;
    use alloc::vec;

    fn table(mats: &[Option<&str>], leads: &[u32]) -> MergedTable {
        MergedTable {
            schema: RowSchema {
                numeric: vec!["year_built".into()],
                categorical: vec!["material".into()],
            },
            rows: mats
                .iter()
                .zip(leads)
                .enumerate()
                .map(|(i, (m, &lead))| MergedRow {
                    parcel_id: format!("P{i}"),
                    numeric: vec![if i == 0 {
                        None
                    } else {
                        Some(1900.0 + i as f64)
                    }],
                    categorical: vec![m.map(String::from)],
                    test: Some(TestInfo {
                        sample_id: format!("S{i}"),
                        sample_date: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
                        lead_ppb: lead,
                        source: TestSource::Residential,
                    }),
                    residential_tests: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn one_hot_two_categories() {
        let t = table(&[Some("lead"), Some("copper")], &[15, 16]);
        let (m, map) = encode_features(&t).unwrap();
        assert_eq!(
            m.feature_names,
            ["year_built", "material=copper", "material=lead"]
        );
        assert!(m.get(0, 0).is_nan());
        assert_eq!(&m.row(0)[1..], &[0.0, 1.0]);
        assert_eq!(&m.row(1)[1..], &[1.0, 0.0]);
        // 15 ppb is not an exceedance, 16 is
        assert_eq!(m.labels.as_deref(), Some(&[0u8, 1][..]));
        assert_eq!(map.categorical[0].categories, ["copper", "lead"]);
    }

    #[test]
    fn unseen_category_replays_as_zeros() {
        let t = table(&[Some("lead"), Some("copper")], &[1, 1]);
        let (_, map) = encode_features(&t).unwrap();
        let novel = table(&[Some("brass"), None], &[1, 1]);
        let m = map.apply(&novel).unwrap();
        assert_eq!(&m.row(0)[1..], &[0.0, 0.0]);
        assert_eq!(&m.row(1)[1..], &[0.0, 0.0]);
    }

    #[test]
    fn replay_reproduces_training_matrix() {
        let t = table(&[Some("b"), Some("a"), None, Some("b")], &[1, 20, 3, 4]);
        let (m, map) = encode_features(&t).unwrap();
        assert!(map.apply(&t).unwrap().bit_eq(&m));
        for i in 0..m.n_rows() {
            assert_eq!(m.row(i).len(), m.feature_names.len());
        }
    }

    #[test]
    fn imputer_adds_indicator() {
        let t = table(&[Some("a"), Some("a"), Some("a")], &[1, 1, 1]);
        let (m, _) = encode_features(&t).unwrap();
        let imp = MedianImputer::fit(&m);
        let out = imp.transform(&m).unwrap();
        assert_eq!(out.feature_names.last().unwrap(), "year_built__missing");
        // median of 1901, 1902
        assert_eq!(out.row(0), &[1901.5, 1.0, 1.0]);
        assert_eq!(out.row(1), &[1901.0, 1.0, 0.0]);
    }
}
