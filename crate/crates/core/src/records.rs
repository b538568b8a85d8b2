//! Typed records for the four source datasets.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lead concentration above which a sample exceeds the federal action level.
pub const ACTION_LEVEL_PPB: u32 = 15;

pub const MIN_YEAR_BUILT: i32 = 1800;
pub const MAX_YEAR_BUILT: i32 = 2017;

pub fn first_sample_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 9, 1).expect("valid date")
}

pub fn last_sample_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 5, 31).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelRecord {
    pub parcel_id: String,
    pub address: String,
    pub year_built: Option<i32>,
    pub land_value: Option<f64>,
    pub building_value: Option<f64>,
    pub home_sev: Option<f64>,
    pub land_improvements: Option<f64>,
    pub parcel_acres: Option<f64>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub census_tract: String,
    pub block_group: String,
    pub block: String,
    pub usps_active: Option<bool>,
    pub housing_condition: Option<String>,
    pub property_class: Option<String>,
}

impl ParcelRecord {
    pub fn validate(&self) -> Result<()> {
        if self.parcel_id.is_empty() {
            return Err(Error::InvalidRecord("empty parcel_id".into()));
        }
        if let Some(y) = self.year_built {
            if !(MIN_YEAR_BUILT..=MAX_YEAR_BUILT).contains(&y) {
                return Err(Error::InvalidRecord(format!("year_built {y} out of range")));
            }
        }
        let money = [
            ("land_value", self.land_value),
            ("building_value", self.building_value),
            ("home_sev", self.home_sev),
            ("land_improvements", self.land_improvements),
            ("parcel_acres", self.parcel_acres),
        ];
        for (name, v) in money {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidRecord(format!("{name} = {v} is negative")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestSource {
    Residential,
    Sentinel,
}

impl TestSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TestSource::Residential => "residential",
            TestSource::Sentinel => "sentinel",
        }
    }
}

impl FromStr for TestSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "residential" => Ok(TestSource::Residential),
            "sentinel" => Ok(TestSource::Sentinel),
            other => Err(Error::InvalidRecord(format!("unknown source `{other}`"))),
        }
    }
}

impl fmt::Display for TestSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaterTestRecord {
    pub sample_id: String,
    pub address: String,
    pub sample_date: NaiveDate,
    /// Floor-rounded ppb, as released by the state.
    pub lead_ppb: u32,
    pub copper_ppb: Option<u32>,
    pub source: TestSource,
}

impl WaterTestRecord {
    pub fn validate(&self) -> Result<()> {
        if self.sample_date < first_sample_date() || self.sample_date > last_sample_date() {
            return Err(Error::InvalidRecord(format!(
                "sample_date {} outside the testing window",
                self.sample_date
            )));
        }
        Ok(())
    }

    pub fn exceeds_action_level(&self) -> bool {
        self.lead_ppb > ACTION_LEVEL_PPB
    }
}

/// One census block group with its named aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusBlockRecord {
    pub block_group_id: String,
    /// Aligned with [`CensusTable::columns`].
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CensusTable {
    pub columns: Vec<String>,
    pub rows: Vec<CensusBlockRecord>,
}

impl CensusTable {
    pub fn validate(&self) -> Result<()> {
        let mut seen = alloc::collections::BTreeSet::new();
        for row in &self.rows {
            if row.values.len() != self.columns.len() {
                return Err(Error::InvalidRecord(format!(
                    "block group {} has {} values for {} columns",
                    row.block_group_id,
                    row.values.len(),
                    self.columns.len()
                )));
            }
            if row.values.iter().flatten().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidRecord(format!(
                    "block group {} has a negative aggregate",
                    row.block_group_id
                )));
            }
            if !seen.insert(row.block_group_id.as_str()) {
                return Err(Error::DuplicateKey {
                    dataset: "census",
                    key: row.block_group_id.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Lead,
    Copper,
    Galvanized,
    Plastic,
    Other,
    Unknown,
}

impl Material {
    pub const ALL: [Material; 6] = [
        Material::Lead,
        Material::Copper,
        Material::Galvanized,
        Material::Plastic,
        Material::Other,
        Material::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Material::Lead => "lead",
            Material::Copper => "copper",
            Material::Galvanized => "galvanized",
            Material::Plastic => "plastic",
            Material::Other => "other",
            Material::Unknown => "unknown",
        }
    }
}

impl FromStr for Material {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Material::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidRecord(format!("unknown material `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordConfidence {
    Recorded,
    Inferred,
    Unknown,
}

impl RecordConfidence {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordConfidence::Recorded => "recorded",
            RecordConfidence::Inferred => "inferred",
            RecordConfidence::Unknown => "unknown",
        }
    }
}

impl FromStr for RecordConfidence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "recorded" => Ok(RecordConfidence::Recorded),
            "inferred" => Ok(RecordConfidence::Inferred),
            "unknown" => Ok(RecordConfidence::Unknown),
            other => Err(Error::InvalidRecord(format!(
                "unknown confidence `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceLineRecord {
    pub parcel_id: String,
    pub public_material: Material,
    pub private_material: Material,
    pub confidence: RecordConfidence,
}

/// Calendar month used to bucket samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month {month} out of range");
        YearMonth { year, month }
    }

    pub fn of(date: NaiveDate) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            YearMonth::new(self.year + 1, 1)
        } else {
            YearMonth::new(self.year, self.month + 1)
        }
    }

    /// Inclusive range of months.
    pub fn range(start: YearMonth, end: YearMonth) -> Vec<YearMonth> {
        let mut out = Vec::new();
        let mut m = start;
        while m <= end {
            out.push(m);
            m = m.succ();
        }
        out
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn days(self) -> u32 {
        let next = self.succ().first_day();
        (next - self.first_day()).num_days() as u32
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidRecord(format!("bad month `{s}`, expected YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth { year, month })
    }
}

pub(crate) fn opt_str(s: &Option<String>) -> Option<&str> {
    s.as_deref().filter(|s| !s.is_empty())
}

pub(crate) fn lower(s: &str) -> String {
    s.trim().to_ascii_lowercase().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_month_range_and_days() {
        let r = YearMonth::range(YearMonth::new(2015, 11), YearMonth::new(2016, 2));
        assert_eq!(r.len(), 4);
        assert_eq!(r[2], YearMonth::new(2016, 1));
        assert_eq!(YearMonth::new(2016, 2).days(), 29);
        assert_eq!(
            "2016-03".parse::<YearMonth>().unwrap(),
            YearMonth::new(2016, 3)
        );
        assert_eq!(YearMonth::new(2016, 3).to_string(), "2016-03");
    }

    #[test]
    fn material_vocabulary_is_closed() {
        assert_eq!("Lead".parse::<Material>().unwrap(), Material::Lead);
        assert!("brass".parse::<Material>().is_err());
    }

    #[test]
    fn parcel_validation() {
        let mut p = ParcelRecord {
            parcel_id: "P1".into(),
            address: "1 MAIN ST".into(),
            year_built: Some(1920),
            land_value: Some(100.0),
            building_value: None,
            home_sev: None,
            land_improvements: None,
            parcel_acres: None,
            latitude: None,
            longitude: None,
            census_tract: String::new(),
            block_group: String::new(),
            block: String::new(),
            usps_active: None,
            housing_condition: None,
            property_class: None,
        };
        assert!(p.validate().is_ok());
        p.year_built = Some(1700);
        assert!(p.validate().is_err());
        p.year_built = None;
        p.land_value = Some(-1.0);
        assert!(p.validate().is_err());
    }
}
