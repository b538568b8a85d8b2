//! Join tests, census aggregates and service lines onto parcels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::address::normalize_address;
use crate::error::{Error, Result};
use crate::records::{
    lower, opt_str, CensusTable, ParcelRecord, ServiceLineRecord, TestSource, WaterTestRecord,
};

/// Housing-condition survey values that indicate an occupied home.
pub const OCCUPIED_CONDITIONS: &[&str] = &["good", "fair", "poor", "occupied"];

pub const PARCEL_NUMERIC: &[&str] = &[
    "year_built",
    "land_value",
    "building_value",
    "home_sev",
    "land_improvements",
    "parcel_acres",
    "latitude",
    "longitude",
    "usps_active",
];

pub const PARCEL_CATEGORICAL: &[&str] = &[
    "housing_condition",
    "property_class",
    "public_material",
    "private_material",
    "service_line_confidence",
];

/// Column layout of merged rows before encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSchema {
    pub numeric: Vec<String>,
    pub categorical: Vec<String>,
}

impl RowSchema {
    pub fn for_census(census: &CensusTable) -> Self {
        let mut numeric: Vec<String> = PARCEL_NUMERIC.iter().map(|s| s.to_string()).collect();
        numeric.extend(census.columns.iter().map(|c| format!("census.{c}")));
        RowSchema {
            numeric,
            categorical: PARCEL_CATEGORICAL.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestInfo {
    pub sample_id: String,
    pub sample_date: NaiveDate,
    pub lead_ppb: u32,
    pub source: TestSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRow {
    pub parcel_id: String,
    pub numeric: Vec<Option<f64>>,
    pub categorical: Vec<Option<String>>,
    /// Present for labeled rows (one per matched test).
    pub test: Option<TestInfo>,
    /// Number of matched residential tests owned by the parcel.
    pub residential_tests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedTable {
    pub schema: RowSchema,
    pub rows: Vec<MergedRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmatchedReason {
    EmptyAddress,
    NoParcel,
    AmbiguousAddress,
}

impl UnmatchedReason {
    pub fn code(self) -> &'static str {
        match self {
            UnmatchedReason::EmptyAddress => "empty_address",
            UnmatchedReason::NoParcel => "no_parcel",
            UnmatchedReason::AmbiguousAddress => "ambiguous_address",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedTest {
    pub test_index: usize,
    pub sample_id: String,
    pub normalized_address: String,
    pub reason: UnmatchedReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutput {
    /// One row per matched residential test.
    pub labeled: MergedTable,
    /// One row per parcel, in input order.
    pub prediction: MergedTable,
    /// Parcel index for each input test, `None` when unmatched.
    pub assignments: Vec<Option<usize>>,
    pub unmatched: Vec<UnmatchedTest>,
}

impl MergeOutput {
    pub fn matched_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_some()).count()
    }
}

fn parcel_features(
    parcel: &ParcelRecord,
    census: &CensusTable,
    census_index: &BTreeMap<&str, usize>,
    line: Option<&ServiceLineRecord>,
) -> (Vec<Option<f64>>, Vec<Option<String>>) {
    let mut numeric = Vec::with_capacity(PARCEL_NUMERIC.len() + census.columns.len());
    numeric.extend([
        parcel.year_built.map(f64::from),
        parcel.land_value,
        parcel.building_value,
        parcel.home_sev,
        parcel.land_improvements,
        parcel.parcel_acres,
        parcel.latitude,
        parcel.longitude,
        parcel.usps_active.map(|b| if b { 1.0 } else { 0.0 }),
    ]);
    match census_index.get(parcel.block_group.as_str()) {
        Some(&i) => numeric.extend(census.rows[i].values.iter().copied()),
        None => numeric.extend(core::iter::repeat_n(None, census.columns.len())),
    }
    let categorical = alloc::vec![
        opt_str(&parcel.housing_condition).map(lower),
        opt_str(&parcel.property_class).map(lower),
        line.map(|l| l.public_material.as_str().to_string()),
        line.map(|l| l.private_material.as_str().to_string()),
        line.map(|l| l.confidence.as_str().to_string()),
    ];
    (numeric, categorical)
}

/// Join every test to at most one parcel by normalized address and attach
/// census and service-line attributes.
///
/// Tests whose normalized address is shared by two or more parcels are
/// routed to the unmatched list rather than guessed. Only residential tests
/// produce labeled rows; sentinel tests are still matched (see
/// [`MergeOutput::assignments`]).
pub fn merge_datasets(
    parcels: &[ParcelRecord],
    tests: &[WaterTestRecord],
    census: &CensusTable,
    lines: &[ServiceLineRecord],
) -> Result<MergeOutput> {
    let mut ids = BTreeSet::new();
    for p in parcels {
        if !ids.insert(p.parcel_id.as_str()) {
            return Err(Error::DuplicateKey {
                dataset: "parcels",
                key: p.parcel_id.clone(),
            });
        }
    }
    census.validate()?;
    let census_index: BTreeMap<&str, usize> = census
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.block_group_id.as_str(), i))
        .collect();
    let mut line_index: BTreeMap<&str, &ServiceLineRecord> = BTreeMap::new();
    for l in lines {
        if line_index.insert(l.parcel_id.as_str(), l).is_some() {
            return Err(Error::DuplicateKey {
                dataset: "service_lines",
                key: l.parcel_id.clone(),
            });
        }
    }

    // normalized address -> parcel indices
    let mut by_address: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, p) in parcels.iter().enumerate() {
        let key = normalize_address(&p.address);
        if !key.is_empty() {
            by_address.entry(key).or_default().push(i);
        }
    }

    let mut assignments = Vec::with_capacity(tests.len());
    let mut unmatched = Vec::new();
    for (ti, t) in tests.iter().enumerate() {
        let key = normalize_address(&t.address);
        let reason = if key.is_empty() {
            Some(UnmatchedReason::EmptyAddress)
        } else {
            match by_address.get(&key).map(Vec::as_slice) {
                None => Some(UnmatchedReason::NoParcel),
                Some([single]) => {
                    assignments.push(Some(*single));
                    None
                }
                Some(_) => Some(UnmatchedReason::AmbiguousAddress),
            }
        };
        if let Some(reason) = reason {
            assignments.push(None);
            unmatched.push(UnmatchedTest {
                test_index: ti,
                sample_id: t.sample_id.clone(),
                normalized_address: key,
                reason,
            });
        }
    }

    let mut residential_counts = alloc::vec![0usize; parcels.len()];
    for (t, a) in tests.iter().zip(&assignments) {
        if let (Some(pi), TestSource::Residential) = (a, t.source) {
            residential_counts[*pi] += 1;
        }
    }

    let schema = RowSchema::for_census(census);
    let features: Vec<_> = parcels
        .iter()
        .map(|p| {
            parcel_features(
                p,
                census,
                &census_index,
                line_index.get(p.parcel_id.as_str()).copied(),
            )
        })
        .collect();

    let prediction_rows = parcels
        .iter()
        .zip(&features)
        .zip(&residential_counts)
        .map(|((p, (num, cat)), &n)| MergedRow {
            parcel_id: p.parcel_id.clone(),
            numeric: num.clone(),
            categorical: cat.clone(),
            test: None,
            residential_tests: n,
        })
        .collect();

    let labeled_rows = tests
        .iter()
        .zip(&assignments)
        .filter_map(|(t, a)| match (a, t.source) {
            (Some(pi), TestSource::Residential) => Some((t, *pi)),
            _ => None,
        })
        .map(|(t, pi)| {
            let (num, cat) = &features[pi];
            MergedRow {
                parcel_id: parcels[pi].parcel_id.clone(),
                numeric: num.clone(),
                categorical: cat.clone(),
                test: Some(TestInfo {
                    sample_id: t.sample_id.clone(),
                    sample_date: t.sample_date,
                    lead_ppb: t.lead_ppb,
                    source: t.source,
                }),
                residential_tests: residential_counts[pi],
            }
        })
        .collect();

    Ok(MergeOutput {
        labeled: MergedTable {
            schema: schema.clone(),
            rows: labeled_rows,
        },
        prediction: MergedTable {
            schema,
            rows: prediction_rows,
        },
        assignments,
        unmatched,
    })
}

/// Occupied when the USPS account is active or the housing survey recorded an
/// occupied-home condition. Parcels with neither signal are excluded.
pub fn is_occupied(p: &ParcelRecord) -> bool {
    let usps = p.usps_active == Some(true);
    let survey = opt_str(&p.housing_condition)
        .map(|c| OCCUPIED_CONDITIONS.contains(&lower(c).as_str()))
        .unwrap_or(false);
    usps || survey
}

pub fn filter_occupied(parcels: &[ParcelRecord]) -> Vec<ParcelRecord> {
    parcels.iter().filter(|p| is_occupied(p)).cloned().collect()
}
