//! CSV readers and writers for the four source datasets and the pipeline's
//! intermediate tables. Empty cells mean "absent".

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use aquarisk_core::encode::FeatureMatrix;
use aquarisk_core::records::{
    CensusBlockRecord, CensusTable, Material, ParcelRecord, RecordConfidence, ServiceLineRecord,
    TestSource, WaterTestRecord,
};
use chrono::NaiveDate;

use crate::error::{AppError, Result};

pub const PARCEL_COLUMNS: &[&str] = &[
    "parcel_id",
    "address",
    "year_built",
    "land_value",
    "building_value",
    "home_sev",
    "land_improvements",
    "parcel_acres",
    "latitude",
    "longitude",
    "census_tract",
    "block_group",
    "block",
    "usps_active",
    "housing_condition",
    "property_class",
];
pub const TEST_COLUMNS: &[&str] = &[
    "sample_id",
    "address",
    "sample_date",
    "lead_ppb",
    "copper_ppb",
    "source",
];
pub const SERVICE_LINE_COLUMNS: &[&str] = &[
    "parcel_id",
    "public_material",
    "private_material",
    "confidence",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Parcels,
    Tests,
    Census,
    ServiceLines,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Parcels => "parcels",
            DatasetKind::Tests => "tests",
            DatasetKind::Census => "census",
            DatasetKind::ServiceLines => "service_lines",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            DatasetKind::Parcels => PARCEL_COLUMNS,
            DatasetKind::Tests => TEST_COLUMNS,
            DatasetKind::Census => &["block_group_id"],
            DatasetKind::ServiceLines => SERVICE_LINE_COLUMNS,
        }
    }
}

/// A row dropped during parsing. `row` counts data rows from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discard {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Parcels(Vec<ParcelRecord>),
    Tests(Vec<WaterTestRecord>),
    Census(CensusTable),
    ServiceLines(Vec<ServiceLineRecord>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: T,
    pub discarded: Vec<Discard>,
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    index: &'a HashMap<String, usize>,
}

impl Row<'_> {
    fn raw(&self, col: &str) -> &str {
        self.index
            .get(col)
            .and_then(|&i| self.record.get(i))
            .map(str::trim)
            .unwrap_or("")
    }

    fn text(&self, col: &str) -> Option<String> {
        let v = self.raw(col);
        (!v.is_empty()).then(|| v.to_string())
    }

    fn required(&self, col: &str) -> std::result::Result<String, String> {
        self.text(col).ok_or_else(|| format!("`{col}` is empty"))
    }

    fn parse<T: FromStr>(&self, col: &str) -> std::result::Result<Option<T>, String> {
        match self.raw(col) {
            "" => Ok(None),
            v => v
                .parse()
                .map(Some)
                .map_err(|_| format!("`{col}` = `{v}` does not parse")),
        }
    }
}

fn parse_bool(v: Option<String>) -> std::result::Result<Option<bool>, String> {
    match v.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None => Ok(None),
        Some("true" | "1" | "yes" | "y" | "t") => Ok(Some(true)),
        Some("false" | "0" | "no" | "n" | "f") => Ok(Some(false)),
        Some(other) => Err(format!("`usps_active` = `{other}` is not a boolean")),
    }
}

/// Floor-rounded nonnegative ppb; fractional inputs are floored as the state does.
fn parse_ppb(row: &Row<'_>, col: &str) -> std::result::Result<Option<u32>, String> {
    match row.parse::<f64>(col)? {
        None => Ok(None),
        Some(v) if v >= 0.0 && v < f64::from(u32::MAX) => Ok(Some(v.floor() as u32)),
        Some(v) => Err(format!("`{col}` = {v} is negative or out of range")),
    }
}

fn parse_parcel(row: &Row<'_>) -> std::result::Result<ParcelRecord, String> {
    let p = ParcelRecord {
        parcel_id: row.required("parcel_id")?,
        address: row.raw("address").to_string(),
        year_built: row.parse("year_built")?,
        land_value: row.parse("land_value")?,
        building_value: row.parse("building_value")?,
        home_sev: row.parse("home_sev")?,
        land_improvements: row.parse("land_improvements")?,
        parcel_acres: row.parse("parcel_acres")?,
        latitude: row.parse("latitude")?,
        longitude: row.parse("longitude")?,
        census_tract: row.raw("census_tract").to_string(),
        block_group: row.raw("block_group").to_string(),
        block: row.raw("block").to_string(),
        usps_active: parse_bool(row.text("usps_active"))?,
        housing_condition: row.text("housing_condition"),
        property_class: row.text("property_class"),
    };
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn parse_test(row: &Row<'_>) -> std::result::Result<WaterTestRecord, String> {
    let date = row.required("sample_date")?;
    let sample_date = NaiveDate::parse_from_str(&date, "%Y-%m-%d")
        .map_err(|_| format!("`sample_date` = `{date}` is not YYYY-MM-DD"))?;
    let t = WaterTestRecord {
        sample_id: row.required("sample_id")?,
        address: row.raw("address").to_string(),
        sample_date,
        lead_ppb: parse_ppb(row, "lead_ppb")?.ok_or("`lead_ppb` is empty")?,
        copper_ppb: parse_ppb(row, "copper_ppb")?,
        source: row
            .required("source")?
            .parse::<TestSource>()
            .map_err(|e| e.to_string())?,
    };
    t.validate().map_err(|e| e.to_string())?;
    Ok(t)
}

fn parse_line(row: &Row<'_>) -> std::result::Result<ServiceLineRecord, String> {
    let material = |col: &str| -> std::result::Result<Material, String> {
        match row.text(col) {
            None => Ok(Material::Unknown),
            Some(v) => v.parse().map_err(|e: aquarisk_core::Error| e.to_string()),
        }
    };
    Ok(ServiceLineRecord {
        parcel_id: row.required("parcel_id")?,
        public_material: material("public_material")?,
        private_material: material("private_material")?,
        confidence: match row.text("confidence") {
            None => RecordConfidence::Unknown,
            Some(v) => v.parse().map_err(|e: aquarisk_core::Error| e.to_string())?,
        },
    })
}

fn open(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(file)))
}

/// Parse one dataset. Rows failing type or range checks are dropped and
/// reported; more than half malformed aborts.
pub fn parse_dataset(path: &Path, kind: DatasetKind) -> Result<Parsed<Records>> {
    let mut reader = open(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| AppError::csv(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.clone(), i))
        .collect();
    for col in kind.required() {
        if !index.contains_key(*col) {
            return Err(AppError::MissingColumn {
                path: path.into(),
                column: col.to_string(),
            });
        }
    }
    let census_columns: Vec<String> = headers
        .iter()
        .filter(|h| h.as_str() != "block_group_id")
        .cloned()
        .collect();

    let mut parcels = Vec::new();
    let mut tests = Vec::new();
    let mut lines = Vec::new();
    let mut census_rows = Vec::new();
    let mut discarded = Vec::new();
    let mut total = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| AppError::csv(path, e))?;
        total += 1;
        let row = Row {
            record: &rec,
            index: &index,
        };
        let outcome = match kind {
            DatasetKind::Parcels => parse_parcel(&row).map(|p| parcels.push(p)),
            DatasetKind::Tests => parse_test(&row).map(|t| tests.push(t)),
            DatasetKind::ServiceLines => parse_line(&row).map(|l| lines.push(l)),
            DatasetKind::Census => (|| {
                let id = row.required("block_group_id")?;
                let mut values = Vec::with_capacity(census_columns.len());
                for c in &census_columns {
                    let v: Option<f64> = row.parse(c)?;
                    if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                        return Err(format!("`{c}` is negative"));
                    }
                    values.push(v);
                }
                census_rows.push(CensusBlockRecord {
                    block_group_id: id,
                    values,
                });
                Ok(())
            })(),
        };
        if let Err(message) = outcome {
            discarded.push(Discard {
                row: i + 1,
                message,
            });
        }
    }
    if total > 0 && 2 * discarded.len() > total {
        return Err(AppError::TooMalformed {
            path: path.into(),
            bad: discarded.len(),
            total,
            first_row: discarded[0].row,
            first_message: discarded[0].message.clone(),
        });
    }
    let records = match kind {
        DatasetKind::Parcels => Records::Parcels(parcels),
        DatasetKind::Tests => Records::Tests(tests),
        DatasetKind::ServiceLines => Records::ServiceLines(lines),
        DatasetKind::Census => Records::Census(CensusTable {
            columns: census_columns,
            rows: census_rows,
        }),
    };
    Ok(Parsed { records, discarded })
}

pub fn read_parcels(path: &Path) -> Result<Parsed<Vec<ParcelRecord>>> {
    let p = parse_dataset(path, DatasetKind::Parcels)?;
    match p.records {
        Records::Parcels(r) => Ok(Parsed {
            records: r,
            discarded: p.discarded,
        }),
        _ => unreachable!(),
    }
}

pub fn read_tests(path: &Path) -> Result<Parsed<Vec<WaterTestRecord>>> {
    let p = parse_dataset(path, DatasetKind::Tests)?;
    match p.records {
        Records::Tests(r) => Ok(Parsed {
            records: r,
            discarded: p.discarded,
        }),
        _ => unreachable!(),
    }
}

pub fn read_census(path: &Path) -> Result<Parsed<CensusTable>> {
    let p = parse_dataset(path, DatasetKind::Census)?;
    match p.records {
        Records::Census(r) => Ok(Parsed {
            records: r,
            discarded: p.discarded,
        }),
        _ => unreachable!(),
    }
}

pub fn read_service_lines(path: &Path) -> Result<Parsed<Vec<ServiceLineRecord>>> {
    let p = parse_dataset(path, DatasetKind::ServiceLines)?;
    match p.records {
        Records::ServiceLines(r) => Ok(Parsed {
            records: r,
            discarded: p.discarded,
        }),
        _ => unreachable!(),
    }
}

/// CSV writer that formats floats in shortest round-trip form.
pub struct CsvOut {
    path: std::path::PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| AppError::io(path, e))?;
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        inner
            .write_record(header)
            .map_err(|e| AppError::csv(path, e))?;
        Ok(CsvOut {
            path: path.into(),
            inner,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner
            .write_record(fields)
            .map_err(|e| AppError::csv(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| AppError::io(&self.path, e))
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_parcels(path: &Path, parcels: &[ParcelRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, PARCEL_COLUMNS)?;
    for p in parcels {
        out.row([
            p.parcel_id.clone(),
            p.address.clone(),
            fmt_opt(&p.year_built),
            fmt_opt(&p.land_value),
            fmt_opt(&p.building_value),
            fmt_opt(&p.home_sev),
            fmt_opt(&p.land_improvements),
            fmt_opt(&p.parcel_acres),
            fmt_opt(&p.latitude),
            fmt_opt(&p.longitude),
            p.census_tract.clone(),
            p.block_group.clone(),
            p.block.clone(),
            fmt_opt(&p.usps_active),
            fmt_opt(&p.housing_condition),
            fmt_opt(&p.property_class),
        ])?;
    }
    out.finish()
}

pub fn write_tests(path: &Path, tests: &[WaterTestRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, TEST_COLUMNS)?;
    for t in tests {
        out.row([
            t.sample_id.clone(),
            t.address.clone(),
            t.sample_date.format("%Y-%m-%d").to_string(),
            t.lead_ppb.to_string(),
            fmt_opt(&t.copper_ppb),
            t.source.as_str().to_string(),
        ])?;
    }
    out.finish()
}

pub fn write_census(path: &Path, census: &CensusTable) -> Result<()> {
    let mut header = vec!["block_group_id"];
    header.extend(census.columns.iter().map(String::as_str));
    let mut out = CsvOut::create(path, &header)?;
    for r in &census.rows {
        let mut fields = vec![r.block_group_id.clone()];
        fields.extend(r.values.iter().map(fmt_opt));
        out.row(fields)?;
    }
    out.finish()
}

pub fn write_service_lines(path: &Path, lines: &[ServiceLineRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, SERVICE_LINE_COLUMNS)?;
    for l in lines {
        out.row([
            l.parcel_id.as_str(),
            l.public_material.as_str(),
            l.private_material.as_str(),
            l.confidence.as_str(),
        ])?;
    }
    out.finish()
}

/// Feature matrix as CSV: `parcel_id`, then `sample_date` and `label` when
/// the matrix is labeled, then one column per feature.
pub fn write_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let labeled = m.labels.is_some();
    let mut header: Vec<&str> = vec!["parcel_id"];
    if labeled {
        header.extend(["sample_date", "label"]);
    }
    header.extend(m.feature_names.iter().map(String::as_str));
    let mut out = CsvOut::create(path, &header)?;
    let mut fields = Vec::with_capacity(header.len());
    for i in 0..m.n_rows() {
        fields.clear();
        fields.push(m.parcel_ids[i].clone());
        if let Some(labels) = &m.labels {
            fields.push(
                m.sample_dates[i]
                    .map(|d| d.format("%Y-%m-%d").to_string())
                    .unwrap_or_default(),
            );
            fields.push(labels[i].to_string());
        }
        fields.extend(m.row(i).iter().map(|&v| fmt_f64(v)));
        out.row(&fields)?;
    }
    out.finish()
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = open(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| AppError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let schema_err = |message: String| AppError::Schema {
        path: path.into(),
        message,
    };
    if headers.first().map(String::as_str) != Some("parcel_id") {
        return Err(schema_err("first column must be parcel_id".into()));
    }
    let labeled = headers.get(1).map(String::as_str) == Some("sample_date")
        && headers.get(2).map(String::as_str) == Some("label");
    let skip = if labeled { 3 } else { 1 };
    let names: Vec<String> = headers[skip..].to_vec();
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut dates = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| AppError::csv(path, e))?;
        if rec.len() != headers.len() {
            return Err(schema_err(format!(
                "row {} has {} fields, expected {}",
                i + 1,
                rec.len(),
                headers.len()
            )));
        }
        ids.push(rec[0].to_string());
        if labeled {
            dates.push(match &rec[1] {
                "" => None,
                d => Some(
                    NaiveDate::parse_from_str(d, "%Y-%m-%d")
                        .map_err(|_| schema_err(format!("row {}: bad date `{d}`", i + 1)))?,
                ),
            });
            labels.push(
                rec[2]
                    .parse::<u8>()
                    .map_err(|_| schema_err(format!("row {}: bad label", i + 1)))?,
            );
        }
        let mut row = Vec::with_capacity(names.len());
        for v in rec.iter().skip(skip) {
            row.push(match v {
                "" => f64::NAN,
                v => v
                    .parse::<f64>()
                    .map_err(|_| schema_err(format!("row {}: bad number `{v}`", i + 1)))?,
            });
        }
        rows.push(row);
    }
    let mut m = FeatureMatrix::from_rows(names, rows, ids, labeled.then_some(labels))?;
    if labeled {
        m.sample_dates = dates;
    }
    Ok(m)
}

/// Simple string table reader for pipeline intermediates.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = open(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| AppError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| AppError::csv(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((headers, rows))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| AppError::io(path, e))?);
    f.write_all(text.as_bytes())
        .map_err(|e| AppError::io(path, e))?;
    f.flush().map_err(|e| AppError::io(path, e))
}
