//! Synthetic city: parcels, census block groups, service lines, lead
//! outcomes and self-selected test submissions, with the ground truth kept
//! alongside for checking estimators.
//!
//! Latent risk rises with house age, lead and galvanized service lines and
//! neighborhood deprivation, and falls with building value. Submission
//! propensity rises with property values. Readings follow the outcome model
//! in [`outcome`], calibrated per city to the configured marginal targets.

pub mod outcome;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::records::{
    first_sample_date, last_sample_date, CensusBlockRecord, CensusTable, Material, ParcelRecord,
    RecordConfidence, ServiceLineRecord, TestSource, WaterTestRecord, YearMonth,
};
use crate::rng::{self, standard_normal};

use outcome::{fit_outcome_model, FitSettings, HalfNormalNodes, RiskHistogram, Target};
pub use outcome::{OutcomeModel, LEAD_CAP_PPB};

/// Houses built before this year are the ones selection bias acts on.
pub const BIAS_YEAR: i32 = 1930;
const N_BLOCK_GROUPS: usize = 64;
const SPIKE_PROB: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_parcels: usize,
    pub vacancy_rate: f64,
    /// Mean submission propensity over occupied parcels.
    pub submit_base_rate: f64,
    /// Mean number of additional tests (each in a distinct month) per submitting parcel.
    pub extra_tests_mean: f64,
    /// Share of readings below 1 ppb.
    pub nondetect_rate: f64,
    /// Share of readings below 5 ppb.
    pub below5_rate: f64,
    pub p95_ppb: f64,
    pub p99_ppb: f64,
    pub p999_ppb: f64,
    pub repeat_test_log_correlation: f64,
    /// Latent-risk coefficient on house age.
    pub year_built_effect: f64,
    /// Strength of the value gradient in submission propensity.
    pub propensity_value_effect: f64,
    /// Multiplies every per-reading noise term; zero makes repeats identical.
    pub measurement_noise: f64,
    /// Share of occupied parcels enrolled as sentinel sites.
    pub sentinel_fraction: f64,
    /// Extra noise multiplier for sentinel readings.
    pub sentinel_noise: f64,
    /// Residential tests at addresses matching no parcel, as a share of matched ones.
    pub unmatched_rate: f64,
    /// Share of tests whose address is written differently from the parcel's.
    pub address_variation_rate: f64,
    /// Propensity multiplier for houses built before 1930 (1 = no bias).
    pub selection_bias_strength: f64,
    pub start_month: YearMonth,
    pub end_month: YearMonth,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_parcels: 5000,
            vacancy_rate: 0.42,
            submit_base_rate: 0.336,
            extra_tests_mean: 0.67,
            nondetect_rate: 0.5,
            below5_rate: 0.8,
            p95_ppb: 28.0,
            p99_ppb: 180.0,
            p999_ppb: 2100.0,
            repeat_test_log_correlation: 0.465,
            year_built_effect: 0.6,
            propensity_value_effect: 0.5,
            measurement_noise: 1.0,
            sentinel_fraction: 0.0072,
            sentinel_noise: 1.0,
            unmatched_rate: 0.03,
            address_variation_rate: 0.3,
            selection_bias_strength: 1.0,
            start_month: YearMonth::new(2015, 9),
            end_month: YearMonth::new(2017, 5),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("synth: {m}")));
        if self.n_parcels < N_BLOCK_GROUPS {
            return bad(format!("n_parcels must be at least {N_BLOCK_GROUPS}"));
        }
        let unit = [
            ("vacancy_rate", self.vacancy_rate),
            ("submit_base_rate", self.submit_base_rate),
            ("nondetect_rate", self.nondetect_rate),
            ("below5_rate", self.below5_rate),
            ("sentinel_fraction", self.sentinel_fraction),
            ("unmatched_rate", self.unmatched_rate),
            ("address_variation_rate", self.address_variation_rate),
            ("selection_bias_strength", self.selection_bias_strength),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.repeat_test_log_correlation > 0.0 && self.repeat_test_log_correlation < 1.0) {
            return bad("repeat_test_log_correlation must lie in (0, 1)".into());
        }
        for (name, v) in [
            ("extra_tests_mean", self.extra_tests_mean),
            ("measurement_noise", self.measurement_noise),
            ("sentinel_noise", self.sentinel_noise),
            ("propensity_value_effect", self.propensity_value_effect),
            ("year_built_effect", self.year_built_effect),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative"));
            }
        }
        let levels = [1.0, 5.0, self.p95_ppb, self.p99_ppb, self.p999_ppb];
        let probs = [self.nondetect_rate, self.below5_rate, 0.95, 0.99, 0.999];
        let increasing = |xs: &[f64]| xs.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&levels)
            || !increasing(&probs)
            || self.nondetect_rate <= 0.0
            || f64::from(LEAD_CAP_PPB) <= self.p999_ppb
        {
            return bad(
                "infeasible percentile targets: levels and shares must both increase".into(),
            );
        }
        if self.start_month > self.end_month
            || self.start_month.first_day() < first_sample_date()
            || self.end_month.first_day() > last_sample_date()
        {
            return bad("month window must lie within 2015-09..2017-05".into());
        }
        Ok(())
    }

    fn targets(&self) -> [Target; 5] {
        [
            Target {
                level: 1.0,
                prob: self.nondetect_rate,
            },
            Target {
                level: 5.0,
                prob: self.below5_rate,
            },
            Target {
                level: self.p95_ppb,
                prob: 0.95,
            },
            Target {
                level: self.p99_ppb,
                prob: 0.99,
            },
            Target {
                level: self.p999_ppb,
                prob: 0.999,
            },
        ]
    }
}

/// Hidden per-parcel state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelTruth {
    pub parcel_id: String,
    pub year_built: i32,
    pub occupied: bool,
    /// Standardized latent risk.
    pub latent_risk: f64,
    /// Propensity before any injected bias.
    pub base_propensity: f64,
    /// Propensity used when drawing submissions.
    pub propensity: f64,
    pub sentinel: bool,
    pub lead_line: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthTruth {
    pub month: YearMonth,
    pub effect: f64,
    /// 90th percentile of a reading at a uniformly chosen occupied parcel.
    pub true_p90: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub parcels: Vec<ParcelTruth>,
    pub outcome: OutcomeModel,
    pub months: Vec<MonthTruth>,
    pub selection_bias_strength: f64,
}

impl GroundTruth {
    pub fn month_effect(&self, m: YearMonth) -> f64 {
        month_effect(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub config: SynthConfig,
    pub parcels: Vec<ParcelRecord>,
    pub census: CensusTable,
    pub service_lines: Vec<ServiceLineRecord>,
    pub truth: GroundTruth,
}

/// Tests plus the parcel index each was drawn at (`None` for stray addresses).
#[derive(Debug, Clone, PartialEq)]
pub struct TestBatch {
    pub tests: Vec<WaterTestRecord>,
    pub origin: Vec<Option<usize>>,
}

const STREETS: &[&str] = &[
    "Saginaw",
    "Dupont",
    "Pierson",
    "Carpenter",
    "Clio",
    "Pasadena",
    "Lewis",
    "Chevrolet",
    "Franklin",
    "Detroit",
    "Mackin",
    "Welch",
    "Flushing",
    "Home",
    "Lapeer",
    "Dort",
    "Center",
    "Chippewa",
    "Kearsley",
    "Court",
    "Stewart",
    "Ridgeway",
    "Proctor",
    "Hamilton",
    "Bishop",
    "Mason",
    "Fenton",
    "Atherton",
    "Bristol",
    "Hemphill",
    "Maple",
    "Oak",
    "Elm",
    "Cedar",
    "Walnut",
    "Chestnut",
    "Spruce",
    "Birch",
    "Willow",
    "Aspen",
    "Linden",
    "Poplar",
    "Laurel",
    "Jefferson",
    "Madison",
    "Monroe",
    "Adams",
    "Jackson",
    "Harrison",
    "Tyler",
    "Polk",
    "Taylor",
    "Fillmore",
    "Pierce",
    "Lincoln",
    "Grant",
    "Hayes",
    "Garfield",
    "Arthur",
    "Cleveland",
    "Harding",
    "Coolidge",
    "Hoover",
    "Forest",
    "Lake",
    "River",
    "Hill",
    "Park",
    "Ridge",
    "Spring",
    "Summit",
    "Valley",
    "Orchard",
    "Meadow",
    "Sunset",
    "Highland",
    "Fairview",
    "Grove",
    "Prospect",
    "Vernon",
    "Beecher",
    "Leith",
    "Moore",
    "Wood",
    "Parkside",
    "Bassett",
    "Bennett",
    "Delia",
    "Eddington",
    "Ferris",
    "Genesee",
    "Hughes",
    "Illinois",
    "Josephine",
    "Kellar",
    "Lyon",
    "Milbourne",
    "Norton",
    "Orrin",
    "Paterson",
];
/// Suffix long forms; tests may spell them out where parcels abbreviate.
const SUFFIXES: &[(&str, &str)] = &[
    ("ST", "Street"),
    ("AVE", "Avenue"),
    ("RD", "Road"),
    ("DR", "Drive"),
    ("BLVD", "Boulevard"),
    ("LN", "Lane"),
    ("PL", "Place"),
];
const DIRECTIONS: &[(&str, &str)] = &[
    ("", ""),
    ("N", "North"),
    ("S", "South"),
    ("E", "East"),
    ("W", "West"),
];

fn street_of(
    index: usize,
) -> (
    &'static str,
    (&'static str, &'static str),
    (&'static str, &'static str),
) {
    let name = STREETS[index % STREETS.len()];
    let sfx = SUFFIXES[(index / STREETS.len() + index) % SUFFIXES.len()];
    let dir = DIRECTIONS[(index * 7 / 3) % DIRECTIONS.len()];
    (name, sfx, dir)
}

fn n_streets(n_parcels: usize) -> usize {
    // about 80 houses per street, never more streets than names allow uniquely
    (n_parcels / 80).clamp(8, STREETS.len() * SUFFIXES.len())
}

fn canonical_address(i: usize, n_parcels: usize) -> (usize, u32) {
    let ns = n_streets(n_parcels);
    (i % ns, 101 + 2 * (i / ns) as u32)
}

fn render_address(street: usize, number: u32, variant: u8) -> String {
    let (name, (sfx_short, sfx_long), (dir_short, dir_long)) = street_of(street);
    let dir = |long: bool| -> String {
        match (dir_short.is_empty(), long) {
            (true, _) => String::new(),
            (false, false) => format!("{dir_short} "),
            (false, true) => format!("{dir_long} "),
        }
    };
    match variant {
        0 => format!("{number} {}{name} {}", dir(false), sfx_short),
        1 => format!(
            "{number} {}{} {}",
            dir(true),
            name.to_uppercase(),
            sfx_long.to_uppercase()
        ),
        2 => format!(
            "{number} {}{} {}.",
            dir(false).to_lowercase(),
            name.to_lowercase(),
            sfx_short.to_lowercase()
        ),
        3 => format!(
            "{number}  {}{name} {sfx_long}, Apt {}",
            dir(false),
            1 + number % 4
        ),
        _ => format!(
            "{number} {}{name} {sfx_short} #{}",
            dir(true),
            1 + number % 3
        ),
    }
}

/// Seasonal swing peaking in July plus a slow downward trend.
pub fn month_effect(m: YearMonth) -> f64 {
    let idx = (m.year - 2015) as f64 * 12.0 + f64::from(m.month) - 9.0;
    0.25 * libm::sin(2.0 * core::f64::consts::PI * (f64::from(m.month) - 4.0) / 12.0)
        - 0.02 * (idx - 10.0)
}

/// Relative testing volume by month: heavy right after the emergency declaration.
pub fn month_volume(m: YearMonth) -> f64 {
    const TABLE: [f64; 21] = [
        0.3, 0.5, 0.6, 0.8, 2.0, 2.5, 2.2, 1.6, 1.3, 1.0, 0.9, 0.8, 0.8, 0.7, 0.6, 0.6, 0.6, 0.5,
        0.5, 0.5, 0.4,
    ];
    let idx = (m.year - 2015) * 12 + m.month as i32 - 9;
    if (0..21).contains(&idx) {
        TABLE[idx as usize]
    } else {
        0.5
    }
}

fn clamp_nonneg(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn round_to(x: f64, digits: i32) -> f64 {
    let f = libm::pow(10.0, f64::from(digits));
    libm::round(x * f) / f
}

fn zscores(xs: &[f64]) -> Vec<f64> {
    let m = crate::math::mean(xs);
    let sd = crate::math::sample_sd(xs);
    xs.iter()
        .map(|x| if sd > 0.0 { (x - m) / sd } else { 0.0 })
        .collect()
}

fn pick<'a, R: Rng + ?Sized>(r: &mut R, items: &[(&'a str, f64)]) -> &'a str {
    let total: f64 = items.iter().map(|x| x.1).sum();
    let mut u = r.gen::<f64>() * total;
    for &(s, w) in items {
        if u < w {
            return s;
        }
        u -= w;
    }
    items[items.len() - 1].0
}

/// Bisect the intercept so the mean of `sigmoid(t + x)` equals `rate`.
fn solve_intercept(x: &[f64], rate: f64) -> f64 {
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let m = x.iter().map(|&v| sigmoid(mid + v)).sum::<f64>() / x.len() as f64;
        if m < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Latent {
    year: i32,
    log_building: f64,
    log_land: f64,
    lead_line: bool,
    galvanized: bool,
    bg: usize,
}

pub fn generate_city(cfg: &SynthConfig) -> Result<City> {
    cfg.validate()?;
    let n = cfg.n_parcels;

    // block groups on an 8 x 8 grid
    let mut r = rng::stream(cfg.seed, 0);
    let deprivation: Vec<f64> = (0..N_BLOCK_GROUPS)
        .map(|_| standard_normal(&mut r))
        .collect();
    let bg_year: Vec<f64> = (0..N_BLOCK_GROUPS)
        .map(|_| 1935.0 + 12.0 * standard_normal(&mut r))
        .collect();
    let tract_id = |b: usize| format!("26049{:06}", 100 * (b / 4 + 1));
    let bg_id = |b: usize| format!("{}{}", tract_id(b), b % 4 + 1);
    let census = census_table(&deprivation, &mut r, &bg_id);

    let mut latent = Vec::with_capacity(n);
    let mut parcels = Vec::with_capacity(n);
    let mut lines = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream2(cfg.seed, 1, i as u64);
        let bg = r.gen_range(0..N_BLOCK_GROUPS);
        let d = deprivation[bg];
        let year =
            (libm::round(bg_year[bg] + 12.0 * standard_normal(&mut r)) as i32).clamp(1880, 2016);
        let log_building =
            10.4 + 0.015 * f64::from(year - 1935) - 0.35 * d + 0.7 * standard_normal(&mut r);
        let log_land = 7.6 - 0.3 * d + 0.9 * standard_normal(&mut r);
        let age = ((1960.0 - f64::from(year)) / 30.0).clamp(-1.0, 2.5);
        let lead_line = r.gen::<f64>() < sigmoid(-0.8 + 1.2 * age);
        let galvanized = !lead_line && r.gen::<f64>() < 0.25;

        let building = libm::round(libm::exp(log_building));
        let land = libm::round(libm::exp(log_land));
        let sev = libm::round(0.5 * (building + land) * libm::exp(0.1 * standard_normal(&mut r)));
        let improvements = if r.gen::<f64>() < 0.7 {
            0.0
        } else {
            libm::round(libm::exp(7.0 + standard_normal(&mut r)))
        };
        let acres = round_to(libm::exp(-1.9 + 0.4 * standard_normal(&mut r)), 3);
        let (row, col) = (bg / 8, bg % 8);
        let lat = round_to(42.98 + 0.012 * (row as f64 + r.gen::<f64>()), 6);
        let lon = round_to(-83.75 + 0.012 * (col as f64 + r.gen::<f64>()), 6);
        let (street, number) = canonical_address(i, n);
        let parcel_id = format!("P{:06}", i + 1);

        parcels.push(ParcelRecord {
            parcel_id: parcel_id.clone(),
            address: render_address(street, number, 0),
            year_built: (r.gen::<f64>() >= 0.05).then_some(year),
            land_value: (r.gen::<f64>() >= 0.02).then_some(land),
            building_value: (r.gen::<f64>() >= 0.02).then_some(building),
            home_sev: Some(sev),
            land_improvements: Some(improvements),
            parcel_acres: Some(acres),
            latitude: Some(lat),
            longitude: Some(lon),
            census_tract: tract_id(bg),
            block_group: bg_id(bg),
            block: format!("{}{:03}", bg_id(bg), r.gen_range(1..40)),
            usps_active: None,
            housing_condition: None,
            property_class: Some(
                pick(&mut r, &[("residential", 0.97), ("commercial", 0.03)]).to_string(),
            ),
        });
        lines.push(service_line(
            &mut r, &parcel_id, year, lead_line, galvanized,
        ));
        latent.push(Latent {
            year,
            log_building,
            log_land,
            lead_line,
            galvanized,
            bg,
        });
    }

    // latent risk
    let z_building = zscores(&latent.iter().map(|l| l.log_building).collect::<Vec<_>>());
    let z_land = zscores(&latent.iter().map(|l| l.log_land).collect::<Vec<_>>());
    let risk_raw: Vec<f64> = (0..n)
        .map(|i| {
            let l = &latent[i];
            let age = ((1960.0 - f64::from(l.year)) / 30.0).clamp(-1.0, 2.5);
            let mut r = rng::stream2(cfg.seed, 2, i as u64);
            cfg.year_built_effect * age
                + 0.6 * f64::from(u8::from(l.lead_line))
                + 0.2 * f64::from(u8::from(l.galvanized))
                - 0.25 * z_building[i]
                + 0.25 * deprivation[l.bg]
                + 0.8 * standard_normal(&mut r)
        })
        .collect();
    let risk = zscores(&risk_raw);

    // occupancy: the most deprived-looking parcels are vacant
    let vacancy_score: Vec<f64> = (0..n)
        .map(|i| {
            let mut r = rng::stream2(cfg.seed, 3, i as u64);
            0.5 * deprivation[latent[i].bg] + standard_normal(&mut r)
        })
        .collect();
    let n_vacant = libm::round(cfg.vacancy_rate * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        vacancy_score[b]
            .total_cmp(&vacancy_score[a])
            .then(a.cmp(&b))
    });
    let mut occupied = vec![true; n];
    for &i in &order[..n_vacant] {
        occupied[i] = false;
    }
    for i in 0..n {
        let mut r = rng::stream2(cfg.seed, 4, i as u64);
        let p = &mut parcels[i];
        if occupied[i] {
            if r.gen::<f64>() < 0.9 {
                p.usps_active = Some(true);
                p.housing_condition = (r.gen::<f64>() < 0.7).then(|| {
                    pick(&mut r, &[("good", 0.4), ("fair", 0.4), ("poor", 0.2)]).to_string()
                });
            } else {
                p.usps_active = if r.gen::<f64>() < 0.5 {
                    Some(false)
                } else {
                    None
                };
                p.housing_condition =
                    Some(pick(&mut r, &[("good", 0.3), ("fair", 0.4), ("poor", 0.3)]).to_string());
            }
        } else {
            p.usps_active = if r.gen::<f64>() < 0.6 {
                Some(false)
            } else {
                None
            };
            p.housing_condition =
                match pick(&mut r, &[("vacant", 0.5), ("demolished", 0.1), ("", 0.4)]) {
                    "" => None,
                    c => Some(c.to_string()),
                };
        }
    }

    // submission propensity among occupied parcels
    let gradient: Vec<f64> = (0..n)
        .map(|i| {
            cfg.propensity_value_effect
                * (0.6 * z_building[i] + 0.3 * z_land[i] - 0.3 * deprivation[latent[i].bg])
        })
        .collect();
    let occ_gradient: Vec<f64> = (0..n)
        .filter(|&i| occupied[i])
        .map(|i| gradient[i])
        .collect();
    let base_propensity: Vec<f64> = if cfg.submit_base_rate >= 1.0 {
        (0..n)
            .map(|i| if occupied[i] { 1.0 } else { 0.0 })
            .collect()
    } else if cfg.submit_base_rate <= 0.0 || occ_gradient.is_empty() {
        vec![0.0; n]
    } else {
        let t0 = solve_intercept(&occ_gradient, cfg.submit_base_rate);
        (0..n)
            .map(|i| {
                if occupied[i] {
                    sigmoid(t0 + gradient[i])
                } else {
                    0.0
                }
            })
            .collect()
    };

    // sentinel sites: a uniform subsample of occupied parcels
    let occ_idx: Vec<usize> = (0..n).filter(|&i| occupied[i]).collect();
    let n_sentinel = libm::round(cfg.sentinel_fraction * occ_idx.len() as f64) as usize;
    let mut shuffled = occ_idx.clone();
    shuffled.shuffle(&mut rng::stream(cfg.seed, 5));
    let mut sentinel = vec![false; n];
    for &i in &shuffled[..n_sentinel] {
        sentinel[i] = true;
    }

    // outcome model fit on the expected test population
    let weights: Vec<f64> = occ_idx.iter().map(|&i| base_propensity[i] + 1e-9).collect();
    let risks: Vec<f64> = occ_idx.iter().map(|&i| risk[i]).collect();
    let hist = RiskHistogram::new(&risks, &weights, 100);
    let outcome = fit_outcome_model(
        &hist,
        &cfg.targets(),
        &FitSettings {
            spike_prob: SPIKE_PROB,
            target_correlation: cfg.repeat_test_log_correlation,
            correlation_pairs: 20_000,
            seed: rng::derive_seed(cfg.seed, 6),
        },
    );

    let truth_parcels: Vec<ParcelTruth> = (0..n)
        .map(|i| ParcelTruth {
            parcel_id: parcels[i].parcel_id.clone(),
            year_built: latent[i].year,
            occupied: occupied[i],
            latent_risk: risk[i],
            base_propensity: base_propensity[i],
            propensity: base_propensity[i],
            sentinel: sentinel[i],
            lead_line: latent[i].lead_line,
        })
        .collect();
    let months = YearMonth::range(cfg.start_month, cfg.end_month)
        .into_iter()
        .map(|m| MonthTruth {
            month: m,
            effect: month_effect(m),
            true_p90: true_quantile(
                &outcome,
                &truth_parcels,
                month_effect(m),
                cfg.measurement_noise,
                0.9,
            ),
        })
        .collect();

    let mut city = City {
        config: cfg.clone(),
        parcels,
        census,
        service_lines: lines,
        truth: GroundTruth {
            parcels: truth_parcels,
            outcome,
            months,
            selection_bias_strength: 1.0,
        },
    };
    if cfg.selection_bias_strength < 1.0 {
        inject_selection_bias(&mut city, cfg.selection_bias_strength)?;
    }
    Ok(city)
}

fn census_table<R: Rng + ?Sized>(
    deprivation: &[f64],
    r: &mut R,
    bg_id: &dyn Fn(usize) -> String,
) -> CensusTable {
    let columns: Vec<String> = [
        "total_population",
        "median_household_income",
        "median_gross_rent",
        "pct_white",
        "pct_black",
        "pct_under_18",
        "pct_over_65",
        "pct_single_parent",
        "pct_non_english",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let pct = |x: f64| round_to(x.clamp(0.0, 100.0), 1);
    let rows = deprivation
        .iter()
        .enumerate()
        .map(|(b, &d)| {
            let black = pct(55.0 + 20.0 * d + 8.0 * standard_normal(r));
            let white = pct((100.0 - black) * (0.85 + 0.05 * standard_normal(r)));
            CensusBlockRecord {
                block_group_id: bg_id(b),
                values: vec![
                    Some(libm::round(
                        clamp_nonneg(1200.0 + 300.0 * standard_normal(r)) + 100.0,
                    )),
                    Some(libm::round(
                        35_000.0 * libm::exp(-0.3 * d + 0.15 * standard_normal(r)),
                    )),
                    Some(libm::round(
                        650.0 * libm::exp(-0.1 * d + 0.1 * standard_normal(r)),
                    )),
                    Some(white),
                    Some(black),
                    Some(pct(26.0 + 3.0 * d + 3.0 * standard_normal(r))),
                    Some(pct(13.0 - 2.0 * d + 3.0 * standard_normal(r))),
                    Some(pct(30.0 + 8.0 * d + 5.0 * standard_normal(r))),
                    Some(pct(4.0 + 2.0 * standard_normal(r))),
                ],
            }
        })
        .collect();
    CensusTable { columns, rows }
}

fn service_line<R: Rng + ?Sized>(
    r: &mut R,
    parcel_id: &str,
    year: i32,
    lead_line: bool,
    galvanized: bool,
) -> ServiceLineRecord {
    let confidence = match pick(
        r,
        &[("recorded", 0.35), ("inferred", 0.35), ("unknown", 0.3)],
    ) {
        "recorded" => RecordConfidence::Recorded,
        "inferred" => RecordConfidence::Inferred,
        _ => RecordConfidence::Unknown,
    };
    let modern = if year >= 1980 && r.gen::<f64>() < 0.5 {
        Material::Plastic
    } else {
        Material::Copper
    };
    let true_public = if lead_line { Material::Lead } else { modern };
    let true_private = if lead_line && r.gen::<f64>() < 0.6 {
        Material::Lead
    } else if galvanized {
        Material::Galvanized
    } else {
        modern
    };
    let blur = |r: &mut R, m: Material| -> Material {
        if r.gen::<f64>() < 0.8 {
            m
        } else {
            [
                Material::Lead,
                Material::Copper,
                Material::Galvanized,
                Material::Other,
            ][r.gen_range(0..4)]
        }
    };
    let (public_material, private_material) = match confidence {
        RecordConfidence::Recorded => (true_public, true_private),
        RecordConfidence::Inferred => (blur(r, true_public), blur(r, true_private)),
        RecordConfidence::Unknown => (Material::Unknown, Material::Unknown),
    };
    ServiceLineRecord {
        parcel_id: parcel_id.to_string(),
        public_material,
        private_material,
        confidence,
    }
}

/// Scale the propensity of pre-1930 houses by `strength` (1 leaves them unchanged).
pub fn inject_selection_bias(city: &mut City, strength: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::InvalidConfig(
            "selection bias strength must lie in [0, 1]".into(),
        ));
    }
    for p in &mut city.truth.parcels {
        p.propensity = if p.year_built < BIAS_YEAR {
            p.base_propensity * strength
        } else {
            p.base_propensity
        };
    }
    city.truth.selection_bias_strength = strength;
    Ok(())
}

/// Smallest integer reading `L` with P(reading <= L) >= q for a reading at a
/// uniformly chosen occupied parcel.
pub fn true_quantile(
    outcome: &OutcomeModel,
    parcels: &[ParcelTruth],
    effect: f64,
    noise: f64,
    q: f64,
) -> u32 {
    let nodes = HalfNormalNodes::new(24);
    let locs: Vec<f64> = parcels
        .iter()
        .filter(|p| p.occupied)
        .map(|p| outcome.location(p.latent_risk, effect))
        .collect();
    if locs.is_empty() {
        return 0;
    }
    let cdf_le = |level: u32| -> f64 {
        locs.iter()
            .map(|&l| outcome.cdf_below(level + 1, l, noise, &nodes))
            .sum::<f64>()
            / locs.len() as f64
    };
    let (mut lo, mut hi) = (0u32, LEAD_CAP_PPB);
    if cdf_le(0) >= q {
        return 0;
    }
    // invariant: cdf_le(lo) < q <= cdf_le(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cdf_le(mid) >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn sample_months<R: Rng + ?Sized>(r: &mut R, months: &[YearMonth], k: usize) -> Vec<YearMonth> {
    let mut pool: Vec<(YearMonth, f64)> = months.iter().map(|&m| (m, month_volume(m))).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(pool.len()) {
        let total: f64 = pool.iter().map(|p| p.1).sum();
        let mut u = r.gen::<f64>() * total;
        let mut idx = pool.len() - 1;
        for (j, p) in pool.iter().enumerate() {
            if u < p.1 {
                idx = j;
                break;
            }
            u -= p.1;
        }
        out.push(pool.remove(idx).0);
    }
    out.sort();
    out
}

fn random_day<R: Rng + ?Sized>(r: &mut R, m: YearMonth) -> NaiveDate {
    let day = r.gen_range(1..=m.days());
    NaiveDate::from_ymd_opt(m.year, m.month, day).expect("valid day")
}

fn copper<R: Rng + ?Sized>(r: &mut R) -> Option<u32> {
    (r.gen::<f64>() < 0.9).then(|| libm::floor(libm::exp(4.0 + standard_normal(r))) as u32)
}

/// Draw residential submissions (by current propensity), sentinel readings
/// and stray tests at unknown addresses over the inclusive month window.
pub fn generate_tests(city: &City, start: YearMonth, end: YearMonth) -> Result<TestBatch> {
    let cfg = &city.config;
    if start > end
        || start.first_day() < first_sample_date()
        || end.first_day() > last_sample_date()
    {
        return Err(Error::InvalidConfig(
            "test window must lie within 2015-09..2017-05".into(),
        ));
    }
    let months = YearMonth::range(start, end);
    let outcome = &city.truth.outcome;
    let n = city.parcels.len();
    let mut tests = Vec::new();
    let mut origin = Vec::new();
    let mut next_id = 1usize;
    let mut push = |tests: &mut Vec<WaterTestRecord>,
                    origin: &mut Vec<Option<usize>>,
                    t: WaterTestRecord,
                    o: Option<usize>| {
        tests.push(WaterTestRecord {
            sample_id: format!("S{next_id:07}"),
            ..t
        });
        origin.push(o);
        next_id += 1;
    };

    for i in 0..n {
        let truth = &city.truth.parcels[i];
        let mut r = rng::stream2(cfg.seed, 10, i as u64);
        if !(r.gen::<f64>() < truth.propensity) {
            continue;
        }
        let k = 1 + rng::poisson(&mut r, cfg.extra_tests_mean) as usize;
        let (street, number) = canonical_address(i, n);
        for m in sample_months(&mut r, &months, k) {
            let lead = outcome.draw(
                &mut r,
                truth.latent_risk,
                month_effect(m),
                cfg.measurement_noise,
            );
            let variant = if r.gen::<f64>() < cfg.address_variation_rate {
                r.gen_range(1..5u8)
            } else {
                0
            };
            let t = WaterTestRecord {
                sample_id: String::new(),
                address: render_address(street, number, variant),
                sample_date: random_day(&mut r, m),
                lead_ppb: lead,
                copper_ppb: copper(&mut r),
                source: TestSource::Residential,
            };
            push(&mut tests, &mut origin, t, Some(i));
        }
    }
    let n_matched = tests.len();

    for i in 0..n {
        let truth = &city.truth.parcels[i];
        if !truth.sentinel {
            continue;
        }
        let mut r = rng::stream2(cfg.seed, 11, i as u64);
        let (street, number) = canonical_address(i, n);
        for &m in &months {
            let lead = outcome.draw(
                &mut r,
                truth.latent_risk,
                month_effect(m),
                cfg.measurement_noise * cfg.sentinel_noise,
            );
            let t = WaterTestRecord {
                sample_id: String::new(),
                address: render_address(street, number, 0),
                sample_date: random_day(&mut r, m),
                lead_ppb: lead,
                copper_ppb: copper(&mut r),
                source: TestSource::Sentinel,
            };
            push(&mut tests, &mut origin, t, Some(i));
        }
    }

    // stray tests from addresses outside the parcel roll
    let occupied: Vec<usize> = (0..n).filter(|&i| city.truth.parcels[i].occupied).collect();
    let n_stray = libm::round(cfg.unmatched_rate * n_matched as f64) as usize;
    for j in 0..n_stray {
        let mut r = rng::stream2(cfg.seed, 12, j as u64);
        if occupied.is_empty() {
            break;
        }
        let like = occupied[r.gen_range(0..occupied.len())];
        let m = sample_months(&mut r, &months, 1)[0];
        let lead = outcome.draw(
            &mut r,
            city.truth.parcels[like].latent_risk,
            month_effect(m),
            cfg.measurement_noise,
        );
        let t = WaterTestRecord {
            sample_id: String::new(),
            address: format!("{} County Line Rd Lot {}", 9000 + j, j % 50),
            sample_date: random_day(&mut r, m),
            lead_ppb: lead,
            copper_ppb: copper(&mut r),
            source: TestSource::Residential,
        };
        push(&mut tests, &mut origin, t, None);
    }
    Ok(TestBatch { tests, origin })
}

/// City plus tests over the configured window, bias applied per the config.
pub fn generate(cfg: &SynthConfig) -> Result<(City, TestBatch)> {
    let city = generate_city(cfg)?;
    let batch = generate_tests(&city, cfg.start_month, cfg.end_month)?;
    Ok((city, batch))
}

/// Truth summary keyed by parcel id.
pub fn truth_by_parcel(truth: &GroundTruth) -> BTreeMap<&str, &ParcelTruth> {
    truth
        .parcels
        .iter()
        .map(|p| (p.parcel_id.as_str(), p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address::normalize_address;
    use alloc::collections::BTreeSet;

    fn small() -> SynthConfig {
        SynthConfig {
            n_parcels: 1500,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn address_variants_normalize_together() {
        for street in [0, 5, 17, 240] {
            let base = normalize_address(&render_address(street, 311, 0));
            for v in 1..5 {
                assert_eq!(normalize_address(&render_address(street, 311, v)), base);
            }
        }
    }

    #[test]
    fn canonical_addresses_are_unique() {
        let n = 60_000;
        let set: BTreeSet<String> = (0..n)
            .map(|i| {
                let (s, num) = canonical_address(i, n);
                normalize_address(&render_address(s, num, 0))
            })
            .collect();
        assert_eq!(set.len(), n);
    }

    #[test]
    fn rejects_bad_configs() {
        let c = SynthConfig {
            p99_ppb: 20.0,
            ..small()
        };
        assert!(generate_city(&c).is_err());
        let c = SynthConfig {
            vacancy_rate: 1.5,
            ..small()
        };
        assert!(generate_city(&c).is_err());
    }

    #[test]
    fn vacancy_zero_means_all_occupied() {
        let c = SynthConfig {
            vacancy_rate: 0.0,
            ..small()
        };
        let city = generate_city(&c).unwrap();
        assert!(city.truth.parcels.iter().all(|p| p.occupied));
        assert!(city.parcels.iter().all(crate::merge::is_occupied));
    }

    #[test]
    fn occupancy_signals_agree_with_truth() {
        let city = generate_city(&small()).unwrap();
        for (p, t) in city.parcels.iter().zip(&city.truth.parcels) {
            assert_eq!(crate::merge::is_occupied(p), t.occupied);
            p.validate().unwrap();
        }
        let kept = city.truth.parcels.iter().filter(|p| p.occupied).count() as f64 / 1500.0;
        assert!((kept - 0.58).abs() < 0.001);
    }

    #[test]
    fn bias_strength_bounds() {
        let mut city = generate_city(&small()).unwrap();
        assert!(inject_selection_bias(&mut city, 1.2).is_err());
        let before: Vec<f64> = city.truth.parcels.iter().map(|p| p.propensity).collect();
        inject_selection_bias(&mut city, 1.0).unwrap();
        assert_eq!(
            before,
            city.truth
                .parcels
                .iter()
                .map(|p| p.propensity)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn full_propensity_single_month() {
        let c = SynthConfig {
            submit_base_rate: 1.0,
            sentinel_fraction: 0.0,
            unmatched_rate: 0.0,
            ..small()
        };
        let city = generate_city(&c).unwrap();
        let m = YearMonth::new(2016, 2);
        let batch = generate_tests(&city, m, m).unwrap();
        let tested: BTreeSet<usize> = batch.origin.iter().flatten().copied().collect();
        let occupied: BTreeSet<usize> = (0..1500)
            .filter(|&i| city.truth.parcels[i].occupied)
            .collect();
        assert_eq!(tested, occupied);
        assert!(batch
            .tests
            .iter()
            .all(|t| YearMonth::of(t.sample_date) == m));
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn readings_hit_marginal_targets() {
        let cfg = SynthConfig {
            n_parcels: 16_000,
            seed: 11,
            ..SynthConfig::default()
        };
        let (_, batch) = generate(&cfg).unwrap();
        let mut v: Vec<u32> = batch
            .tests
            .iter()
            .zip(&batch.origin)
            .filter(|(t, o)| o.is_some() && t.source == TestSource::Residential)
            .map(|(t, _)| t.lead_ppb)
            .collect();
        v.sort();
        let n = v.len() as f64;
        let below5 = v.iter().filter(|&&x| x < 5).count() as f64 / n;
        let p95 = f64::from(v[(0.95 * n) as usize]);
        let p99 = f64::from(v[(0.99 * n) as usize]);
        assert!((0.75..=0.85).contains(&below5));
        assert!((p95 / 28.0 - 1.0).abs() <= 0.2);
        assert!((p99 / 180.0 - 1.0).abs() <= 0.2);

        // log correlation of consecutive tests at the same parcel
        let mut by_parcel: BTreeMap<usize, Vec<(NaiveDate, u32)>> = BTreeMap::new();
        for (t, o) in batch.tests.iter().zip(&batch.origin) {
            if let (Some(i), TestSource::Residential) = (o, t.source) {
                by_parcel
                    .entry(*i)
                    .or_default()
                    .push((t.sample_date, t.lead_ppb));
            }
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for tests in by_parcel.values_mut() {
            tests.sort();
            for w in tests.windows(2) {
                xs.push(libm::log(f64::from(w[0].1) + 1.0));
                ys.push(libm::log(f64::from(w[1].1) + 1.0));
            }
        }
        let (mx, my) = (crate::math::mean(&xs), crate::math::mean(&ys));
        let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = xs.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ys.iter().map(|b| (b - my) * (b - my)).sum();
        let r = cov / libm::sqrt(vx * vy);
        assert!(xs.len() >= 2000);
        assert!((r - 0.465).abs() <= 0.1);
    }

    #[test]
    fn zero_noise_repeats_are_identical() {
        let cfg = SynthConfig {
            measurement_noise: 0.0,
            submit_base_rate: 1.0,
            ..small()
        };
        let (city, batch) = generate(&cfg).unwrap();
        let o = &city.truth.outcome;
        for (t, i) in batch.tests.iter().zip(&batch.origin) {
            let Some(i) = i else { continue };
            let loc = o.location(
                city.truth.parcels[*i].latent_risk,
                month_effect(YearMonth::of(t.sample_date)),
            );
            assert_eq!(t.lead_ppb, outcome::floor_reading(loc));
        }
        // same parcel and month: identical readings, correlation exactly one
        let mut r = rng::stream(9, 9);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for p in city.truth.parcels.iter().filter(|p| p.occupied) {
            xs.push(o.draw(&mut r, p.latent_risk, 0.1, 0.0));
            ys.push(o.draw(&mut r, p.latent_risk, 0.1, 0.0));
        }
        assert_eq!(xs, ys);
    }
}
