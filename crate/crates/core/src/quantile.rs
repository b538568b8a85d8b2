//! Inverse-propensity weights, weighted quantiles, bootstrap spread and the
//! monthly 90th-percentile series.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::math::{median, sample_sd};
use crate::records::{TestSource, YearMonth, ACTION_LEVEL_PPB};
use crate::rng;

/// Propensities below this are raised to it before inversion.
pub const PROPENSITY_FLOOR: f64 = 1e-4;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
/// Relative slack when comparing cumulative weight against `q`, so that
/// e.g. nine weights of 0.1 reach 0.9.
const CUM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthWeights {
    /// Normalized to sum to one.
    pub weights: Vec<f64>,
    /// Set when no sample had a propensity and uniform weights were used.
    pub uniform_fallback: bool,
}

/// Weights for the samples of one month. `propensities[i]` is `None` for a
/// sample that matched no parcel.
///
/// Matched samples get `sum(p_j over matched j) / p_i`; unmatched samples get
/// the median of those raw weights; then everything is scaled to sum to one.
pub fn compute_weights(propensities: &[Option<f64>]) -> Result<MonthWeights> {
    if propensities.is_empty() {
        return Err(Error::Empty("month has no samples"));
    }
    for (i, p) in propensities.iter().enumerate() {
        if let Some(p) = p {
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::NonFinite(i));
            }
        }
    }
    let floored: Vec<Option<f64>> = propensities
        .iter()
        .map(|p| p.map(|p| p.max(PROPENSITY_FLOOR)))
        .collect();
    let total: f64 = floored.iter().flatten().sum();
    let raw_matched: Vec<f64> = floored.iter().flatten().map(|p| total / p).collect();
    let Some(fill) = median(&raw_matched) else {
        let n = propensities.len();
        return Ok(MonthWeights {
            weights: vec![1.0 / n as f64; n],
            uniform_fallback: true,
        });
    };
    let raw: Vec<f64> = floored
        .iter()
        .map(|p| p.map_or(fill, |p| total / p))
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(MonthWeights {
        weights: raw.iter().map(|w| w / sum).collect(),
        uniform_fallback: false,
    })
}

/// Smallest value whose cumulative share of the total weight reaches `q`.
/// Weights need not be normalized; tied values pool their weight.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("no samples"));
    }
    if values.len() != weights.len() {
        return Err(Error::InvalidConfig(
            "values and weights differ in length".into(),
        ));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidConfig(
            "quantile level must lie in (0, 1)".into(),
        ));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig("weights sum to zero".into()));
    }
    let target = q * total - CUM_SLACK * total;
    let mut cum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        while i < order.len() && values[order[i]] == v {
            cum += weights[order[i]];
            i += 1;
        }
        if cum >= target {
            return Ok(v);
        }
    }
    Ok(values[order[order.len() - 1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSd {
    pub sd: f64,
    /// Fewer than two samples: no spread could be estimated.
    pub degenerate: bool,
}

/// Resample `n` values with replacement, with probability proportional to
/// weight, take the plain `q`-quantile of each resample and return the sample
/// standard deviation over `b` replicates.
pub fn bootstrap_quantile_sd(
    values: &[f64],
    weights: &[f64],
    q: f64,
    b: usize,
    seed: u64,
) -> Result<BootstrapSd> {
    if values.len() != weights.len() {
        return Err(Error::InvalidConfig(
            "values and weights differ in length".into(),
        ));
    }
    let n = values.len();
    if n < 2 || b < 2 {
        return Ok(BootstrapSd {
            sd: 0.0,
            degenerate: true,
        });
    }
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    let total = acc;
    let unit = vec![1.0; n];
    let mut draw = vec![0.0; n];
    let mut estimates = Vec::with_capacity(b);
    for rep in 0..b {
        let mut r = rng::stream(seed, rep as u64);
        for slot in draw.iter_mut() {
            let u = r.gen::<f64>() * total;
            let k = cum.partition_point(|&c| c <= u).min(n - 1);
            *slot = values[k];
        }
        estimates.push(weighted_quantile(&draw, &unit, q)?);
    }
    Ok(BootstrapSd {
        sd: sample_sd(&estimates),
        degenerate: false,
    })
}

/// One lead reading entering the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSample {
    pub sample_date: NaiveDate,
    pub lead_ppb: u32,
    pub source: TestSource,
    /// `None` for readings that matched no parcel.
    pub parcel_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    /// `None` keeps every source.
    pub source: Option<TestSource>,
    pub weighted: bool,
    pub q: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            source: None,
            weighted: true,
            q: 0.9,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthEstimate {
    pub month: YearMonth,
    pub n: usize,
    pub estimate_ppb: f64,
    pub bootstrap_sd: f64,
    pub sd_degenerate: bool,
    pub total_weight: f64,
    pub uniform_fallback: bool,
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub source: Option<TestSource>,
    pub weighted: bool,
    pub months: Vec<MonthEstimate>,
}

impl MonthlySeries {
    pub fn source_label(&self) -> &'static str {
        self.source.map_or("all", TestSource::as_str)
    }
}

/// Per calendar month: weights (or uniform), weighted quantile, bootstrap sd
/// and compliance against the action level. Months without samples are omitted.
pub fn monthly_p90_series<E: Executor>(
    samples: &[SeriesSample],
    propensities: &BTreeMap<String, f64>,
    opts: &SeriesOptions,
    exec: &E,
) -> Result<MonthlySeries> {
    let mut by_month: BTreeMap<YearMonth, Vec<&SeriesSample>> = BTreeMap::new();
    for s in samples {
        if opts.source.is_none_or(|src| src == s.source) {
            by_month
                .entry(YearMonth::of(s.sample_date))
                .or_default()
                .push(s);
        }
    }
    let months: Vec<(YearMonth, Vec<&SeriesSample>)> = by_month.into_iter().collect();
    let results = exec.map_indexed(months.len(), |k| -> Result<MonthEstimate> {
        let (month, rows) = &months[k];
        let values: Vec<f64> = rows.iter().map(|s| f64::from(s.lead_ppb)).collect();
        let (weights, uniform_fallback) = if opts.weighted {
            let props: Vec<Option<f64>> = rows
                .iter()
                .map(|s| match &s.parcel_id {
                    None => Ok(None),
                    Some(pid) => propensities
                        .get(pid)
                        .copied()
                        .map(Some)
                        .ok_or_else(|| Error::MissingPropensity(pid.clone())),
                })
                .collect::<Result<_>>()?;
            let w = compute_weights(&props)?;
            (w.weights, w.uniform_fallback)
        } else {
            (vec![1.0 / values.len() as f64; values.len()], false)
        };
        let estimate = weighted_quantile(&values, &weights, opts.q)?;
        let month_key = (month.year as u64) * 12 + u64::from(month.month);
        let boot = bootstrap_quantile_sd(
            &values,
            &weights,
            opts.q,
            opts.bootstrap,
            rng::derive_seed(opts.seed, month_key),
        )?;
        Ok(MonthEstimate {
            month: *month,
            n: values.len(),
            estimate_ppb: estimate,
            bootstrap_sd: boot.sd,
            sd_degenerate: boot.degenerate,
            total_weight: weights.iter().sum(),
            uniform_fallback,
            compliant: estimate < f64::from(ACTION_LEVEL_PPB),
        })
    });
    Ok(MonthlySeries {
        source: opts.source,
        weighted: opts.weighted,
        months: results.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use alloc::string::ToString;
    use proptest::prelude::*;

    #[test]
    fn weight_examples() {
        let w = compute_weights(&[Some(0.3), Some(0.3), Some(0.3)]).unwrap();
        assert!(w.weights.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let w = compute_weights(&[Some(0.2), Some(0.8)]).unwrap();
        assert!((w.weights[0] - 0.8).abs() < 1e-15 && (w.weights[1] - 0.2).abs() < 1e-15);
        let w = compute_weights(&[Some(0.5), None]).unwrap();
        assert_eq!(w.weights, vec![0.5, 0.5]);
        let w = compute_weights(&[None, None]).unwrap();
        assert!(w.uniform_fallback);
        assert_eq!(w.weights, vec![0.5, 0.5]);
        assert!(compute_weights(&[]).is_err());
    }

    #[test]
    fn floor_applies() {
        let w = compute_weights(&[Some(0.0), Some(1e-4)]).unwrap();
        assert_eq!(w.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn quantile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let w = vec![0.1; 10];
        assert_eq!(weighted_quantile(&v, &w, 0.9).unwrap(), 9.0);
        assert_eq!(weighted_quantile(&[7.0], &[1.0], 0.3).unwrap(), 7.0);
        assert_eq!(
            weighted_quantile(&[5.0, 10.0, 20.0], &[2.0, 1.0, 3.0], 0.5).unwrap(),
            10.0
        );
        assert!(weighted_quantile(&[], &[], 0.5).is_err());
    }

    #[test]
    fn bootstrap_degenerate_and_constant() {
        let b = bootstrap_quantile_sd(&[3.0], &[1.0], 0.9, 100, 1).unwrap();
        assert!(b.degenerate && b.sd == 0.0);
        let b = bootstrap_quantile_sd(&[4.0; 30], &[1.0; 30], 0.9, 100, 1).unwrap();
        assert_eq!(b.sd, 0.0);
        let v: Vec<f64> = (0..50).map(f64::from).collect();
        let w = vec![1.0; 50];
        assert_eq!(
            bootstrap_quantile_sd(&v, &w, 0.9, 200, 4).unwrap(),
            bootstrap_quantile_sd(&v, &w, 0.9, 200, 4).unwrap()
        );
    }

    #[test]
    fn unweighted_series_example() {
        let d = NaiveDate::from_ymd_opt(2016, 3, 4).unwrap();
        let samples: Vec<SeriesSample> = (1..=10)
            .map(|v| SeriesSample {
                sample_date: d,
                lead_ppb: v,
                source: TestSource::Residential,
                parcel_id: Some(v.to_string()),
            })
            .collect();
        let opts = SeriesOptions {
            weighted: false,
            bootstrap: 50,
            ..SeriesOptions::default()
        };
        let s = monthly_p90_series(&samples, &BTreeMap::new(), &opts, &Sequential).unwrap();
        assert_eq!(s.months.len(), 1);
        assert_eq!(s.months[0].estimate_ppb, 9.0);
        assert!(s.months[0].compliant);
        let err = monthly_p90_series(
            &samples,
            &BTreeMap::new(),
            &SeriesOptions::default(),
            &Sequential,
        );
        assert!(matches!(err, Err(Error::MissingPropensity(_))));
    }

    proptest! {
        #[test]
        fn nondecreasing_in_q(vals in proptest::collection::vec(0u32..60, 1..30), q1 in 0.01f64..0.99, q2 in 0.01f64..0.99) {
            let v: Vec<f64> = vals.iter().map(|&x| f64::from(x)).collect();
            let w: Vec<f64> = (0..v.len()).map(|i| 1.0 + (i % 3) as f64).collect();
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(weighted_quantile(&v, &w, lo).unwrap() <= weighted_quantile(&v, &w, hi).unwrap());
        }

        #[test]
        fn normalized_weights_sum_to_one(ps in proptest::collection::vec(proptest::option::weighted(0.8, 0.0f64..1.0), 1..40)) {
            let w = compute_weights(&ps).unwrap();
            let s: f64 = w.weights.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(w.weights.iter().all(|&x| x > 0.0 && x.is_finite()));
        }
    }
}
