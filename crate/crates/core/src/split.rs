//! Parcel-grouped train/test splits and folds.
//!
//! Rows are never split individually: every row of a parcel lands on the same
//! side, so repeat tests at one address cannot leak between train and test.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_parcels: BTreeSet<String>,
    pub test_parcels: BTreeSet<String>,
    pub seed: u64,
}

impl SplitAssignment {
    /// Row indices on each side, in row order.
    pub fn row_indices(&self, m: &FeatureMatrix) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, p) in m.parcel_ids.iter().enumerate() {
            if self.test_parcels.contains(p) {
                test.push(i);
            } else if self.train_parcels.contains(p) {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Parcels in sorted order with their row counts.
fn parcel_sizes(parcel_ids: &[String]) -> Vec<(&str, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in parcel_ids {
        *counts.entry(p.as_str()).or_default() += 1;
    }
    counts.into_iter().collect()
}

/// Shuffle parcels with a seeded generator and fill the test side until its
/// row count is as close as possible to `test_fraction` of all rows.
pub fn group_split(
    parcel_ids: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(
            "test_fraction must lie in (0, 1)".into(),
        ));
    }
    let mut groups = parcel_sizes(parcel_ids);
    if groups.len() < 2 {
        return Err(Error::TooFewGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    groups.shuffle(&mut rng::stream(seed, 0));
    let target = test_fraction * parcel_ids.len() as f64;
    let mut test_rows = 0usize;
    let mut test = BTreeSet::new();
    let mut train = BTreeSet::new();
    for (p, size) in &groups {
        let with = (test_rows + size) as f64 - target;
        let without = test_rows as f64 - target;
        if with.abs() < without.abs() {
            test_rows += size;
            test.insert(String::from(*p));
        } else {
            train.insert(String::from(*p));
        }
    }
    // both sides must be non-empty
    if test.is_empty() {
        let p = String::from(groups[0].0);
        train.remove(&p);
        test.insert(p);
    } else if train.is_empty() {
        let p = String::from(groups[groups.len() - 1].0);
        test.remove(&p);
        train.insert(p);
    }
    Ok(SplitAssignment {
        train_parcels: train,
        test_parcels: test,
        seed,
    })
}

/// Partition parcels into `k` folds: seeded shuffle, then round-robin.
/// Returns the fold index of every row.
pub fn group_kfold(parcel_ids: &[String], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    let mut groups = parcel_sizes(parcel_ids);
    if groups.len() < k {
        return Err(Error::TooFewGroups {
            needed: k,
            found: groups.len(),
        });
    }
    groups.shuffle(&mut rng::stream(seed, 1));
    let fold_of: BTreeMap<&str, usize> = groups
        .iter()
        .enumerate()
        .map(|(i, (p, _))| (*p, i % k))
        .collect();
    Ok(parcel_ids.iter().map(|p| fold_of[p.as_str()]).collect())
}

/// Row indices (train, held-out) for fold `f` of a fold assignment.
pub fn fold_rows(folds: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, &k) in folds.iter().enumerate() {
        if k == f {
            held.push(i);
        } else {
            train.push(i);
        }
    }
    (train, held)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn ids(counts: &[usize]) -> Vec<String> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(p, &c)| std::iter::repeat_n(format!("P{p:03}"), c))
            .collect()
    }

    #[test]
    fn singleton_parcels_split_exactly() {
        let ids = ids(&[1; 100]);
        let s = group_split(&ids, 0.25, 9).unwrap();
        assert_eq!(s.test_parcels.len(), 25);
        assert_eq!(s.train_parcels.len(), 75);
    }

    #[test]
    fn multi_test_parcel_stays_together() {
        let mut counts = alloc::vec![1; 40];
        counts[7] = 5;
        let ids = ids(&counts);
        for seed in 0..20 {
            let s = group_split(&ids, 0.25, seed).unwrap();
            let side = s.test_parcels.contains("P007");
            let (train, test) = {
                let m = FeatureMatrix::from_rows(
                    alloc::vec![],
                    ids.iter().map(|_| alloc::vec![]).collect(),
                    ids.clone(),
                    None,
                )
                .unwrap();
                s.row_indices(&m)
            };
            let rows_of_7: Vec<_> = (0..ids.len()).filter(|&i| ids[i] == "P007").collect();
            let target = if side { &test } else { &train };
            assert!(rows_of_7.iter().all(|i| target.contains(i)));
            assert!(s.train_parcels.is_disjoint(&s.test_parcels));
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ids = ids(&[1, 2, 1, 3, 1, 1, 2, 1, 1, 1, 4, 1]);
        assert_eq!(
            group_split(&ids, 0.3, 4).unwrap(),
            group_split(&ids, 0.3, 4).unwrap()
        );
        let differs = (0..10)
            .any(|s| group_split(&ids, 0.3, s).unwrap() != group_split(&ids, 0.3, 4).unwrap());
        assert!(differs);
    }

    #[test]
    fn realized_fraction_within_three_points() {
        let counts: Vec<usize> = (0..400).map(|i| 1 + (i * 7 % 3)).collect();
        let ids = ids(&counts);
        for seed in 0..10 {
            let s = group_split(&ids, 0.25, seed).unwrap();
            let test_rows = ids.iter().filter(|p| s.test_parcels.contains(*p)).count();
            let frac = test_rows as f64 / ids.len() as f64;
            assert!((frac - 0.25).abs() <= 0.03, "{frac}");
        }
    }

    #[test]
    fn too_few_parcels() {
        assert!(matches!(
            group_split(&ids(&[3]), 0.25, 0),
            Err(Error::TooFewGroups { .. })
        ));
        assert!(group_split(&ids(&[1, 1]), 0.0, 0).is_err());
    }

    #[test]
    fn kfold_partition() {
        let ids = ids(&[1; 10]);
        let folds = group_kfold(&ids, 5, 3).unwrap();
        for f in 0..5 {
            assert_eq!(folds.iter().filter(|&&k| k == f).count(), 2);
        }
        assert!(group_kfold(&ids, 11, 3).is_err());
        let ids = ids_with_repeats();
        let folds = group_kfold(&ids, 3, 1).unwrap();
        for (i, p) in ids.iter().enumerate() {
            for (j, q) in ids.iter().enumerate() {
                if p == q {
                    assert_eq!(folds[i], folds[j]);
                }
            }
        }
    }

    fn ids_with_repeats() -> Vec<String> {
        ids(&[3, 1, 2, 1, 1, 4, 1])
    }
}
