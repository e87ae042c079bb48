use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LeakageError, Result, NOISE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Val, Subset::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    /// Subset of each input point, in input order.
    pub assignment: Vec<Subset>,
    /// Images per subset (train, val, test).
    pub counts: [usize; 3],
    /// Achieved image fractions (train, val, test).
    pub proportions: [f64; 3],
}

/// Cluster labels plus the derived subset of every image, keyed by image id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub labels: BTreeMap<String, i32>,
    pub dbcv: Option<f64>,
    pub split: BTreeMap<String, Subset>,
    pub proportions: [f64; 3],
}

impl ClusterPartition {
    pub fn new(ids: &[String], labels: &[i32], dbcv: Option<f64>, split: &SplitResult) -> Self {
        Self {
            labels: ids.iter().cloned().zip(labels.iter().copied()).collect(),
            dbcv,
            split: ids.iter().cloned().zip(split.assignment.iter().copied()).collect(),
            proportions: split.proportions,
        }
    }

    pub fn members(&self, subset: Subset) -> Vec<&str> {
        self.split.iter().filter(|(_, s)| **s == subset).map(|(id, _)| id.as_str()).collect()
    }
}

/// Assigns whole clusters to train/val/test.
///
/// Noise points become singleton clusters. Clusters are shuffled with `seed`,
/// stably ordered largest first, and then each goes to the subset whose image
/// count is furthest below its target (`ratio * total`), earlier subsets
/// winning ties. The seed decides placement among equally sized clusters.
pub fn cluster_split(labels: &[i32], ratios: [f64; 3], seed: u64) -> Result<SplitResult> {
    if labels.is_empty() {
        return Err(LeakageError::EmptyInput("no labels to split".into()));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(LeakageError::InvalidParameter(format!("ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut clusters: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == NOISE {
            groups.push(vec![i]);
        } else {
            clusters.entry(l).or_default().push(i);
        }
    }
    let mut groups: Vec<Vec<usize>> = clusters.into_values().chain(groups).collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let total = labels.len() as f64;
    let mut counts = [0usize; 3];
    let mut assignment = vec![Subset::Train; labels.len()];
    for group in &groups {
        let deficit = |k: usize| ratios[k] * total - counts[k] as f64;
        let target = (1..3).fold(0, |best, k| if deficit(k) > deficit(best) { k } else { best });
        counts[target] += group.len();
        for &i in group {
            assignment[i] = Subset::ALL[target];
        }
    }
    let proportions = counts.map(|c| c as f64 / total);
    Ok(SplitResult { assignment, counts, proportions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_goes_to_train() {
        let s = cluster_split(&[4; 25], [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!(s.counts, [25, 0, 0]);
    }

    #[test]
    fn ten_equal_clusters() {
        let labels: Vec<i32> = (0..100).map(|i| i / 10).collect();
        for seed in 0..20 {
            let s = cluster_split(&labels, [0.8, 0.1, 0.1], seed).unwrap();
            assert_eq!(s.counts, [80, 10, 10]);
        }
    }

    #[test]
    fn noise_points_are_singletons_and_clusters_stay_whole() {
        let mut labels: Vec<i32> = (0..60).map(|i| i / 6).collect();
        labels.extend([NOISE; 15]);
        let s = cluster_split(&labels, [0.8, 0.1, 0.1], 42).unwrap();
        let mut seen: BTreeMap<i32, Subset> = BTreeMap::new();
        for (l, sub) in labels.iter().zip(&s.assignment) {
            if *l != NOISE {
                assert_eq!(*seen.entry(*l).or_insert(*sub), *sub);
            }
        }
        assert_eq!(s.counts.iter().sum::<usize>(), 75);
        assert_eq!(cluster_split(&labels, [0.8, 0.1, 0.1], 42).unwrap(), s);
    }

    #[test]
    fn bad_inputs() {
        assert!(cluster_split(&[], [0.8, 0.1, 0.1], 0).is_err());
        assert!(cluster_split(&[0], [0.8, 0.3, 0.1], 0).is_err());
        assert!(cluster_split(&[0], [1.2, -0.1, -0.1], 0).is_err());
    }
}
