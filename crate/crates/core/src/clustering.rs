//! Hamming-distance K-means with qubit-wise majority-vote centroids.
//!
//! Each round assigns every distinct bit-string to its nearest centroid
//! (lowest index wins ties), marks strings farther than the outlier threshold
//! as unassigned, then replaces each centroid by the shot-weighted majority
//! vote of its members. Clusters left without members are dropped.

use std::collections::{BTreeMap, BTreeSet};

use crate::distributions::{BitString, OutcomeDistribution};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_MAX_ROUNDS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterConfig {
    pub k: usize,
    pub flip_rate: f64,
    pub max_rounds: usize,
}

impl ClusterConfig {
    pub fn new(k: usize, flip_rate: f64) -> Self {
        Self { k, flip_rate, max_rounds: DEFAULT_MAX_ROUNDS }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(0.0..=0.5).contains(&self.flip_rate) {
            return Err(invalid(format!("flip rate must be in [0, 0.5], got {}", self.flip_rate)));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds must be at least 1"));
        }
        Ok(())
    }
}

/// Largest Hamming distance a member may have from its centroid:
/// `ceil(2 · N · p · (1 − p))`, twice the bit-flip count variance.
pub fn outlier_threshold(width: usize, flip_rate: f64) -> u32 {
    let twice_var = 2.0 * width as f64 * flip_rate * (1.0 - flip_rate);
    // Absorb rounding noise so that e.g. 7.000000000001 stays 7.
    (twice_var - 1e-9).ceil().max(0.0) as u32
}

/// Result of [`cluster`].
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    centroids: Vec<BitString>,
    weights: Vec<f64>,
    assignments: BTreeMap<BitString, usize>,
    outliers: BTreeSet<BitString>,
    threshold: u32,
    requested_k: usize,
    rounds: usize,
    converged: bool,
}

impl ClusterModel {
    /// A model holding only centroids and their weights, with no member
    /// bookkeeping. Useful for redistributing with externally chosen clusters.
    pub fn from_centroids(centroids: Vec<BitString>, weights: Vec<f64>) -> Result<Self> {
        if centroids.len() != weights.len() {
            return Err(invalid("one weight per centroid is required"));
        }
        if let Some(first) = centroids.first() {
            if let Some(bad) = centroids.iter().find(|c| c.width() != first.width()) {
                return Err(Error::WidthMismatch { left: first.width(), right: bad.width() });
            }
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || weights.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(invalid("cluster weights must lie in [0, 1] and sum to at most 1"));
        }
        let k = centroids.len();
        Ok(Self {
            centroids,
            weights,
            assignments: BTreeMap::new(),
            outliers: BTreeSet::new(),
            threshold: 0,
            requested_k: k,
            rounds: 0,
            converged: true,
        })
    }

    pub fn centroids(&self) -> &[BitString] {
        &self.centroids
    }

    /// `Pr(c_i)`: assigned shots of cluster `i` over all shots.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn assignments(&self) -> &BTreeMap<BitString, usize> {
        &self.assignments
    }

    pub fn cluster_of(&self, b: &BitString) -> Option<usize> {
        self.assignments.get(b).copied()
    }

    pub fn outliers(&self) -> &BTreeSet<BitString> {
        &self.outliers
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    /// Number of clusters that survived.
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn requested_k(&self) -> usize {
        self.requested_k
    }

    pub fn dropped(&self) -> usize {
        self.requested_k - self.centroids.len()
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// False when `max_rounds` was hit before the centroids settled.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn is_centroid(&self, b: &BitString) -> bool {
        self.centroids.contains(b)
    }

    /// Members of cluster `i` with their weights in `dist`.
    pub fn members<'a>(&'a self, dist: &'a OutcomeDistribution, i: usize) -> impl Iterator<Item = (BitString, f64)> + 'a {
        dist.iter().filter(move |(b, _)| self.cluster_of(b) == Some(i)).map(|(b, w)| (*b, w))
    }
}

/// The `k` heaviest bit-strings, ties in ascending lexicographic order.
pub fn select_initial_centroids(dist: &OutcomeDistribution, k: usize) -> Result<Vec<BitString>> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if k > dist.len() {
        return Err(invalid(format!("k = {k} exceeds the {} distinct bit-strings", dist.len())));
    }
    Ok(dist.ranked().into_iter().take(k).map(|(b, _)| b).collect())
}

/// Per-qubit weight of ones over a cluster's members.
#[derive(Clone, Debug)]
struct Tally {
    ones: Vec<f64>,
    total: f64,
}

impl Tally {
    fn new(width: usize) -> Self {
        Self { ones: vec![0.0; width], total: 0.0 }
    }

    fn add(&mut self, b: &BitString, w: f64) {
        self.total += w;
        let width = self.ones.len();
        let mut v = b.raw();
        while v != 0 {
            let pos = v.trailing_zeros() as usize;
            self.ones[width - 1 - pos] += w;
            v &= v - 1;
        }
    }

    fn vote(&self, incumbent: &BitString) -> Option<BitString> {
        if !(self.total > 0.0) {
            return None;
        }
        let mut out = *incumbent;
        for (q, &ones) in self.ones.iter().enumerate() {
            let twice = 2.0 * ones;
            if twice > self.total {
                out.set(q, true);
            } else if twice < self.total {
                out.set(q, false);
            }
        }
        Some(out)
    }
}

/// Shot-weighted majority vote per qubit. A qubit whose ones carry exactly
/// half the weight keeps the bit of `incumbent`.
pub fn qubitwise_majority_vote(members: &OutcomeDistribution, incumbent: &BitString) -> Result<BitString> {
    if incumbent.width() != members.width() {
        return Err(Error::WidthMismatch { left: members.width(), right: incumbent.width() });
    }
    let mut tally = Tally::new(members.width());
    for (b, w) in members.iter() {
        tally.add(b, w);
    }
    tally.vote(incumbent).ok_or(Error::EmptyCluster)
}

/// Nearest centroid for each entry, `None` for outliers.
fn assign(entries: &[(BitString, f64)], centroids: &[BitString], threshold: u32) -> Vec<Option<usize>> {
    entries
        .iter()
        .map(|(b, _)| {
            let mut best = (u32::MAX, 0usize);
            for (i, c) in centroids.iter().enumerate() {
                let d = b.distance_to(c);
                if d < best.0 {
                    best = (d, i);
                    if d == 0 {
                        break;
                    }
                }
            }
            (best.0 <= threshold).then_some(best.1)
        })
        .collect()
}

fn tallies(entries: &[(BitString, f64)], labels: &[Option<usize>], k: usize, width: usize) -> Vec<Tally> {
    let mut t = vec![Tally::new(width); k];
    for ((b, w), label) in entries.iter().zip(labels) {
        if let Some(i) = label {
            t[*i].add(b, *w);
        }
    }
    t
}

/// Runs the assign / filter / vote loop from the top-`k` initialization.
pub fn cluster(dist: &OutcomeDistribution, cfg: &ClusterConfig) -> Result<ClusterModel> {
    cfg.validate()?;
    if !(dist.total() > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    let width = dist.width();
    let threshold = outlier_threshold(width, cfg.flip_rate);
    let entries: Vec<(BitString, f64)> = dist.iter().map(|(b, w)| (*b, w)).collect();
    let mut centroids = select_initial_centroids(dist, cfg.k)?;

    let mut rounds = 0;
    let mut converged = false;
    while rounds < cfg.max_rounds {
        rounds += 1;
        let labels = assign(&entries, &centroids, threshold);
        let next: Vec<BitString> = tallies(&entries, &labels, centroids.len(), width)
            .iter()
            .zip(&centroids)
            .filter_map(|(t, c)| t.vote(c))
            .collect();
        if next == centroids {
            converged = true;
            break;
        }
        centroids = next;
    }

    // Final membership against the final centroids; clusters that end up
    // empty are dropped and the rest renumbered.
    let labels = assign(&entries, &centroids, threshold);
    let sums = tallies(&entries, &labels, centroids.len(), width);
    let mut renumber = vec![None; centroids.len()];
    let mut kept = Vec::new();
    let mut weights = Vec::new();
    for (i, t) in sums.iter().enumerate() {
        if t.total > 0.0 {
            renumber[i] = Some(kept.len());
            kept.push(centroids[i]);
            weights.push(t.total / dist.total());
        }
    }

    let mut assignments = BTreeMap::new();
    let mut outliers = BTreeSet::new();
    for ((b, _), label) in entries.iter().zip(&labels) {
        match label.and_then(|i| renumber[i]) {
            Some(i) => {
                assignments.insert(*b, i);
            }
            None => {
                outliers.insert(*b);
            }
        }
    }

    Ok(ClusterModel {
        centroids: kept,
        weights,
        assignments,
        outliers,
        threshold,
        requested_k: cfg.k,
        rounds,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_sim::{apply_bitflip, NoiseSpec};
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn dist(pairs: &[(&str, f64)]) -> OutcomeDistribution {
        OutcomeDistribution::from_text_weights(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn threshold_matches_hand_values() {
        assert_eq!(outlier_threshold(6, 0.15), 2);
        assert_eq!(outlier_threshold(14, 0.0), 0);
        assert_eq!(outlier_threshold(14, 0.5), 7);
        assert_eq!(outlier_threshold(14, 0.4), 7);
    }

    #[test]
    fn initial_centroids() {
        let d = dist(&[("111000", 0.4), ("011010", 0.3), ("000001", 0.3)]);
        assert_eq!(select_initial_centroids(&d, 1).unwrap(), vec![bs("111000")]);
        assert_eq!(
            select_initial_centroids(&d, 3).unwrap(),
            vec![bs("111000"), bs("000001"), bs("011010")]
        );
        assert!(select_initial_centroids(&d, 4).is_err());
        let tie = dist(&[("11", 0.5), ("00", 0.5)]);
        assert_eq!(select_initial_centroids(&tie, 1).unwrap(), vec![bs("00")]);
    }

    #[test]
    fn majority_vote_examples() {
        let members = dist(&[("110", 3.0), ("100", 1.0)]);
        assert_eq!(qubitwise_majority_vote(&members, &bs("000")).unwrap(), bs("110"));
        assert_eq!(qubitwise_majority_vote(&dist(&[("0111", 2.0)]), &bs("1000")).unwrap(), bs("0111"));
        let tied = dist(&[("10", 2.0), ("01", 2.0)]);
        assert_eq!(qubitwise_majority_vote(&tied, &bs("10")).unwrap(), bs("10"));
        assert_eq!(qubitwise_majority_vote(&tied, &bs("01")).unwrap(), bs("01"));
        assert!(matches!(
            qubitwise_majority_vote(&OutcomeDistribution::empty(2).unwrap(), &bs("00")),
            Err(Error::EmptyCluster)
        ));
    }

    #[test]
    fn noiseless_clusters_are_singletons() {
        let d = dist(&[("0001", 5.0), ("0011", 3.0), ("1111", 2.0), ("1000", 1.0)]);
        let m = cluster(&d, &ClusterConfig::new(4, 0.0)).unwrap();
        assert_eq!(m.threshold(), 0);
        assert_eq!(m.k(), 4);
        for (b, _) in d.iter() {
            let i = m.cluster_of(b).unwrap();
            assert_eq!(m.centroids()[i], *b);
        }
        assert!(m.outliers().is_empty());

        let m1 = cluster(&d, &ClusterConfig::new(1, 0.0)).unwrap();
        assert_eq!(m1.centroids(), &[bs("0001")]);
        assert_eq!(m1.outliers().len(), 3);
        assert!((m1.weights()[0] - 5.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn worked_example_threshold_filters_far_strings() {
        let d = dist(&[
            ("111000", 40.0),
            ("111001", 10.0),
            ("011010", 20.0),
            ("000111", 5.0),
            ("111010", 15.0),
        ]);
        let m = cluster(&d, &ClusterConfig::new(1, 0.15)).unwrap();
        assert_eq!(m.threshold(), 2);
        assert_eq!(m.centroids(), &[bs("111000")]);
        assert!(m.outliers().contains(&bs("000111")));
        assert_eq!(m.cluster_of(&bs("011010")), Some(0));
        for (b, i) in m.assignments() {
            assert!(b.distance_to(&m.centroids()[*i]) <= m.threshold());
        }
        assert!((m.weights()[0] - 85.0 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_unobserved_centroid() {
        // Neighbours of 0000 only; the vote lands on the missing centre.
        let d = dist(&[("1000", 3.0), ("0100", 3.0), ("0010", 3.0), ("0001", 3.0), ("1100", 1.0)]);
        let m = cluster(&d, &ClusterConfig::new(1, 0.2)).unwrap();
        assert_eq!(m.centroids(), &[bs("0000")]);
        assert!(!d.contains(&bs("0000")));
    }

    #[test]
    fn single_cluster_recovers_true_string_under_noise() {
        let c = "10110010011010";
        for seed in 0..5 {
            let noisy = apply_bitflip(&dist(&[(c, 4096.0)]), &NoiseSpec::new(0.1, seed).unwrap()).unwrap();
            let m = cluster(&noisy, &ClusterConfig::new(1, 0.1)).unwrap();
            assert_eq!(m.centroids(), &[bs(c)], "seed {seed}");
        }
    }

    #[test]
    fn duplicate_centroids_collapse() {
        // Both initial centroids vote to 0000; the duplicate loses every tie and is dropped.
        let d = dist(&[("0000", 1.0), ("1000", 4.0), ("0100", 4.0), ("0010", 4.0), ("0001", 4.0)]);
        let m = cluster(&d, &ClusterConfig::new(2, 0.25)).unwrap();
        assert!(m.k() <= 2);
        let unique: BTreeSet<_> = m.centroids().iter().collect();
        assert_eq!(unique.len(), m.k());
    }

    #[test]
    fn rejects_bad_config() {
        let d = dist(&[("01", 1.0)]);
        assert!(cluster(&d, &ClusterConfig::new(0, 0.1)).is_err());
        assert!(cluster(&d, &ClusterConfig::new(1, 0.7)).is_err());
        assert!(cluster(&OutcomeDistribution::empty(2).unwrap(), &ClusterConfig::new(1, 0.1)).is_err());
    }

    fn arb_counts() -> impl Strategy<Value = OutcomeDistribution> {
        (2usize..=10).prop_flat_map(|w| {
            proptest::collection::vec((0u128..(1u128 << w), 1u64..50), 1..60).prop_map(move |v| {
                OutcomeDistribution::from_counts(w, v.into_iter().map(|(b, c)| (BitString::new(b, w).unwrap(), c)))
                    .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn model_invariants(d in arb_counts(), k in 1usize..6, p in 0.0f64..0.5) {
            let k = k.min(d.len());
            let m = cluster(&d, &ClusterConfig::new(k, p)).unwrap();
            prop_assert_eq!(m.clone(), cluster(&d, &ClusterConfig::new(k, p)).unwrap());
            prop_assert!(m.weights().iter().sum::<f64>() <= 1.0 + 1e-12);
            prop_assert_eq!(m.assignments().len() + m.outliers().len(), d.len());
            for (b, i) in m.assignments() {
                prop_assert!(b.distance_to(&m.centroids()[*i]) <= m.threshold());
                // Nearest centroid, lowest index on ties.
                let best = m.centroids().iter().map(|c| b.distance_to(c)).min().unwrap();
                let first = m.centroids().iter().position(|c| b.distance_to(c) == best).unwrap();
                prop_assert_eq!(*i, first);
            }
            if m.converged() {
                for i in 0..m.k() {
                    let members = OutcomeDistribution::from_weights(d.width(), m.members(&d, i)).unwrap();
                    prop_assert_eq!(qubitwise_majority_vote(&members, &m.centroids()[i]).unwrap(), m.centroids()[i]);
                }
            }
        }

        #[test]
        fn noiseless_full_k_is_identity(d in arb_counts()) {
            let m = cluster(&d, &ClusterConfig::new(d.len(), 0.0)).unwrap();
            prop_assert_eq!(m.k(), d.len());
            for (b, _) in d.iter() {
                prop_assert_eq!(m.centroids()[m.cluster_of(b).unwrap()], *b);
            }
        }
    }
}
