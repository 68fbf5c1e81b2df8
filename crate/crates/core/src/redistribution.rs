//! Noise-aware reshaping of a noisy distribution given its clusters.
//!
//! Every non-centroid string `b` loses the mass it would have received from
//! each centroid through bit-flips,
//!
//! ```text
//! Pr(b)_out = Pr(b)_in − Σ_i (1 − p)^(N − HD(b, c_i)) · p^HD(b, c_i) · Pr(c_i)
//! ```
//!
//! summed over all clusters whether or not `b` belongs to them. A centroid
//! skips its own cluster's term (that mass is the centroid itself) but still
//! loses what the other centroids leak into it. Strings whose adjusted mass is
//! not positive are removed and the survivors renormalized.

use std::collections::{BTreeMap, BTreeSet};

use crate::clustering::ClusterModel;
use crate::distributions::{BitString, OutcomeDistribution};
use crate::error::{invalid, Error, Result};

/// Probability that `centroid` is the truth and `b` is what got measured.
pub fn joint_probability(b: &BitString, centroid: &BitString, cluster_weight: f64, flip_rate: f64) -> Result<f64> {
    let hd = crate::distributions::hamming_distance(b, centroid)?;
    if !(0.0..=0.5).contains(&flip_rate) {
        return Err(invalid(format!("flip rate must be in [0, 0.5], got {flip_rate}")));
    }
    if !(0.0..=1.0).contains(&cluster_weight) {
        return Err(invalid(format!("cluster weight must be in [0, 1], got {cluster_weight}")));
    }
    Ok(flip_likelihood(b.width(), flip_rate)[hd as usize] * cluster_weight)
}

/// `(1 − p)^(N − k) · p^k` for `k = 0..=N`.
fn flip_likelihood(width: usize, p: f64) -> Vec<f64> {
    (0..=width)
        .map(|k| (1.0 - p).powi((width - k) as i32) * p.powi(k as i32))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RedistributionResult {
    /// Renormalized output.
    pub mitigated: OutcomeDistribution,
    /// Strings whose adjusted mass fell to zero or below.
    pub removed: BTreeSet<BitString>,
    /// `Σ_i Pr(b ∩ c_i)` for every string in the input support, leaving out
    /// the string's own cluster when it is a centroid.
    pub subtractions: BTreeMap<BitString, f64>,
    /// Mass of every input string (and every centroid) before renormalization;
    /// negative for removed strings.
    pub adjusted: BTreeMap<BitString, f64>,
}

/// Applies the subtraction rule to the probability view of `noisy`.
///
/// A centroid that was never observed (the majority vote can land on one)
/// starts from its own-cluster term `(1 − p)^N · Pr(c_i)` instead of zero.
/// Returns [`Error::DegenerateMitigation`] when nothing survives.
pub fn redistribute(noisy: &OutcomeDistribution, model: &ClusterModel, flip_rate: f64) -> Result<RedistributionResult> {
    if !(0.0..=0.5).contains(&flip_rate) {
        return Err(invalid(format!("flip rate must be in [0, 0.5], got {flip_rate}")));
    }
    let width = noisy.width();
    if let Some(c) = model.centroids().iter().find(|c| c.width() != width) {
        return Err(Error::WidthMismatch { left: width, right: c.width() });
    }
    if !(noisy.total() > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    let likelihood = flip_likelihood(width, flip_rate);
    let clusters: Vec<(BitString, f64)> = model
        .centroids()
        .iter()
        .copied()
        .zip(model.weights().iter().copied())
        .collect();
    let own: BTreeMap<BitString, usize> = clusters.iter().enumerate().map(|(i, (c, _))| (*c, i)).collect();
    let leak = |b: &BitString| -> f64 {
        let skip = own.get(b).copied();
        clusters
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, (c, cw))| likelihood[b.distance_to(c) as usize] * cw)
            .sum()
    };
    let total = noisy.total();

    let mut adjusted = BTreeMap::new();
    let mut subtractions = BTreeMap::new();

    for (b, w) in noisy.iter() {
        let sub = leak(b);
        subtractions.insert(*b, sub);
        adjusted.insert(*b, w / total - sub);
    }
    for (c, cw) in &clusters {
        if !noisy.contains(c) {
            adjusted.insert(*c, likelihood[0] * cw - leak(c));
        }
    }
    let removed: BTreeSet<BitString> = adjusted.iter().filter(|(_, m)| **m <= 0.0).map(|(b, _)| *b).collect();

    let survivors: Vec<(BitString, f64)> = adjusted
        .iter()
        .filter(|(_, m)| **m > 0.0)
        .map(|(b, m)| (*b, *m))
        .collect();
    let kept: f64 = survivors.iter().map(|(_, m)| m).sum();
    if survivors.is_empty() || !(kept > 0.0) {
        return Err(Error::DegenerateMitigation);
    }
    let mitigated = OutcomeDistribution::from_weights(width, survivors.into_iter().map(|(b, m)| (b, m / kept)))?;

    Ok(RedistributionResult { mitigated, removed, subtractions, adjusted })
}
