//! Bit-strings, outcome distributions and the metrics defined over them.
//!
//! Textual bit-strings are read left to right: character `i` is qubit `i`.
//! Internally qubit 0 sits in the most significant used bit, so the derived
//! ordering of two equal-width strings is the lexicographic ordering of their
//! text.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Widest bit-string representable.
pub const MAX_WIDTH: usize = 128;

/// Regularization constant used by [`improvement`].
pub const DEFAULT_EPSILON: f64 = 0.01;

/// The classical outcome of one shot over `width` qubits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    width: u8,
    bits: u128,
}

impl BitString {
    /// Builds a bit-string from its packed representation, where qubit 0 is
    /// bit `width - 1` of `bits`.
    pub fn new(bits: u128, width: usize) -> Result<Self> {
        if width == 0 || width > MAX_WIDTH {
            return Err(invalid(format!("width must be in 1..={MAX_WIDTH}, got {width}")));
        }
        if width < MAX_WIDTH && bits >> width != 0 {
            return Err(invalid(format!("value {bits:#x} does not fit in {width} bits")));
        }
        Ok(Self { width: width as u8, bits })
    }

    pub fn zeros(width: usize) -> Result<Self> {
        Self::new(0, width)
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let mut out = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            out.set(i, b);
        }
        Ok(out)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    /// Packed value; see [`BitString::new`] for the layout.
    #[inline]
    pub fn raw(&self) -> u128 {
        self.bits
    }

    #[inline]
    fn mask_for(&self, qubit: usize) -> u128 {
        debug_assert!(qubit < self.width());
        1u128 << (self.width() - 1 - qubit)
    }

    /// Value of qubit `qubit`.
    #[inline]
    pub fn bit(&self, qubit: usize) -> bool {
        self.bits & self.mask_for(qubit) != 0
    }

    #[inline]
    pub fn set(&mut self, qubit: usize, value: bool) {
        let m = self.mask_for(qubit);
        if value {
            self.bits |= m;
        } else {
            self.bits &= !m;
        }
    }

    /// XORs the packed value with `mask`. Bits above the width are ignored.
    #[inline]
    pub fn flipped(&self, mask: u128) -> Self {
        Self { width: self.width, bits: (self.bits ^ mask) & width_mask(self.width()) }
    }

    /// Number of ones.
    #[inline]
    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Hamming distance without the width check.
    #[inline]
    pub(crate) fn distance_to(&self, other: &Self) -> u32 {
        debug_assert_eq!(self.width, other.width);
        (self.bits ^ other.bits).count_ones()
    }
}

#[inline]
pub(crate) fn width_mask(width: usize) -> u128 {
    if width >= MAX_WIDTH {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::with_capacity(self.width());
        for i in 0..self.width() {
            s.push(if self.bit(i) { '1' } else { '0' });
        }
        f.pad(&s)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidBitString { text: text.to_string(), reason: reason.into() };
        if text.is_empty() {
            return Err(bad("empty"));
        }
        if text.len() > MAX_WIDTH {
            return Err(bad("longer than 128 qubits"));
        }
        let mut bits = 0u128;
        for c in text.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(bad("only '0' and '1' are allowed")),
                };
        }
        Self::new(bits, text.len())
    }
}

impl serde::Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of positions where `a` and `b` differ.
pub fn hamming_distance(a: &BitString, b: &BitString) -> Result<u32> {
    if a.width != b.width {
        return Err(Error::WidthMismatch { left: a.width(), right: b.width() });
    }
    Ok(a.distance_to(b))
}

/// Sparse map from bit-strings to nonnegative weights.
///
/// Weights are either shot counts (as ingested) or probabilities (as produced
/// by mitigation). Zero-weight entries are never stored, so the support is
/// exactly the set of keys.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    width: usize,
    entries: BTreeMap<BitString, f64>,
    total: f64,
}

impl OutcomeDistribution {
    pub fn empty(width: usize) -> Result<Self> {
        BitString::zeros(width)?;
        Ok(Self { width, entries: BTreeMap::new(), total: 0.0 })
    }

    /// Builds a distribution from weights; repeated keys accumulate.
    pub fn from_weights<I>(width: usize, weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BitString, f64)>,
    {
        let mut dist = Self::empty(width)?;
        for (b, w) in weights {
            dist.add(b, w)?;
        }
        Ok(dist)
    }

    pub fn from_counts<I>(width: usize, counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BitString, u64)>,
    {
        Self::from_weights(width, counts.into_iter().map(|(b, c)| (b, c as f64)))
    }

    /// Parses `(text, weight)` pairs; the width is taken from the first key.
    pub fn from_text_weights<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let parsed = pairs
            .into_iter()
            .map(|(s, w)| Ok((s.parse::<BitString>()?, w)))
            .collect::<Result<Vec<_>>>()?;
        let width = parsed.first().map(|(b, _)| b.width()).ok_or(Error::EmptyDistribution)?;
        Self::from_weights(width, parsed)
    }

    /// Adds `weight` to `b`.
    pub fn add(&mut self, b: BitString, weight: f64) -> Result<()> {
        if b.width() != self.width {
            return Err(Error::WidthMismatch { left: self.width, right: b.width() });
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(invalid(format!("weight for {b} must be finite and nonnegative, got {weight}")));
        }
        if weight > 0.0 {
            *self.entries.entry(b).or_insert(0.0) += weight;
            self.total += weight;
        }
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Number of distinct bit-strings with positive weight.
    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending bit-string order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&BitString, f64)> + '_ {
        self.entries.iter().map(|(b, &w)| (b, w))
    }

    pub fn support(&self) -> impl ExactSizeIterator<Item = &BitString> + '_ {
        self.entries.keys()
    }

    pub fn contains(&self, b: &BitString) -> bool {
        self.entries.contains_key(b)
    }

    /// Raw stored weight, 0 when absent.
    pub fn weight(&self, b: &BitString) -> f64 {
        self.entries.get(b).copied().unwrap_or(0.0)
    }

    /// Weight divided by the total, 0 when absent or when the total is 0.
    pub fn probability(&self, b: &BitString) -> f64 {
        if self.total > 0.0 {
            self.weight(b) / self.total
        } else {
            0.0
        }
    }

    /// The same support with weights divided by the total.
    pub fn to_probabilities(&self) -> Result<Self> {
        if !(self.total > 0.0) {
            return Err(Error::EmptyDistribution);
        }
        let entries: BTreeMap<_, _> = self.entries.iter().map(|(b, w)| (*b, w / self.total)).collect();
        let total = entries.values().sum();
        Ok(Self { width: self.width, entries, total })
    }

    /// True when every weight is a whole number, i.e. the distribution holds shot counts.
    pub fn is_integral(&self) -> bool {
        self.entries.values().all(|w| w.fract() == 0.0 && *w <= (1u64 << 53) as f64)
    }

    /// Counts as integers, or `None` when some weight is fractional.
    pub fn counts(&self) -> Option<Vec<(BitString, u64)>> {
        self.is_integral().then(|| self.entries.iter().map(|(b, w)| (*b, *w as u64)).collect())
    }

    /// Entries sorted by descending weight; equal weights in ascending bit-string order.
    pub fn ranked(&self) -> Vec<(BitString, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(b, w)| (*b, *w)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// Highest-weight bit-string (lowest in order among ties).
    pub fn mode(&self) -> Option<BitString> {
        self.entries
            .iter()
            .fold(None::<(BitString, f64)>, |best, (b, &w)| match best {
                Some((_, bw)) if bw >= w => best,
                _ => Some((*b, w)),
            })
            .map(|(b, _)| b)
    }
}

/// Shannon entropy of the probability view divided by the width in bits.
pub fn normalized_entropy(dist: &OutcomeDistribution) -> Result<f64> {
    if !(dist.total() > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    let total = dist.total();
    let h: f64 = dist
        .iter()
        .map(|(_, w)| {
            let p = w / total;
            if p > 0.0 {
                -p * p.log2()
            } else {
                0.0
            }
        })
        .sum();
    Ok((h / dist.width() as f64).clamp(0.0, 1.0))
}

/// Hellinger fidelity `(Σ sqrt(p_i q_i))²` over the union of supports.
pub fn hellinger_fidelity(p: &OutcomeDistribution, q: &OutcomeDistribution) -> Result<f64> {
    if p.width() != q.width() {
        return Err(Error::WidthMismatch { left: p.width(), right: q.width() });
    }
    if !(p.total() > 0.0 && q.total() > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    // Only the intersection contributes; walk the smaller map.
    let (small, large) = if p.len() <= q.len() { (p, q) } else { (q, p) };
    let bc: f64 = small
        .iter()
        .map(|(b, w)| (w / small.total() * large.probability(b)).sqrt())
        .sum();
    Ok((bc * bc).clamp(0.0, 1.0))
}

/// `(hf_mitigated + ε) / (hf_noisy + ε)`; above 1 when mitigation helped.
pub fn improvement(hf_mitigated: f64, hf_noisy: f64, epsilon: f64) -> f64 {
    debug_assert!(epsilon > 0.0);
    (hf_mitigated + epsilon) / (hf_noisy + epsilon)
}

/// Geometric mean of positive values, used to aggregate improvements across benchmarks.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}
