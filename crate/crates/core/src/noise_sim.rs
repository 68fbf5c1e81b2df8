//! Synthetic ideal distributions and an i.i.d. symmetric bit-flip channel.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64(seed)` and separated into independent streams per stage, so
//! results are identical on every platform for a given seed.

use std::collections::{HashMap, HashSet};

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use crate::distributions::{width_mask, BitString, OutcomeDistribution};
use crate::error::{invalid, Error, Result};

/// Shots per synthetic experiment when none is given.
pub const DEFAULT_SHOTS: u64 = 8192;

/// ChaCha stream used by each simulation stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Ideal = 0,
    Shots = 1,
    Noise = 2,
    Corpus = 3,
}

/// Deterministic generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of trial `trial` in a run started from `base`.
///
/// The pair goes through the SplitMix64 finalizer so that nearby base seeds
/// give unrelated trial sets.
#[inline]
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    let mut z = base.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parameters for a random low-entropy ideal distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub width: usize,
    pub num_dominant: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(width: usize, num_dominant: usize, seed: u64) -> Result<Self> {
        let spec = Self { width, num_dominant, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        BitString::zeros(self.width)?;
        if self.num_dominant == 0 {
            return Err(invalid("number of dominant states must be at least 1"));
        }
        if self.width < usize::BITS as usize && self.num_dominant > (1usize << self.width) {
            return Err(invalid(format!(
                "cannot choose {} distinct {}-bit strings (at most {})",
                self.num_dominant,
                self.width,
                1usize << self.width
            )));
        }
        Ok(())
    }
}

/// Symmetric bit-flip channel with per-bit flip probability `flip_rate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub flip_rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(flip_rate: f64, seed: u64) -> Result<Self> {
        let spec = Self { flip_rate, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.flip_rate) {
            return Err(invalid(format!("flip rate must be in [0, 0.5], got {}", self.flip_rate)));
        }
        Ok(())
    }
}

/// Flip rate of two bit-flip channels applied in sequence.
pub fn compose_flip_rates(p1: f64, p2: f64) -> f64 {
    p1 * (1.0 - p2) + p2 * (1.0 - p1)
}

/// Draws `num_dominant` distinct uniform bit-strings and gives them normalized
/// i.i.d. uniform weights.
pub fn generate_ideal(spec: &SyntheticSpec) -> Result<OutcomeDistribution> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Ideal);
    let width = spec.width;
    let d = spec.num_dominant;

    let strings: Vec<u128> = if width <= 24 && d.saturating_mul(4) >= 1usize << width {
        rand::seq::index::sample(&mut rng, 1usize << width, d)
            .into_iter()
            .map(|i| i as u128)
            .collect()
    } else {
        let mask = width_mask(width);
        let mut seen = HashSet::with_capacity(d);
        let mut out = Vec::with_capacity(d);
        while out.len() < d {
            let v = rng.random::<u128>() & mask;
            if seen.insert(v) {
                out.push(v);
            }
        }
        out
    };

    // 1 - U lies in (0, 1], so no dominant state gets zero weight.
    let raw: Vec<f64> = (0..d).map(|_| 1.0 - rng.random::<f64>()).collect();
    let sum: f64 = raw.iter().sum();
    let entries = strings
        .into_iter()
        .zip(raw)
        .map(|(v, w)| Ok((BitString::new(v, width)?, w / sum)))
        .collect::<Result<Vec<_>>>()?;
    OutcomeDistribution::from_weights(width, entries)
}

/// Multinomial sample of `shots` outcomes from the probability view of `dist`.
pub fn sample_shots(dist: &OutcomeDistribution, shots: u64, seed: u64) -> Result<OutcomeDistribution> {
    if shots == 0 {
        return Err(invalid("shot count must be positive"));
    }
    if !(dist.total() > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    let mut rng = stream_rng(seed, Stream::Shots);
    let mut remaining_shots = shots;
    let mut remaining_mass = dist.total();
    let mut out = OutcomeDistribution::empty(dist.width())?;
    let n = dist.len();
    for (i, (b, w)) in dist.iter().enumerate() {
        if remaining_shots == 0 {
            break;
        }
        let count = if i + 1 == n {
            remaining_shots
        } else {
            let q = (w / remaining_mass).clamp(0.0, 1.0);
            Binomial::new(remaining_shots, q)
                .map_err(|e| invalid(format!("binomial draw: {e}")))?
                .sample(&mut rng)
        };
        out.add(*b, count as f64)?;
        remaining_shots -= count;
        remaining_mass -= w;
    }
    Ok(out)
}

/// Passes every shot of a count distribution through the bit-flip channel.
pub fn apply_bitflip(shots_dist: &OutcomeDistribution, noise: &NoiseSpec) -> Result<OutcomeDistribution> {
    noise.validate()?;
    let counts = shots_dist
        .counts()
        .ok_or_else(|| invalid("bit-flip sampling needs integer shot counts"))?;
    if noise.flip_rate == 0.0 {
        return Ok(shots_dist.clone());
    }
    let width = shots_dist.width();
    let mask = width_mask(width);
    let mut rng = stream_rng(noise.seed, Stream::Noise);
    let flip = Bernoulli::new(noise.flip_rate).map_err(|e| invalid(e.to_string()))?;
    let uniform = noise.flip_rate == 0.5;

    let mut acc: HashMap<BitString, u64> = HashMap::new();
    for (b, c) in counts {
        for _ in 0..c {
            let m = if uniform {
                rng.random::<u128>() & mask
            } else {
                (0..width).fold(0u128, |m, i| if flip.sample(&mut rng) { m | (1u128 << i) } else { m })
            };
            *acc.entry(b.flipped(m)).or_insert(0) += 1;
        }
    }
    OutcomeDistribution::from_counts(width, acc)
}

/// Like [`apply_bitflip`] but qubit `q` flips with its own rate `rates[q]`.
pub fn apply_qubit_flips(shots_dist: &OutcomeDistribution, rates: &[f64], seed: u64) -> Result<OutcomeDistribution> {
    let width = shots_dist.width();
    if rates.len() != width {
        return Err(invalid(format!("{} flip rates for {width} qubits", rates.len())));
    }
    let flips = rates
        .iter()
        .map(|&r| {
            NoiseSpec::new(r, seed)?;
            Bernoulli::new(r).map_err(|e| invalid(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = shots_dist
        .counts()
        .ok_or_else(|| invalid("bit-flip sampling needs integer shot counts"))?;
    let mut rng = stream_rng(seed, Stream::Noise);
    let mut acc: HashMap<BitString, u64> = HashMap::new();
    for (b, c) in counts {
        for _ in 0..c {
            let m = flips
                .iter()
                .enumerate()
                .fold(0u128, |m, (q, f)| if f.sample(&mut rng) { m | (1u128 << (width - 1 - q)) } else { m });
            *acc.entry(b.flipped(m)).or_insert(0) += 1;
        }
    }
    OutcomeDistribution::from_counts(width, acc)
}

/// Exact output of the bit-flip channel on the probability view of `dist`,
/// enumerating all `2^width` outcomes. Intended for small widths.
pub fn analytic_bitflip(dist: &OutcomeDistribution, flip_rate: f64) -> Result<OutcomeDistribution> {
    NoiseSpec::new(flip_rate, 0)?;
    let width = dist.width();
    if width > 20 {
        return Err(invalid("analytic channel limited to 20 qubits"));
    }
    let probs = dist.to_probabilities()?;
    let per_distance: Vec<f64> = (0..=width)
        .map(|k| flip_rate.powi(k as i32) * (1.0 - flip_rate).powi((width - k) as i32))
        .collect();
    let mut out = OutcomeDistribution::empty(width)?;
    for v in 0..(1u128 << width) {
        let target = BitString::new(v, width)?;
        let mass: f64 = probs
            .iter()
            .map(|(src, p)| p * per_distance[src.distance_to(&target) as usize])
            .sum();
        out.add(target, mass)?;
    }
    Ok(out)
}
