//! Synthetic training corpus for the estimator, and its CSV form.
//!
//! Each record is one simulated circuit. Gate counts and calibration rates
//! are drawn from the ranges below, the success probability follows from
//! them, and the true flip rate is the per-bit rate that reproduces that
//! success probability over the measured bits, perturbed by a log-normal
//! factor standing in for noise the features cannot see. The noisy output is
//! then simulated with shot sampling and labelled from its ideal output.

use std::io::{Read, Write};
use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_esp, label_pe, CalibrationSnapshot, CircuitFeatures, GateCounts, FEATURE_NAMES};
use crate::distributions::{normalized_entropy, OutcomeDistribution};
use crate::error::{invalid, Error, Result};
use crate::noise_sim::{apply_qubit_flips, generate_ideal, sample_shots, stream_rng, trial_seed, Stream, SyntheticSpec};

pub const QUBITS: RangeInclusive<u64> = 4..=14;
/// Per-qubit gate count ranges, scaled by the circuit's qubit count.
pub const TWO_QUBIT_PER_QUBIT: RangeInclusive<u64> = 0..=6;
pub const SX_PER_QUBIT: RangeInclusive<u64> = 0..=12;
pub const X_PER_QUBIT: RangeInclusive<u64> = 0..=3;
pub const RZ_PER_QUBIT: RangeInclusive<u64> = 0..=15;
pub const TWO_QUBIT_ERROR: RangeInclusive<f64> = 0.003..=0.03;
pub const ONE_QUBIT_ERROR: RangeInclusive<f64> = 0.0001..=0.0006;
pub const READOUT_ERROR: RangeInclusive<f64> = 0.001..=0.08;
/// Probability of the correct answer in the ideal output.
pub const MODE_WEIGHT: RangeInclusive<f64> = 0.5..=0.95;
/// Standard deviation of the log of the unexplained rate factor.
pub const RATE_JITTER: f64 = 0.05;
/// Upper bound on any qubit's simulated flip rate.
pub const MAX_RATE: f64 = 0.45;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusSpec {
    pub samples: usize,
    pub shots: u64,
    pub seed: u64,
}

/// One corpus row: the features, the label derived from the ideal/noisy
/// pair, and the rate actually used to simulate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCircuit {
    #[serde(flatten)]
    pub features: CircuitFeatures,
    pub p_e: f64,
    pub p_true: f64,
}

fn sample_circuit(seed: u64, shots: u64) -> Result<LabeledCircuit> {
    let mut rng = stream_rng(seed, Stream::Corpus);
    let n = rng.random_range(QUBITS);
    let m = rng.random_range(n.div_ceil(2)..=n);
    let gates = GateCounts {
        two_qubit: n * rng.random_range(TWO_QUBIT_PER_QUBIT),
        sx: n * rng.random_range(SX_PER_QUBIT),
        x: n * rng.random_range(X_PER_QUBIT),
        rz: n * rng.random_range(RZ_PER_QUBIT),
    };
    let one_q = rng.random_range(ONE_QUBIT_ERROR);
    let calib = CalibrationSnapshot {
        gate_errors: [
            ("2q".to_string(), rng.random_range(TWO_QUBIT_ERROR)),
            ("sx".to_string(), one_q),
            ("x".to_string(), one_q),
            ("rz".to_string(), 0.0),
        ]
        .into_iter()
        .collect(),
        readout_errors: (0..n).map(|_| rng.random_range(READOUT_ERROR)).collect(),
    };
    let esp = compute_esp(&gates, m as usize, &calib)?;

    // Split the gate error budget unevenly over the measured qubits, as real
    // devices do, keeping the product of per-qubit success rates equal to
    // the success probability.
    let gate_success = esp / calib.readout_errors[..m as usize].iter().map(|r| 1.0 - r).product::<f64>();
    let shares: Vec<f64> = (0..m).map(|_| Exp1.sample(&mut rng)).collect();
    let share_sum: f64 = shares.iter().sum();
    let jitter = Normal::new(0.0, RATE_JITTER).map_err(|e| invalid(e.to_string()))?;
    let scale = jitter.sample(&mut rng).exp();
    let rates: Vec<f64> = calib.readout_errors[..m as usize]
        .iter()
        .zip(&shares)
        .map(|(r, a)| ((1.0 - (1.0 - r) * gate_success.powf(a / share_sum)) * scale).clamp(0.0, MAX_RATE))
        .collect();
    let p_true = 1.0 - rates.iter().map(|p| 1.0 - p).product::<f64>().powf(1.0 / m as f64);

    // One dominant answer plus a log-uniform number of weaker strings, so the
    // ideal entropy varies widely while the mode stays unambiguous.
    let d = ((1u64 << (m - 1)) as f64).powf(rng.random::<f64>()).floor().max(1.0) as usize;
    let mode_weight = rng.random_range(MODE_WEIGHT);
    let spread = generate_ideal(&SyntheticSpec::new(m as usize, d, rng.random())?)?;
    let mut strings = spread.iter();
    let (mode, _) = strings.next().expect("d >= 1");
    let rest: f64 = 1.0 - spread.probability(mode);
    let ideal = if rest > 0.0 {
        OutcomeDistribution::from_weights(
            m as usize,
            std::iter::once((*mode, mode_weight)).chain(strings.map(|(b, w)| (*b, (1.0 - mode_weight) * w / spread.total() / rest))),
        )?
    } else {
        spread.clone()
    };
    let shots_dist = sample_shots(&ideal, shots, rng.random())?;
    let noisy = apply_qubit_flips(&shots_dist, &rates, rng.random())?;

    let features = CircuitFeatures {
        num_qubits: n,
        num_measurements: m,
        num_2q_gates: gates.two_qubit,
        num_sx_gates: gates.sx,
        num_x_gates: gates.x,
        num_rz_gates: gates.rz,
        entropy: normalized_entropy(&noisy)?,
        esp,
    };
    Ok(LabeledCircuit { features, p_e: label_pe(&ideal, &noisy)?.value, p_true })
}

/// Simulates `spec.samples` circuits. Record `i` depends only on
/// `(spec.seed, i, spec.shots)`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<LabeledCircuit>> {
    if spec.samples == 0 || spec.shots == 0 {
        return Err(invalid("corpus needs at least one sample and one shot"));
    }
    (0..spec.samples as u64)
        .into_par_iter()
        .map(|i| sample_circuit(trial_seed(spec.seed, i), spec.shots))
        .collect()
}

/// Feature rows and labels for the regressor.
pub fn design_matrix(corpus: &[LabeledCircuit]) -> (Vec<Vec<f64>>, Vec<f64>) {
    corpus.iter().map(|c| (c.features.to_row().to_vec(), c.p_e)).unzip()
}

/// CSV with header `num_qubits,...,esp,p_e,p_true`.
pub fn write_corpus<W: Write>(out: W, corpus: &[LabeledCircuit]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURE_NAMES.iter().chain(&["p_e", "p_true"]))?;
    for c in corpus {
        let row = c.features.to_row();
        let mut rec: Vec<String> = row[..6].iter().map(|v| format!("{}", *v as u64)).collect();
        rec.extend([row[6], row[7], c.p_e, c.p_true].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a corpus CSV. The `p_true` column is optional; when absent it is
/// set equal to `p_e`.
pub fn read_corpus<R: Read>(input: R, source: &str) -> Result<Vec<LabeledCircuit>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let expected: Vec<&str> = FEATURE_NAMES.iter().copied().chain(["p_e"]).collect();
    for name in &expected {
        if !headers.iter().any(|h| h == *name) {
            return Err(Error::Data { path: source.to_string(), message: format!("missing column `{name}`") });
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Data { path: source.to_string(), message: format!("row {}: {what}", line + 2) };
        let get = |name: &str| -> Result<f64> {
            let i = col(name).expect("checked above");
            rec.get(i)
                .ok_or_else(|| bad(&format!("missing `{name}`")))?
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(&format!("`{name}` is not a number")))
        };
        let count = |name: &str| -> Result<u64> {
            let v = get(name)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(bad(&format!("`{name}` must be a nonnegative integer")));
            }
            Ok(v as u64)
        };
        let features = CircuitFeatures {
            num_qubits: count("num_qubits")?,
            num_measurements: count("num_measurements")?,
            num_2q_gates: count("num_2q_gates")?,
            num_sx_gates: count("num_sx_gates")?,
            num_x_gates: count("num_x_gates")?,
            num_rz_gates: count("num_rz_gates")?,
            entropy: get("entropy")?,
            esp: get("esp")?,
        };
        features.validate().map_err(|e| bad(&e.to_string()))?;
        let p_e = get("p_e")?;
        if !(0.0..=0.5).contains(&p_e) {
            return Err(bad("`p_e` must be in [0, 0.5]"));
        }
        let p_true = if col("p_true").is_some() { get("p_true")? } else { p_e };
        out.push(LabeledCircuit { features, p_e, p_true });
    }
    if out.is_empty() {
        return Err(Error::Data { path: source.to_string(), message: "no rows".into() });
    }
    Ok(out)
}
