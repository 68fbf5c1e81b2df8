//! Effective error rate estimation: circuit features, calibration-based
//! success probability, training labels, and an extremely randomized trees
//! regressor that maps features to `p_e`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distributions::OutcomeDistribution;
use crate::error::{invalid, Error, Result};

pub mod corpus;
pub mod trees;

pub use corpus::{generate_corpus, read_corpus, write_corpus, CorpusSpec, LabeledCircuit};
pub use trees::{cross_validate, CvScore, ExtraTreesParams, TreeEnsemble};

/// Column order of [`CircuitFeatures::to_row`]. Model files record it and are
/// rejected when it differs.
pub const FEATURE_NAMES: [&str; 8] = [
    "num_qubits",
    "num_measurements",
    "num_2q_gates",
    "num_sx_gates",
    "num_x_gates",
    "num_rz_gates",
    "entropy",
    "esp",
];

/// Bumped whenever [`FEATURE_NAMES`] changes.
pub const FEATURE_SET_VERSION: u32 = 1;

/// Gate kinds that calibration data must cover when present in a circuit.
pub const GATE_KINDS: [&str; 4] = ["2q", "sx", "x", "rz"];

/// Per-kind gate counts of a transpiled circuit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub two_qubit: u64,
    pub sx: u64,
    pub x: u64,
    pub rz: u64,
}

impl GateCounts {
    fn by_kind(&self) -> [(&'static str, u64); 4] {
        [("2q", self.two_qubit), ("sx", self.sx), ("x", self.x), ("rz", self.rz)]
    }
}

/// The eight regression inputs for one circuit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitFeatures {
    pub num_qubits: u64,
    pub num_measurements: u64,
    pub num_2q_gates: u64,
    pub num_sx_gates: u64,
    pub num_x_gates: u64,
    pub num_rz_gates: u64,
    /// Normalized entropy of the noisy output.
    pub entropy: f64,
    /// Estimated success probability from calibration data.
    pub esp: f64,
}

impl CircuitFeatures {
    pub fn validate(&self) -> Result<()> {
        if self.num_measurements > self.num_qubits {
            return Err(invalid(format!(
                "num_measurements ({}) exceeds num_qubits ({})",
                self.num_measurements, self.num_qubits
            )));
        }
        for (name, v) in [("entropy", self.entropy), ("esp", self.esp)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn gate_counts(&self) -> GateCounts {
        GateCounts {
            two_qubit: self.num_2q_gates,
            sx: self.num_sx_gates,
            x: self.num_x_gates,
            rz: self.num_rz_gates,
        }
    }

    /// Values in [`FEATURE_NAMES`] order.
    pub fn to_row(&self) -> [f64; 8] {
        [
            self.num_qubits as f64,
            self.num_measurements as f64,
            self.num_2q_gates as f64,
            self.num_sx_gates as f64,
            self.num_x_gates as f64,
            self.num_rz_gates as f64,
            self.entropy,
            self.esp,
        ]
    }
}

/// Device error rates at the time a circuit ran.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSnapshot {
    /// Error probability per gate kind. `ecr`, `cz` and `cx` are accepted as
    /// names for the two-qubit kind `2q`.
    pub gate_errors: BTreeMap<String, f64>,
    /// Readout error of qubit `i` at index `i`.
    pub readout_errors: Vec<f64>,
}

impl CalibrationSnapshot {
    pub fn validate(&self) -> Result<()> {
        let rates = self
            .gate_errors
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .chain(self.readout_errors.iter().map(|v| ("readout", *v)));
        for (kind, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{kind} error rate must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Error rate for `kind`, resolving two-qubit aliases.
    pub fn gate_error(&self, kind: &str) -> Option<f64> {
        if let Some(v) = self.gate_errors.get(kind) {
            return Some(*v);
        }
        if kind == "2q" {
            return ["ecr", "cz", "cx"].iter().find_map(|k| self.gate_errors.get(*k).copied());
        }
        None
    }
}

/// `Π_gates (1 − e_gate) · Π_{measured qubits} (1 − e_readout)`.
///
/// Qubits `0..num_measurements` are taken as the measured ones. A kind with a
/// nonzero count and no calibration entry is an error.
pub fn compute_esp(gates: &GateCounts, num_measurements: usize, calib: &CalibrationSnapshot) -> Result<f64> {
    calib.validate()?;
    let mut esp = 1.0f64;
    for (kind, count) in gates.by_kind() {
        if count == 0 {
            continue;
        }
        let e = calib.gate_error(kind).ok_or_else(|| Error::MissingCalibration(kind.to_string()))?;
        esp *= (1.0 - e).powf(count as f64);
    }
    if num_measurements > calib.readout_errors.len() {
        return Err(Error::MissingCalibration(format!("readout of qubit {}", calib.readout_errors.len())));
    }
    for e in &calib.readout_errors[..num_measurements] {
        esp *= 1.0 - e;
    }
    Ok(esp.clamp(0.0, 1.0))
}

/// Training label for one circuit from its ideal and noisy outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeLabel {
    pub value: f64,
    /// The reference string was never observed in the noisy output, so the
    /// label was pinned to 0.5.
    pub reference_missing: bool,
}

/// `p_e = 1 − (Pr_noisy(b) / Pr_ideal(b))^(1/N)` with `b` the mode of `ideal`
/// and `N` the number of measured bits, clamped to `[0, 0.5]`.
pub fn label_pe(ideal: &OutcomeDistribution, noisy: &OutcomeDistribution) -> Result<PeLabel> {
    if ideal.width() != noisy.width() {
        return Err(Error::WidthMismatch { left: ideal.width(), right: noisy.width() });
    }
    let b = ideal.mode().ok_or(Error::EmptyDistribution)?;
    if !(noisy.total() > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    let p_noisy = noisy.probability(&b);
    if p_noisy <= 0.0 {
        return Ok(PeLabel { value: 0.5, reference_missing: true });
    }
    let ratio = p_noisy / ideal.probability(&b);
    let value = 1.0 - ratio.powf(1.0 / ideal.width() as f64);
    Ok(PeLabel { value: value.clamp(0.0, 0.5), reference_missing: false })
}
