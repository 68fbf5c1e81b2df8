//! On-disk formats used by the command-line tool.
//!
//! Counts file (JSON):
//!
//! ```json
//! {"width": 6, "counts": {"111000": 3500, "011010": 1700}, "metadata": {"backend": "sim", "shots": 8192}}
//! ```
//!
//! `probabilities` may replace `counts` (mitigated outputs are written that
//! way), and a bare `{"bits": number}` map is accepted on input. Spaces inside
//! keys, as in multi-register dumps, are ignored.
//!
//! Calibration file (JSON): `{"gate_errors": {"ecr": 0.008, "sx": 0.0003}, "readout_errors": [0.01, 0.02]}`.
//!
//! Features file (JSON): the eight estimator inputs by name. `entropy` and
//! `esp` may be omitted when counts or calibration data are supplied instead.
//!
//! Sweep CSV: see [`SWEEP_HEADER`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::distributions::{normalized_entropy, BitString, OutcomeDistribution};
use crate::engine::{SweepTable, TrialMetrics};
use crate::error::{Error, Result};
use crate::estimator::{compute_esp, CalibrationSnapshot, CircuitFeatures};

fn data_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Data { path: path.display().to_string(), message: message.into() }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| data_err(path, e.to_string()))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| data_err(path, e.to_string()))
}

/// Writes `text` to `path`, or to `stdout` when `path` is `-`.
pub fn write_text(path: &Path, text: &str, stdout: &mut dyn Write) -> Result<()> {
    if path.as_os_str() == "-" {
        stdout.write_all(text.as_bytes())?;
    } else {
        fs::write(path, text).map_err(|e| data_err(path, e.to_string()))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    Counts,
    Probabilities,
}

/// Optional provenance carried alongside counts. Unknown keys are kept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CountsMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl CountsMetadata {
    fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountsFile {
    pub distribution: OutcomeDistribution,
    pub kind: WeightKind,
    pub metadata: CountsMetadata,
}

impl CountsFile {
    pub fn counts(distribution: OutcomeDistribution) -> Self {
        Self { distribution, kind: WeightKind::Counts, metadata: CountsMetadata::default() }
    }

    pub fn probabilities(distribution: OutcomeDistribution) -> Self {
        Self { distribution, kind: WeightKind::Probabilities, metadata: CountsMetadata::default() }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let root: Map<String, Value> = parse_json(path, text)?;
        let structured = root.contains_key("counts") || root.contains_key("probabilities");
        let (entries, kind, width, metadata) = if structured {
            for key in root.keys() {
                if !["width", "counts", "probabilities", "metadata"].contains(&key.as_str()) {
                    return Err(data_err(path, format!("unknown field `{key}`")));
                }
            }
            let (field, kind) = match (root.get("counts"), root.get("probabilities")) {
                (Some(_), Some(_)) => return Err(data_err(path, "give either `counts` or `probabilities`, not both")),
                (Some(v), None) => (v, WeightKind::Counts),
                (None, Some(v)) => (v, WeightKind::Probabilities),
                (None, None) => unreachable!(),
            };
            let entries = field.as_object().ok_or_else(|| data_err(path, "`counts`/`probabilities` must be an object"))?;
            let width = match root.get("width") {
                None => None,
                Some(w) => Some(
                    w.as_u64()
                        .filter(|w| *w >= 1)
                        .ok_or_else(|| data_err(path, "`width` must be a positive integer"))? as usize,
                ),
            };
            let metadata = match root.get("metadata") {
                None | Some(Value::Null) => CountsMetadata::default(),
                Some(m) => serde_json::from_value(m.clone()).map_err(|e| data_err(path, format!("metadata: {e}")))?,
            };
            (entries.clone(), kind, width, metadata)
        } else {
            (root, WeightKind::Counts, None, CountsMetadata::default())
        };

        let mut parsed = Vec::with_capacity(entries.len());
        for (key, value) in &entries {
            let bits: String = key.chars().filter(|c| !c.is_whitespace()).collect();
            let b: BitString = bits.parse().map_err(|e: Error| data_err(path, format!("key `{key}`: {e}")))?;
            let w = value.as_f64().ok_or_else(|| data_err(path, format!("key `{key}`: value must be a number")))?;
            if !w.is_finite() || w < 0.0 {
                return Err(data_err(path, format!("key `{key}`: value must be nonnegative, got {w}")));
            }
            if kind == WeightKind::Counts && w.fract() != 0.0 {
                return Err(data_err(path, format!("key `{key}`: count must be an integer, got {w}")));
            }
            parsed.push((key, b, w));
        }
        let width = match (width, parsed.first()) {
            (Some(w), _) => w,
            (None, Some((_, b, _))) => b.width(),
            (None, None) => return Err(data_err(path, "no outcomes")),
        };
        let mut dist = OutcomeDistribution::empty(width).map_err(|e| data_err(path, e.to_string()))?;
        for (key, b, w) in parsed {
            if b.width() != width {
                return Err(data_err(path, format!("key `{key}` has {} bits, expected {width}", b.width())));
            }
            dist.add(b, w).map_err(|e| data_err(path, format!("key `{key}`: {e}")))?;
        }
        if dist.is_empty() {
            return Err(data_err(path, "at least one outcome must have a positive value"));
        }
        Ok(Self { distribution: dist, kind, metadata })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut entries = Map::new();
        for (b, w) in self.distribution.iter() {
            let v = match self.kind {
                WeightKind::Counts => Value::from(w as u64),
                WeightKind::Probabilities => Value::from(w),
            };
            entries.insert(b.to_string(), v);
        }
        let mut root = Map::new();
        root.insert("width".into(), Value::from(self.distribution.width()));
        let field = match self.kind {
            WeightKind::Counts => "counts",
            WeightKind::Probabilities => "probabilities",
        };
        root.insert(field.into(), Value::Object(entries));
        if !self.metadata.is_empty() {
            root.insert("metadata".into(), serde_json::to_value(&self.metadata)?);
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(root))?;
        text.push('\n');
        Ok(text)
    }
}

pub fn read_calibration(path: &Path) -> Result<CalibrationSnapshot> {
    let calib: CalibrationSnapshot = parse_json(path, &read_text(path)?)?;
    calib.validate().map_err(|e| data_err(path, e.to_string()))?;
    Ok(calib)
}

/// Features as read from disk, before missing values are filled in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesFile {
    pub num_qubits: u64,
    pub num_measurements: u64,
    pub num_2q_gates: u64,
    pub num_sx_gates: u64,
    pub num_x_gates: u64,
    pub num_rz_gates: u64,
    #[serde(default)]
    pub entropy: Option<f64>,
    #[serde(default)]
    pub esp: Option<f64>,
}

impl FeaturesFile {
    pub fn read(path: &Path) -> Result<Self> {
        parse_json(path, &read_text(path)?)
    }

    /// Fills `esp` from `calibration` and `entropy` from `noisy` when the file
    /// leaves them out. Values present in the file win.
    pub fn resolve(
        &self,
        path: &Path,
        calibration: Option<&CalibrationSnapshot>,
        noisy: Option<&OutcomeDistribution>,
    ) -> Result<CircuitFeatures> {
        let mut f = CircuitFeatures {
            num_qubits: self.num_qubits,
            num_measurements: self.num_measurements,
            num_2q_gates: self.num_2q_gates,
            num_sx_gates: self.num_sx_gates,
            num_x_gates: self.num_x_gates,
            num_rz_gates: self.num_rz_gates,
            entropy: 0.0,
            esp: 0.0,
        };
        f.esp = match (self.esp, calibration) {
            (Some(v), _) => v,
            (None, Some(c)) => compute_esp(&f.gate_counts(), f.num_measurements as usize, c)?,
            (None, None) => return Err(data_err(path, "`esp` is missing; supply it or a calibration file")),
        };
        f.entropy = match (self.entropy, noisy) {
            (Some(v), _) => v,
            (None, Some(d)) => normalized_entropy(d)?,
            (None, None) => return Err(data_err(path, "`entropy` is missing; supply it or a counts file")),
        };
        f.validate().map_err(|e| data_err(path, e.to_string()))?;
        Ok(f)
    }
}

/// Column order of sweep output. Rows of kind `trial` hold one experiment;
/// rows of kind `mean` follow each cell's trials with `trial` and `seed` left
/// empty, mean fidelities, and the mean of the per-trial improvements.
pub const SWEEP_HEADER: [&str; 18] = [
    "row_kind",
    "n",
    "d",
    "p",
    "p_e",
    "delta",
    "k_setting",
    "shots",
    "trial",
    "seed",
    "hf_noisy",
    "hf_mitigated",
    "improvement",
    "k_used",
    "terminated_by",
    "degenerate",
    "wall_time_s",
    "error",
];

/// Writes a sweep table. With `timing` off the wall-time column is empty so
/// repeated runs produce identical bytes.
pub fn write_sweep_csv<W: Write>(out: W, table: &SweepTable, shots: u64, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    let num = |v: f64| v.to_string();
    for summary in &table.cells {
        let c = &summary.cell;
        let cell_cols = [
            c.width.to_string(),
            c.num_dominant.to_string(),
            num(c.flip_rate),
            num(c.supplied_rate),
            num(c.delta),
            c.k_setting.label(),
            shots.to_string(),
        ];
        let trials = table.trials.iter().filter(|t| t.cell == *c);
        for t in trials {
            let mut rec: Vec<String> = vec!["trial".into()];
            rec.extend(cell_cols.iter().cloned());
            rec.push(t.trial.to_string());
            rec.push(t.seed.to_string());
            match &t.result {
                Ok(TrialMetrics { hf_noisy, hf_mitigated, improvement, k_used, terminated_by, degenerate, wall_time_secs }) => {
                    rec.extend([
                        num(*hf_noisy),
                        num(*hf_mitigated),
                        num(*improvement),
                        k_used.to_string(),
                        terminated_by.as_str().to_string(),
                        degenerate.to_string(),
                        if timing { num(*wall_time_secs) } else { String::new() },
                        String::new(),
                    ]);
                }
                Err(e) => {
                    rec.extend(std::iter::repeat_n(String::new(), 7));
                    rec.push(e.clone());
                }
            }
            w.write_record(&rec)?;
        }
        let mut rec: Vec<String> = vec!["mean".into()];
        rec.extend(cell_cols.iter().cloned());
        rec.extend([String::new(), String::new()]);
        if summary.completed > 0 {
            rec.extend([num(summary.mean_hf_noisy), num(summary.mean_hf_mitigated), num(summary.mean_improvement)]);
            rec.push(num(summary.mean_k_used));
        } else {
            rec.extend(std::iter::repeat_n(String::new(), 4));
        }
        rec.extend([String::new(), String::new(), String::new()]);
        rec.push(if summary.failed > 0 { format!("{} of {} trials failed", summary.failed, summary.failed + summary.completed) } else { String::new() });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
