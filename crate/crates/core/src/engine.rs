//! The full mitigation loop and the synthetic sensitivity sweep built on it.
//!
//! In iterative mode the number of clusters starts at 1 and grows by one per
//! iteration. Each iteration clusters the noisy input from a fresh top-K
//! initialization, redistributes, and compares the result with the previous
//! iteration's output by Hellinger fidelity. Once that fidelity exceeds the
//! stopping threshold the *previous* output is returned. K = 1 has no
//! predecessor, so the first comparison is between K = 2 and K = 1 and the
//! K = 1 output is the least that iterative mode returns.

use std::time::Instant;

use rayon::prelude::*;

use crate::clustering::{cluster, ClusterConfig, DEFAULT_MAX_ROUNDS};
use crate::distributions::{hellinger_fidelity, improvement, BitString, OutcomeDistribution, DEFAULT_EPSILON};
use crate::error::{invalid, Error, Result};
use crate::noise_sim::{apply_bitflip, generate_ideal, sample_shots, trial_seed, NoiseSpec, SyntheticSpec};
use crate::redistribution::redistribute;

pub const DEFAULT_STOP_THRESHOLD: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KMode {
    Iterative,
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MitigationConfig {
    pub flip_rate: f64,
    pub stop_threshold: f64,
    pub k_mode: KMode,
    pub max_rounds: usize,
}

impl MitigationConfig {
    pub fn new(flip_rate: f64) -> Self {
        Self {
            flip_rate,
            stop_threshold: DEFAULT_STOP_THRESHOLD,
            k_mode: KMode::Iterative,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    pub fn with_stop_threshold(mut self, delta: f64) -> Self {
        self.stop_threshold = delta;
        self
    }

    pub fn with_fixed_k(mut self, k: usize) -> Self {
        self.k_mode = KMode::Fixed(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.flip_rate) {
            return Err(invalid(format!("flip rate must be in [0, 0.5], got {}", self.flip_rate)));
        }
        if !(self.stop_threshold > 0.0 && self.stop_threshold < 1.0) {
            return Err(invalid(format!("stopping threshold must be in (0, 1), got {}", self.stop_threshold)));
        }
        if self.k_mode == KMode::Fixed(0) {
            return Err(invalid("fixed k must be at least 1"));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Fidelity between consecutive outputs exceeded the threshold.
    Convergence,
    /// Every distinct input string was tried as a cluster count.
    KMax,
    /// Fixed-K mode, single pass.
    Fixed,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Convergence => "convergence",
            Termination::KMax => "k_max",
            Termination::Fixed => "fixed",
        }
    }
}

/// One pass of clustering and redistribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Iteration {
    /// Requested cluster count.
    pub k: usize,
    pub distribution: OutcomeDistribution,
    pub centroids: Vec<BitString>,
    /// Hellinger fidelity to the previous iteration's output. `None` for
    /// K = 1 and in fixed mode.
    pub fidelity_to_previous: Option<f64>,
    /// Redistribution removed everything and the input was used instead.
    pub degenerate: bool,
    /// Clustering settled before hitting `max_rounds`.
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MitigationReport {
    pub distribution: OutcomeDistribution,
    /// Cluster count of the returned output.
    pub k_used: usize,
    pub centroids: Vec<BitString>,
    pub iterations: Vec<Iteration>,
    pub terminated_by: Termination,
    /// The returned output is the unmodified input because redistribution degenerated.
    pub degenerate: bool,
}

fn single_pass(noisy: &OutcomeDistribution, reference: &OutcomeDistribution, k: usize, cfg: &MitigationConfig) -> Result<Iteration> {
    let model = cluster(noisy, &ClusterConfig { k, flip_rate: cfg.flip_rate, max_rounds: cfg.max_rounds })?;
    let (distribution, degenerate) = match redistribute(noisy, &model, cfg.flip_rate) {
        Ok(r) => (r.mitigated, false),
        Err(Error::DegenerateMitigation) => (reference.clone(), true),
        Err(e) => return Err(e),
    };
    Ok(Iteration {
        k,
        distribution,
        centroids: model.centroids().to_vec(),
        fidelity_to_previous: None,
        degenerate,
        converged: model.converged(),
    })
}

/// Mitigates `noisy` according to `cfg`.
pub fn mitigate(noisy: &OutcomeDistribution, cfg: &MitigationConfig) -> Result<MitigationReport> {
    cfg.validate()?;
    let reference = noisy.to_probabilities()?;
    let k_max = noisy.len();

    if let KMode::Fixed(k) = cfg.k_mode {
        let it = single_pass(noisy, &reference, k.min(k_max), cfg)?;
        return Ok(MitigationReport {
            distribution: it.distribution.clone(),
            k_used: it.k,
            centroids: it.centroids.clone(),
            degenerate: it.degenerate,
            iterations: vec![it],
            terminated_by: Termination::Fixed,
        });
    }

    let mut iterations: Vec<Iteration> = Vec::new();
    for k in 1..=k_max {
        let mut it = single_pass(noisy, &reference, k, cfg)?;
        if let Some(prev) = iterations.last() {
            it.fidelity_to_previous = Some(hellinger_fidelity(&it.distribution, &prev.distribution)?);
        }
        let converged = it.fidelity_to_previous.is_some_and(|hf| hf > cfg.stop_threshold);
        iterations.push(it);
        if converged {
            let prev = &iterations[iterations.len() - 2];
            return Ok(MitigationReport {
                distribution: prev.distribution.clone(),
                k_used: prev.k,
                centroids: prev.centroids.clone(),
                degenerate: prev.degenerate,
                terminated_by: Termination::Convergence,
                iterations,
            });
        }
    }

    let last = iterations.last().expect("a nonempty distribution has at least one distinct string");
    Ok(MitigationReport {
        distribution: last.distribution.clone(),
        k_used: last.k,
        centroids: last.centroids.clone(),
        degenerate: last.degenerate,
        terminated_by: Termination::KMax,
        iterations,
    })
}

/// How the rate handed to the mitigator relates to the simulated one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SuppliedRate {
    /// The true flip rate.
    True,
    /// A fixed rate regardless of the truth.
    Fixed(f64),
    /// The true rate times a factor (1.5 for a 50% overestimate), capped at 0.5.
    Scaled(f64),
}

impl SuppliedRate {
    pub fn resolve(&self, true_rate: f64) -> f64 {
        match *self {
            SuppliedRate::True => true_rate,
            SuppliedRate::Fixed(p) => p,
            SuppliedRate::Scaled(f) => (true_rate * f).min(0.5),
        }
    }
}

/// Cluster-count policy for a sweep cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KSetting {
    Iterative,
    /// Fixed K equal to the number of dominant states.
    Exact,
    Fixed(usize),
    /// Fixed K equal to the number of dominant states times a factor, at least 1.
    Scaled(f64),
}

impl KSetting {
    pub fn resolve(&self, num_dominant: usize) -> KMode {
        match *self {
            KSetting::Iterative => KMode::Iterative,
            KSetting::Exact => KMode::Fixed(num_dominant),
            KSetting::Fixed(k) => KMode::Fixed(k.max(1)),
            KSetting::Scaled(f) => KMode::Fixed(((num_dominant as f64 * f).round() as usize).max(1)),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            KSetting::Iterative => "iterative".into(),
            KSetting::Exact => "exact".into(),
            KSetting::Fixed(k) => format!("fixed:{k}"),
            KSetting::Scaled(f) => format!("scaled:{f}"),
        }
    }
}

/// Cartesian grid of synthetic experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub widths: Vec<usize>,
    pub dominants: Vec<usize>,
    pub flip_rates: Vec<f64>,
    pub supplied: Vec<SuppliedRate>,
    pub deltas: Vec<f64>,
    pub k_settings: Vec<KSetting>,
    pub shots: u64,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            widths: vec![14],
            dominants: vec![1],
            flip_rates: vec![0.15],
            supplied: vec![SuppliedRate::True],
            deltas: vec![DEFAULT_STOP_THRESHOLD],
            k_settings: vec![KSetting::Iterative],
            shots: crate::noise_sim::DEFAULT_SHOTS,
            trials: 10,
            base_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub width: usize,
    pub num_dominant: usize,
    pub flip_rate: f64,
    pub supplied_rate: f64,
    pub delta: f64,
    pub k_setting: KSetting,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &width in &self.widths {
            for &num_dominant in &self.dominants {
                for &flip_rate in &self.flip_rates {
                    for supplied in &self.supplied {
                        for &delta in &self.deltas {
                            for &k_setting in &self.k_settings {
                                cells.push(SweepCell {
                                    width,
                                    num_dominant,
                                    flip_rate,
                                    supplied_rate: supplied.resolve(flip_rate),
                                    delta,
                                    k_setting,
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub cell: SweepCell,
    pub trial: usize,
    pub seed: u64,
    pub result: std::result::Result<TrialMetrics, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialMetrics {
    pub hf_noisy: f64,
    pub hf_mitigated: f64,
    pub improvement: f64,
    pub k_used: usize,
    pub terminated_by: Termination,
    pub degenerate: bool,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub cell: SweepCell,
    pub completed: usize,
    pub failed: usize,
    pub mean_improvement: f64,
    pub mean_hf_noisy: f64,
    pub mean_hf_mitigated: f64,
    pub mean_k_used: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub trials: Vec<TrialOutcome>,
    pub cells: Vec<CellSummary>,
}

/// Generates, corrupts and mitigates one synthetic distribution.
///
/// The ideal distribution, the shot sample and the channel all derive from
/// `trial_seed(base_seed, trial)`, so cells that differ only in mitigation
/// parameters see identical noisy data.
pub fn run_trial(cell: &SweepCell, trial: usize, shots: u64, base_seed: u64) -> TrialOutcome {
    let seed = trial_seed(base_seed, trial as u64);
    let result = (|| -> Result<TrialMetrics> {
        let ideal = generate_ideal(&SyntheticSpec::new(cell.width, cell.num_dominant, seed)?)?;
        let clean = sample_shots(&ideal, shots, seed)?;
        let noisy = apply_bitflip(&clean, &NoiseSpec::new(cell.flip_rate, seed)?)?;
        let cfg = MitigationConfig {
            flip_rate: cell.supplied_rate,
            stop_threshold: cell.delta,
            k_mode: cell.k_setting.resolve(cell.num_dominant),
            max_rounds: DEFAULT_MAX_ROUNDS,
        };
        let start = Instant::now();
        let report = mitigate(&noisy, &cfg)?;
        let wall_time_secs = start.elapsed().as_secs_f64();
        let hf_noisy = hellinger_fidelity(&noisy, &ideal)?;
        let hf_mitigated = hellinger_fidelity(&report.distribution, &ideal)?;
        Ok(TrialMetrics {
            hf_noisy,
            hf_mitigated,
            improvement: improvement(hf_mitigated, hf_noisy, DEFAULT_EPSILON),
            k_used: report.k_used,
            terminated_by: report.terminated_by,
            degenerate: report.degenerate,
            wall_time_secs,
        })
    })();
    TrialOutcome { cell: *cell, trial, seed, result: result.map_err(|e| e.to_string()) }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Runs every cell of `grid` for `grid.trials` trials in parallel.
///
/// Failures are recorded per trial. Output is ordered by cell (grid order)
/// then trial, independent of scheduling.
pub fn sweep(grid: &SweepGrid) -> Result<SweepTable> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    if grid.trials == 0 {
        return Err(invalid("at least one trial per cell is required"));
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.trials).map(move |t| (c, t)))
        .collect();
    let mut trials: Vec<(usize, TrialOutcome)> = jobs
        .par_iter()
        .map(|&(c, t)| (c, run_trial(&cells[c], t, grid.shots, grid.base_seed)))
        .collect();
    trials.sort_by_key(|(c, o)| (*c, o.trial));

    let summaries = cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let ok: Vec<&TrialMetrics> = trials
                .iter()
                .filter(|(c, _)| *c == ci)
                .filter_map(|(_, o)| o.result.as_ref().ok())
                .collect();
            CellSummary {
                cell: *cell,
                completed: ok.len(),
                failed: grid.trials - ok.len(),
                mean_improvement: mean(ok.iter().map(|m| m.improvement)),
                mean_hf_noisy: mean(ok.iter().map(|m| m.hf_noisy)),
                mean_hf_mitigated: mean(ok.iter().map(|m| m.hf_mitigated)),
                mean_k_used: mean(ok.iter().map(|m| m.k_used as f64)),
            }
        })
        .collect();

    Ok(SweepTable { trials: trials.into_iter().map(|(_, o)| o).collect(), cells: summaries })
}
