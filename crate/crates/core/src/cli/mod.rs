//! The `qcluster` command-line tool.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 mitigation fell back
//! to the unmodified input because redistribution removed every outcome.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::distributions::{hellinger_fidelity, improvement, normalized_entropy, DEFAULT_EPSILON};
use crate::engine::{mitigate, sweep, KMode, KSetting, MitigationConfig, MitigationReport, SuppliedRate, SweepGrid, DEFAULT_STOP_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::estimator::corpus::design_matrix;
use crate::estimator::{cross_validate, generate_corpus, read_corpus, write_corpus, CorpusSpec, ExtraTreesParams, TreeEnsemble, FEATURE_NAMES};
use crate::noise_sim::{apply_bitflip, generate_ideal, sample_shots, NoiseSpec, SyntheticSpec, DEFAULT_SHOTS};

pub mod files;

pub use files::{CountsFile, CountsMetadata, FeaturesFile, WeightKind, SWEEP_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qcluster", version, about = "Noise-aware clustering mitigation of measurement counts")]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mitigate a counts file.
    Mitigate(MitigateArgs),
    /// Write a synthetic ideal/noisy pair of counts files.
    Simulate(SimulateArgs),
    /// Run a grid of synthetic experiments and write one CSV row per trial.
    Sweep(SweepArgs),
    /// Generate a synthetic training corpus for the error-rate estimator.
    Corpus(CorpusArgs),
    /// Fit the error-rate estimator on a corpus and cross-validate it.
    Train(TrainArgs),
    /// Predict the effective error rate of one circuit.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("rate").required(true).args(["p", "model"])))]
struct MitigateArgs {
    /// Noisy counts file.
    counts: PathBuf,
    /// Effective bit-flip rate.
    #[arg(long)]
    p: Option<f64>,
    /// Estimator model; the rate is predicted from `--features`.
    #[arg(long, requires = "features")]
    model: Option<PathBuf>,
    /// Circuit features file for the model.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Calibration file, used when the features file has no `esp`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Multiplier applied to the rate before use (capped at 0.5).
    #[arg(long, default_value_t = 1.0)]
    pe_scale: f64,
    /// Stopping threshold.
    #[arg(long, default_value_t = DEFAULT_STOP_THRESHOLD)]
    delta: f64,
    /// Run a single pass with this many clusters.
    #[arg(long)]
    fixed_k: Option<usize>,
    /// Ideal distribution to score the noisy and mitigated outputs against.
    #[arg(long)]
    hf_against: Option<PathBuf>,
    /// Where to write the mitigated distribution (`-` for stdout).
    #[arg(short, long)]
    out: PathBuf,
    /// Where to write the JSON report (stdout by default).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    /// Number of dominant strings in the ideal distribution.
    #[arg(long)]
    d: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    shots: u64,
    /// Noise-free shot counts.
    #[arg(long)]
    ideal_out: PathBuf,
    /// Shot counts after the bit-flip channel.
    #[arg(long)]
    noisy_out: PathBuf,
    /// Exact ideal probabilities, before shot sampling.
    #[arg(long)]
    exact_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "14")]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
    /// True bit-flip rates.
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<f64>,
    /// Rates handed to the mitigator: `true`, a number, or `x<factor>` of the true rate.
    #[arg(long, value_delimiter = ',', default_value = "true", value_parser = parse_supplied)]
    pe: Vec<SuppliedRate>,
    #[arg(long, value_delimiter = ',', default_value = "0.95")]
    delta: Vec<f64>,
    /// Cluster counts: `iterative`, `exact` (= d), a number, or `x<factor>` of d.
    #[arg(long, value_delimiter = ',', default_value = "iterative", value_parser = parse_k)]
    k: Vec<KSetting>,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    shots: u64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Output CSV (`-` for stdout).
    #[arg(short, long, default_value = "-")]
    out: PathBuf,
    /// Leave the wall-time column empty so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    shots: u64,
    /// Output CSV (`-` for stdout).
    #[arg(short, long, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus CSV.
    corpus: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    /// CSV of cross-validation scores and feature importances.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 1)]
    min_samples_leaf: usize,
    #[arg(long)]
    max_features: Option<usize>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Calibration file, used when the features file has no `esp`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Noisy counts, used when the features file has no `entropy`.
    #[arg(long)]
    counts: Option<PathBuf>,
}

fn parse_supplied(s: &str) -> std::result::Result<SuppliedRate, String> {
    if s == "true" {
        return Ok(SuppliedRate::True);
    }
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("`{s}` is not `true`, a rate, or `x<factor>`"));
    match s.strip_prefix('x') {
        Some(f) => Ok(SuppliedRate::Scaled(num(f)?)),
        None => Ok(SuppliedRate::Fixed(num(s)?)),
    }
}

fn parse_k(s: &str) -> std::result::Result<KSetting, String> {
    match s {
        "iterative" => Ok(KSetting::Iterative),
        "exact" => Ok(KSetting::Exact),
        _ => {
            let bad = || format!("`{s}` is not `iterative`, `exact`, a count, or `x<factor>`");
            match s.strip_prefix('x') {
                Some(f) => f.parse().map(KSetting::Scaled).map_err(|_| bad()),
                None => s.parse().map(KSetting::Fixed).map_err(|_| bad()),
            }
        }
    }
}

/// Fidelity of the input and output against a known ideal distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub hf_noisy: f64,
    pub hf_mitigated: f64,
    pub improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub k: usize,
    pub centroids: Vec<String>,
    pub fidelity_to_previous: Option<f64>,
    pub degenerate: bool,
    pub converged: bool,
}

/// JSON report written by `qcluster mitigate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationSummary {
    pub flip_rate: f64,
    /// `explicit` or `model`.
    pub rate_source: String,
    /// Model output before `--pe-scale`.
    pub estimated_rate: Option<f64>,
    pub stop_threshold: f64,
    pub fixed_k: Option<usize>,
    pub k_used: usize,
    pub terminated_by: String,
    pub degenerate: bool,
    pub centroids: Vec<String>,
    pub iterations: Vec<IterationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelitySummary>,
}

impl MitigationSummary {
    fn new(report: &MitigationReport, cfg: &MitigationConfig, estimated_rate: Option<f64>) -> Self {
        let names = |c: &[crate::distributions::BitString]| c.iter().map(|b| b.to_string()).collect();
        Self {
            flip_rate: cfg.flip_rate,
            rate_source: if estimated_rate.is_some() { "model" } else { "explicit" }.into(),
            estimated_rate,
            stop_threshold: cfg.stop_threshold,
            fixed_k: match cfg.k_mode {
                KMode::Fixed(k) => Some(k),
                KMode::Iterative => None,
            },
            k_used: report.k_used,
            terminated_by: report.terminated_by.as_str().into(),
            degenerate: report.degenerate,
            centroids: names(&report.centroids),
            iterations: report
                .iterations
                .iter()
                .map(|it| IterationSummary {
                    k: it.k,
                    centroids: names(&it.centroids),
                    fidelity_to_previous: it.fidelity_to_previous,
                    degenerate: it.degenerate,
                    converged: it.converged,
                })
                .collect(),
            fidelity: None,
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) => EXIT_USAGE,
        Error::DegenerateMitigation => EXIT_DEGENERATE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                EXIT_OK
            } else {
                let _ = write!(stderr, "{}", e.render());
                EXIT_USAGE
            };
        }
    };
    let outcome = match &cli.command {
        Command::Mitigate(a) => cmd_mitigate(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, stdout).map(|_| EXIT_OK),
        Command::Sweep(a) => cmd_sweep(a, cli.seed, stdout).map(|_| EXIT_OK),
        Command::Corpus(a) => cmd_corpus(a, cli.seed, stdout).map(|_| EXIT_OK),
        Command::Train(a) => cmd_train(a, cli.seed, stdout).map(|_| EXIT_OK),
        Command::Estimate(a) => cmd_estimate(a, stdout).map(|_| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn predict_rate(model: &Path, features: &Path, calibration: Option<&Path>, counts: Option<&CountsFile>) -> Result<f64> {
    let model_text = std::fs::read_to_string(model).map_err(|e| Error::Data { path: model.display().to_string(), message: e.to_string() })?;
    let ensemble = TreeEnsemble::from_json(&model_text).map_err(|e| Error::Data { path: model.display().to_string(), message: e.to_string() })?;
    let calib = calibration.map(files::read_calibration).transpose()?;
    let row = FeaturesFile::read(features)?.resolve(features, calib.as_ref(), counts.map(|c| &c.distribution))?;
    ensemble.predict(&row).map_err(|e| Error::Data { path: model.display().to_string(), message: e.to_string() })
}

fn cmd_mitigate(a: &MitigateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let input = CountsFile::read(&a.counts)?;
    if !(a.pe_scale.is_finite() && a.pe_scale >= 0.0) {
        return Err(invalid(format!("--pe-scale must be nonnegative, got {}", a.pe_scale)));
    }
    let (base_rate, estimated) = match (a.p, &a.model) {
        (Some(p), _) => {
            MitigationConfig::new(p).validate()?;
            (p, None)
        }
        (None, Some(m)) => {
            let features = a.features.as_deref().expect("clap requires --features with --model");
            let r = predict_rate(m, features, a.calibration.as_deref(), Some(&input))?;
            (r, Some(r))
        }
        (None, None) => unreachable!("clap requires a rate source"),
    };
    let mut cfg = MitigationConfig::new((base_rate * a.pe_scale).min(0.5)).with_stop_threshold(a.delta);
    if let Some(k) = a.fixed_k {
        cfg = cfg.with_fixed_k(k);
    }
    let report = mitigate(&input.distribution, &cfg)?;
    let mut summary = MitigationSummary::new(&report, &cfg, estimated);
    if let Some(ideal_path) = &a.hf_against {
        let ideal = CountsFile::read(ideal_path)?;
        let hf_noisy = hellinger_fidelity(&input.distribution, &ideal.distribution)?;
        let hf_mitigated = hellinger_fidelity(&report.distribution, &ideal.distribution)?;
        summary.fidelity = Some(FidelitySummary { hf_noisy, hf_mitigated, improvement: improvement(hf_mitigated, hf_noisy, DEFAULT_EPSILON) });
    }

    let mut output = CountsFile::probabilities(report.distribution.clone());
    output.metadata = input.metadata.clone();
    files::write_text(&a.out, &output.to_json()?, stdout)?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    match &a.report {
        Some(path) => files::write_text(path, &text, stdout)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(if report.degenerate { EXIT_DEGENERATE } else { EXIT_OK })
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, stdout: &mut dyn Write) -> Result<()> {
    let ideal = generate_ideal(&SyntheticSpec::new(a.n, a.d, seed)?)?;
    let clean = sample_shots(&ideal, a.shots, seed)?;
    let noisy = apply_bitflip(&clean, &NoiseSpec::new(a.p, seed)?)?;
    let meta = |stage: &str| CountsMetadata {
        backend: Some("simulate".into()),
        shots: Some(a.shots),
        timestamp: None,
        extra: [
            ("seed".to_string(), seed.into()),
            ("flip_rate".to_string(), if stage == "noisy" { a.p } else { 0.0 }.into()),
            ("num_dominant".to_string(), a.d.into()),
        ]
        .into_iter()
        .collect(),
    };
    let write = |path: &Path, mut file: CountsFile, stage: &str, stdout: &mut dyn Write| {
        file.metadata = meta(stage);
        files::write_text(path, &file.to_json()?, stdout)
    };
    write(&a.ideal_out, CountsFile::counts(clean), "ideal", stdout)?;
    write(&a.noisy_out, CountsFile::counts(noisy.clone()), "noisy", stdout)?;
    if let Some(path) = &a.exact_out {
        write(path, CountsFile::probabilities(ideal.clone()), "ideal", stdout)?;
    }
    writeln!(stdout, "ideal_entropy={}", normalized_entropy(&ideal)?)?;
    writeln!(stdout, "hf_noisy={}", hellinger_fidelity(&noisy, &ideal)?)?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, seed: u64, stdout: &mut dyn Write) -> Result<()> {
    for &p in &a.p {
        NoiseSpec::new(p, 0)?;
    }
    for &d in &a.delta {
        MitigationConfig::new(0.0).with_stop_threshold(d).validate()?;
    }
    let grid = SweepGrid {
        widths: a.n.clone(),
        dominants: a.d.clone(),
        flip_rates: a.p.clone(),
        supplied: a.pe.clone(),
        deltas: a.delta.clone(),
        k_settings: a.k.clone(),
        shots: a.shots,
        trials: a.trials,
        base_seed: seed,
    };
    let table = sweep(&grid)?;
    let mut buf = Vec::new();
    files::write_sweep_csv(&mut buf, &table, a.shots, !a.no_timing)?;
    if a.out.as_os_str() == "-" {
        stdout.write_all(&buf)?;
    } else {
        let mut f = BufWriter::new(File::create(&a.out).map_err(|e| Error::Data { path: a.out.display().to_string(), message: e.to_string() })?);
        f.write_all(&buf)?;
        f.flush()?;
    }
    Ok(())
}

fn cmd_corpus(a: &CorpusArgs, seed: u64, stdout: &mut dyn Write) -> Result<()> {
    let corpus = generate_corpus(&CorpusSpec { samples: a.samples, shots: a.shots, seed })?;
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpus)?;
    files::write_text(&a.out, std::str::from_utf8(&buf).expect("csv output is utf-8"), stdout)
}

fn cmd_train(a: &TrainArgs, seed: u64, stdout: &mut dyn Write) -> Result<()> {
    let file = File::open(&a.corpus).map_err(|e| Error::Data { path: a.corpus.display().to_string(), message: e.to_string() })?;
    let corpus = read_corpus(file, &a.corpus.display().to_string())?;
    let params = ExtraTreesParams { n_trees: a.trees, max_features: a.max_features, min_samples_leaf: a.min_samples_leaf, seed };
    let (x, y) = design_matrix(&corpus);
    let cv = cross_validate(&FEATURE_NAMES, &x, &y, a.folds, &params, seed)?;
    let model = TreeEnsemble::fit_rows(&FEATURE_NAMES, &x, &y, &params)?;
    files::write_text(&a.model_out, &model.to_json()?, stdout)?;

    let mut importance = model.feature_importance();
    importance.sort_by(|l, r| r.1.total_cmp(&l.1));
    writeln!(stdout, "samples={} folds={} cv_mse={} cv_r2={}", corpus.len(), cv.folds, cv.mse, cv.r2)?;
    for (name, v) in &importance {
        writeln!(stdout, "importance {name}={v}")?;
    }
    if let Some(path) = &a.metrics_out {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"])?;
        w.write_record(["samples", &corpus.len().to_string()])?;
        w.write_record(["cv_folds", &cv.folds.to_string()])?;
        w.write_record(["cv_mse", &cv.mse.to_string()])?;
        w.write_record(["cv_r2", &cv.r2.to_string()])?;
        for (name, v) in &importance {
            w.write_record([format!("importance_{name}"), v.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        files::write_text(path, std::str::from_utf8(&bytes).expect("csv output is utf-8"), stdout)?;
    }
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs, stdout: &mut dyn Write) -> Result<()> {
    let counts = a.counts.as_deref().map(CountsFile::read).transpose()?;
    let p = predict_rate(&a.model, &a.features, a.calibration.as_deref(), counts.as_ref())?;
    writeln!(stdout, "{p}")?;
    Ok(())
}
