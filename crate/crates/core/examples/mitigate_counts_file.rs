//! Reads a counts file, mitigates it and writes the result next to it.
//!
//! `cargo run --example mitigate_counts_file -- counts.json 0.05`
//! Without arguments a small demo file is written to the temp directory first.

use std::path::PathBuf;

use qcluster::cli::CountsFile;
use qcluster::distributions::OutcomeDistribution;
use qcluster::engine::{mitigate, MitigationConfig};
use qcluster::noise_sim::{apply_bitflip, sample_shots, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let (path, p) = match (args.next(), args.next()) {
        (Some(path), Some(p)) => (PathBuf::from(path), p.parse::<f64>()?),
        _ => {
            let ideal = OutcomeDistribution::from_text_weights([("0000000000", 0.6), ("1111100000", 0.4)])?;
            let noisy = apply_bitflip(&sample_shots(&ideal, 4000, 3)?, &NoiseSpec::new(0.05, 3)?)?;
            let path = std::env::temp_dir().join("qcluster-demo-counts.json");
            std::fs::write(&path, CountsFile::counts(noisy).to_json()?)?;
            (path, 0.05)
        }
    };

    let input = CountsFile::read(&path)?;
    let report = mitigate(&input.distribution, &MitigationConfig::new(p))?;
    let out = path.with_extension("mitigated.json");
    std::fs::write(&out, CountsFile::probabilities(report.distribution.clone()).to_json()?)?;
    println!(
        "{}: {} strings -> {} strings, K={}, written to {}",
        path.display(),
        input.distribution.len(),
        report.distribution.len(),
        report.k_used,
        out.display()
    );
    Ok(())
}
