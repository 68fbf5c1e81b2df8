//! Wall time of one mitigation as the shot count grows.

use std::time::Instant;

use qcluster::engine::{mitigate, MitigationConfig};
use qcluster::noise_sim::{apply_bitflip, generate_ideal, sample_shots, NoiseSpec, SyntheticSpec};

fn main() -> qcluster::Result<()> {
    let ideal = generate_ideal(&SyntheticSpec::new(14, 4, 0)?)?;
    for shots in [1024u64, 4096, 16384, 65536] {
        let noisy = apply_bitflip(&sample_shots(&ideal, shots, 0)?, &NoiseSpec::new(0.1, 0)?)?;
        let start = Instant::now();
        let report = mitigate(&noisy, &MitigationConfig::new(0.1))?;
        println!(
            "{shots:>6} shots  {:>6} unique  K={}  {:.4} s",
            noisy.len(),
            report.k_used,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
