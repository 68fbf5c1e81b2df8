//! Three dominant strings on six qubits, mitigated at p = 0.15 with δ = 0.9.
//! Prints each iteration's centroids and its fidelity to the previous one.

use qcluster::distributions::{hellinger_fidelity, OutcomeDistribution};
use qcluster::engine::{mitigate, MitigationConfig};
use qcluster::noise_sim::{apply_bitflip, sample_shots, NoiseSpec};

fn main() -> qcluster::Result<()> {
    let ideal = OutcomeDistribution::from_text_weights([("111000", 0.45), ("111010", 0.35), ("011010", 0.20)])?;
    let noisy = apply_bitflip(&sample_shots(&ideal, 8192, 1)?, &NoiseSpec::new(0.15, 1)?)?;
    let report = mitigate(&noisy, &MitigationConfig::new(0.15).with_stop_threshold(0.9))?;

    for it in &report.iterations {
        let centroids: Vec<String> = it.centroids.iter().map(|c| c.to_string()).collect();
        let hf = it.fidelity_to_previous.map_or("-".to_string(), |f| format!("{f:.4}"));
        println!("K={}  centroids=[{}]  hf_prev={hf}", it.k, centroids.join(", "));
    }
    println!("stopped by {} at K={}", report.terminated_by.as_str(), report.k_used);

    println!("\ntop strings after mitigation:");
    for (b, w) in report.distribution.ranked().into_iter().take(5) {
        println!("  {b}  {w:.4}  (noisy {:.4})", noisy.probability(&b));
    }
    println!(
        "hf to ideal: noisy {:.4}, mitigated {:.4}",
        hellinger_fidelity(&noisy, &ideal)?,
        hellinger_fidelity(&report.distribution, &ideal)?
    );
    Ok(())
}
