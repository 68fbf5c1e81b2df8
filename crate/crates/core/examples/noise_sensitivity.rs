//! Mean improvement on 14-qubit synthetic circuits as the flip rate and the
//! number of dominant states grow.

use qcluster::engine::{sweep, SweepGrid};

fn main() -> qcluster::Result<()> {
    let grid = SweepGrid {
        widths: vec![14],
        dominants: vec![1, 4, 16],
        flip_rates: vec![0.05, 0.1, 0.15, 0.2],
        trials: 5,
        ..SweepGrid::default()
    };
    let table = sweep(&grid)?;
    println!("{:>3} {:>5} {:>10} {:>10} {:>8} {:>6}", "d", "p", "hf_noisy", "hf_mitig", "improve", "k");
    for c in &table.cells {
        println!(
            "{:>3} {:>5} {:>10.4} {:>10.4} {:>8.2} {:>6.1}",
            c.cell.num_dominant, c.cell.flip_rate, c.mean_hf_noisy, c.mean_hf_mitigated, c.mean_improvement, c.mean_k_used
        );
    }
    Ok(())
}
