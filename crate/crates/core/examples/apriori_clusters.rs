//! Iterative cluster search against a fixed K equal to (or a multiple of)
//! the true number of dominant states.

use qcluster::engine::{sweep, KSetting, SweepGrid};

fn main() -> qcluster::Result<()> {
    let grid = SweepGrid {
        dominants: vec![2, 8],
        flip_rates: vec![0.1],
        k_settings: vec![KSetting::Iterative, KSetting::Exact, KSetting::Scaled(0.5), KSetting::Scaled(2.0)],
        trials: 5,
        ..SweepGrid::default()
    };
    for c in &sweep(&grid)?.cells {
        println!(
            "d={:<2} {:<11} improvement {:.2}  mean K {:.1}",
            c.cell.num_dominant,
            c.cell.k_setting.label(),
            c.mean_improvement,
            c.mean_k_used
        );
    }
    Ok(())
}
