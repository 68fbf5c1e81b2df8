//! How the convergence threshold trades cluster count against improvement.

use qcluster::engine::{sweep, SweepGrid};

fn main() -> qcluster::Result<()> {
    let grid = SweepGrid {
        dominants: vec![8],
        flip_rates: vec![0.1],
        deltas: vec![0.8, 0.9, 0.95, 0.99, 0.999],
        trials: 5,
        ..SweepGrid::default()
    };
    for c in &sweep(&grid)?.cells {
        println!("delta {:<6} mean K {:>5.1}  improvement {:.2}", c.cell.delta, c.mean_k_used, c.mean_improvement);
    }
    Ok(())
}
