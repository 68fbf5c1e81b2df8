//! Mitigating with a rate that is off from the one used to corrupt the data.

use qcluster::engine::{sweep, SuppliedRate, SweepGrid};

fn main() -> qcluster::Result<()> {
    let grid = SweepGrid {
        widths: vec![14],
        dominants: vec![4],
        flip_rates: vec![0.1],
        supplied: vec![
            SuppliedRate::Scaled(0.5),
            SuppliedRate::Scaled(0.75),
            SuppliedRate::True,
            SuppliedRate::Scaled(1.25),
            SuppliedRate::Scaled(1.5),
            SuppliedRate::Fixed(0.3),
        ],
        trials: 5,
        ..SweepGrid::default()
    };
    let table = sweep(&grid)?;
    println!("true p = 0.1");
    for c in &table.cells {
        println!("supplied {:.3}: improvement {:.2}, mean K {:.1}", c.cell.supplied_rate, c.mean_improvement, c.mean_k_used);
    }
    Ok(())
}
