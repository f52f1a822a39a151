//! Battery spectrum, ground-level crossings and the magnetization order
//! parameters along the hopping axis.
//!
//! ```bash
//! cargo run --release --example spectrum
//! ```

use qbattery::model::ModelSpec;
use qbattery::spectrum::{self, linspace};

pub fn run() -> qbattery::Result<()> {
    for n in 2..=6 {
        let crossings = spectrum::ground_crossings(&ModelSpec::new(n), 0.0, 2.0, 400)?;
        let shown: Vec<String> = crossings.iter().map(|j| format!("{j:.6}")).collect();
        println!("N = {n}: crossings at J = [{}]", shown.join(", "));
    }

    let grid = linspace(0.0, 2.0, 21);
    let scan = spectrum::order_parameter_scan(&ModelSpec::new(4), &grid)?;
    println!("\nN = 4 order parameters");
    println!("{:>5} {:>8} {:>8}", "J", "M_z", "xi_z");
    for (j, op) in scan.j_grid.iter().zip(&scan.params) {
        println!("{j:>5.2} {:>8.4} {:>8.4}", op.m_z, op.xi_z);
    }
    println!(
        "jumps near J = {:?}, consistent with crossings: {}",
        scan.discontinuities, scan.consistent
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
