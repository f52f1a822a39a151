//! Steady-state energy, ergotropy and efficiency as the chain grows, for
//! weak thermal charging of non-interacting spins.
//!
//! ```bash
//! cargo run --release --example spin_number_sweep
//! ```

use qbattery::experiments::sweep_spin_number;
use qbattery::lindblad::EvolutionConfig;
use qbattery::model::ModelSpec;

pub fn run() -> qbattery::Result<()> {
    let template = ModelSpec::new(1).thermal(0.2);
    let sweep = sweep_spin_number(&template, &[1, 2, 3], &EvolutionConfig::default())?;
    println!(
        "{:>3} {:>10} {:>10} {:>10} {:>10}",
        "N", "delta_e", "ergotropy", "efficiency", "residual"
    );
    for p in &sweep.points {
        match &p.steady {
            Some(s) => println!(
                "{:>3} {:>10.5} {:>10.5} {:>10} {:>10.1e}",
                p.value,
                s.delta_e,
                s.ergotropy,
                s.efficiency.map_or(String::from("-"), |e| format!("{e:.4}")),
                s.residual
            ),
            None => println!("{:>3} failed: {}", p.value, p.error.as_deref().unwrap_or("?")),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
