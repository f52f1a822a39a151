//! Thermal steady state of three spins across the hopping strength, with
//! the ground-level crossings of the battery marked.
//!
//! ```bash
//! cargo run --release --example hopping_sweep
//! ```

use qbattery::experiments::sweep_hopping;
use qbattery::lindblad::EvolutionConfig;
use qbattery::model::ModelSpec;

pub fn run() -> qbattery::Result<()> {
    let template = ModelSpec::new(3).thermal(2.0);
    let grid = [0.0, 0.4, 0.8, 1.2, 1.6];
    let sweep = sweep_hopping(&template, &grid, &EvolutionConfig::default())?;
    println!("{:>5} {:>10} {:>10} {:>10}", "J", "delta_e", "ergotropy", "efficiency");
    for p in &sweep.points {
        match &p.steady {
            Some(s) => {
                let eff = s.efficiency.map_or(String::from("-"), |e| format!("{e:.4}"));
                println!("{:>5.2} {:>10.5} {:>10.5} {:>10}", p.value, s.delta_e, s.ergotropy, eff);
            }
            None => println!("{:>5.2} failed: {}", p.value, p.error.as_deref().unwrap_or("?")),
        }
    }
    println!("ground-level crossings in [0, 1.6]: {:?}", sweep.crossings);
    println!("largest steady residual {:.1e}", sweep.max_residual());
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
