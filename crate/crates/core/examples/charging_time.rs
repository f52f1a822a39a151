//! Charging time τ_c, the time of peak average power ΔE/t, across the first
//! ground-level crossing of a three-spin chain.
//!
//! ```bash
//! cargo run --release --example charging_time
//! ```

use qbattery::experiments::charging_time_scan;
use qbattery::lindblad::EvolutionConfig;
use qbattery::model::ModelSpec;

pub fn run() -> qbattery::Result<()> {
    let cfg = EvolutionConfig {
        t_max: 6.0,
        ..EvolutionConfig::default()
    };
    let template = ModelSpec::new(3).thermal(2.0);
    let points = charging_time_scan(&template, &[0.5, 0.65, 0.75, 0.9], &cfg)?;
    println!(
        "first crossing at J = 1/sqrt(2) = {:.4}",
        std::f64::consts::FRAC_1_SQRT_2
    );
    println!("{:>5} {:>7} {:>11}", "J", "tau_c", "peak power");
    for p in points {
        match (p.tau_c, p.peak_power) {
            (Some(tau), Some(power)) => println!("{:>5.2} {tau:>7.2} {power:>11.5}", p.j),
            _ => println!("{:>5.2} failed: {}", p.j, p.error.unwrap_or_default()),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
