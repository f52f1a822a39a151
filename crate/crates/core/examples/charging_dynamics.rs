//! Coherent and thermal charging of a three-spin chain from its ground
//! state, printed every half time unit.
//!
//! ```bash
//! cargo run --release --example charging_dynamics
//! ```

use qbattery::experiments::run_dynamics;
use qbattery::lindblad::EvolutionConfig;
use qbattery::model::ModelSpec;
use qbattery::observables;

pub fn run() -> qbattery::Result<()> {
    let cfg = EvolutionConfig {
        t_max: 8.0,
        ..EvolutionConfig::default()
    };
    for spec in [
        ModelSpec::new(3).with_hopping(0.5).coherent(1.0),
        ModelSpec::new(3).with_hopping(0.5).thermal(2.0),
    ] {
        let run = run_dynamics(&spec, &cfg)?;
        println!(
            "{} charging, cavity cutoff {}, step {:.4}",
            spec.charge.mode.name(),
            spec.cavity_cutoff(),
            run.summary.dt
        );
        println!(
            "{:>6} {:>10} {:>10} {:>10} {:>10}",
            "t", "delta_e", "ergotropy", "efficiency", "photons"
        );
        for (p, n) in run.series.points.iter().zip(&run.photons).step_by(10) {
            let eff = p.efficiency.map_or(String::from("-"), |e| format!("{e:.4}"));
            println!(
                "{:>6.2} {:>10.4} {:>10.4} {:>10} {:>10.4}",
                p.t, p.delta_e, p.ergotropy, eff, n
            );
        }
        let tau = observables::charging_time(&run.series)?;
        println!("charging time (argmax of delta_e / t): {tau:.2}\n");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
