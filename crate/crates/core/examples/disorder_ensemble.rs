//! Ensemble averages over random onsite disorder, with reproducible
//! per-realization seeds.
//!
//! ```bash
//! cargo run --release --example disorder_ensemble
//! ```

use qbattery::experiments::{disorder_ensemble, realization_seed};
use qbattery::lindblad::EvolutionConfig;
use qbattery::model::ModelSpec;

pub fn run() -> qbattery::Result<()> {
    let template = ModelSpec::new(3).with_hopping(0.3).thermal(0.2);
    let cfg = EvolutionConfig::default();
    println!(
        "seeds of the first realizations: {:#x} {:#x}",
        realization_seed(7, 0),
        realization_seed(7, 1)
    );
    println!(
        "{:>4} {:>12} {:>12} {:>12}",
        "W", "<delta_e>", "<ergotropy>", "std error"
    );
    for w in [0.5, 1.0, 2.0] {
        let result = disorder_ensemble(&template, w, 12, 7, &cfg)?;
        let stats = result.ensemble.expect("more than one realization");
        println!(
            "{w:>4.1} {:>12.6} {:>12.6} {:>12.2e}   ({} of {} converged)",
            stats.delta_e.mean, stats.ergotropy.mean, stats.ergotropy.std_error, stats.successes, stats.realizations
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
