//! Ergotropy of a few hand-made battery states: passive states hold none,
//! population inversion holds everything above the ground energy, and
//! coherences add extractable work on top of populations.
//!
//! ```bash
//! cargo run --release --example ergotropy
//! ```

use nalgebra::DVector;
use qbattery::hilbert::{ComplexOperator, DensityMatrix};
use qbattery::model::{self, ModelSpec};
use qbattery::observables;
use qbattery::C64;

fn report(label: &str, rho: &DensityMatrix, h: &ComplexOperator) -> qbattery::Result<()> {
    let energy = observables::battery_energy(rho, h)?;
    let w = observables::ergotropy(rho, h)?;
    let eff = observables::efficiency(energy, w).map_or("undefined".to_string(), |e| format!("{e:.4}"));
    println!("{label:<28} energy {energy:>8.4}  ergotropy {w:>8.4}  efficiency {eff}");
    Ok(())
}

pub fn run() -> qbattery::Result<()> {
    let spec = ModelSpec::new(2).with_hopping(0.3);
    let h = model::build_h_battery(&spec)?;
    let dim = h.dim();

    let ground = model::battery_ground_state(&spec)?;
    report("ground state", &DensityMatrix::pure(&ground.vector)?, &h)?;
    report("maximally mixed", &DensityMatrix::maximally_mixed(dim), &h)?;
    report("Gibbs, beta = 1", &DensityMatrix::thermal(&h, 1.0)?, &h)?;

    // both spins up: the top level of H_B
    let mut up = DVector::zeros(dim);
    up[dim - 1] = C64::new(1.0, 0.0);
    report("fully inverted", &DensityMatrix::pure(&up)?, &h)?;

    // equal mixture of |00> and |11> versus their superposition
    let mixed = ComplexOperator::from_real_diagonal(&[0.5, 0.0, 0.0, 0.5]);
    report("mixture of |00> and |11>", &DensityMatrix::new(mixed)?, &h)?;
    let mut plus = DVector::zeros(dim);
    plus[0] = C64::new(0.5f64.sqrt(), 0.0);
    plus[dim - 1] = C64::new(0.5f64.sqrt(), 0.0);
    report("superposition of the two", &DensityMatrix::pure(&plus)?, &h)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
