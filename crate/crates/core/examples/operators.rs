//! Building blocks: the battery Hamiltonian, its embedding next to the
//! cavity, partial traces and Gibbs states.
//!
//! ```bash
//! cargo run --release --example operators
//! ```

use qbattery::hilbert::{self, ComplexOperator, DensityMatrix, Slot};
use qbattery::model::{self, ModelSpec};
use qbattery::observables;

pub fn run() -> qbattery::Result<()> {
    let spec = ModelSpec::new(3).with_hopping(0.5).with_cutoff(4);
    let layout = spec.layout()?;
    println!(
        "N = {}, cavity levels = {}, total dimension = {}",
        layout.n_spins(),
        layout.cavity_dim(),
        layout.total_dim()
    );

    let h_b = model::build_h_battery(&spec)?;
    let ground = model::battery_ground_state(&spec)?;
    println!("battery dimension {}, ground energy {:.6}", h_b.dim(), ground.energy);

    // the cavity number operator lives on the first tensor factor
    let a = hilbert::annihilation(layout.cavity_dim())?;
    let number = ComplexOperator::new(a.adjoint().matrix() * a.matrix())?;
    let sz_middle = hilbert::embed(&hilbert::sigma_z(), Slot::Spin(2), &layout)?;
    let n_full = hilbert::embed(&number, Slot::Cavity, &layout)?;
    println!(
        "embedded a^dag a and sigma_z(2) have dimension {} and {}",
        n_full.dim(),
        sz_middle.dim()
    );

    let rho = model::initial_state(&spec, &layout)?;
    let rho_b = hilbert::partial_trace_cavity(&rho, &layout)?;
    println!(
        "initial state: trace {:.3}, photons {:.3}, purity {:.3}, battery energy {:.6}",
        rho.trace(),
        rho.expectation(&n_full).re,
        rho_b.purity(),
        observables::battery_energy(&rho_b, &h_b)?
    );

    for beta in [0.1, 1.0, 10.0] {
        let gibbs = DensityMatrix::thermal(&h_b, beta)?;
        println!(
            "Gibbs state at beta = {beta:>4}: energy {:.6}, ergotropy {:.2e}",
            observables::battery_energy(&gibbs, &h_b)?,
            observables::ergotropy(&gibbs, &h_b)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
