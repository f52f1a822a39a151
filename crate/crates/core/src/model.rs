//! Physical model: Hamiltonians, dissipators, disorder and the initial state.
//!
//! Units are ħ = k_B = 1. The bath temperature enters only through the mean
//! occupation `n_b`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{annihilation, embed, ComplexOperator, DensityMatrix, Slot, SpaceLayout};
use crate::lindblad::Dissipator;
use crate::spectrum;
use crate::C64;

/// How the cavity is charged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargeMode {
    /// Classical drive on the cavity, plus cavity loss.
    Coherent,
    /// Cavity coupled to a bosonic bath with mean occupation `n_b`.
    Thermal,
    /// Bare cavity loss at zero temperature, no drive.
    None,
}

impl ChargeMode {
    pub fn name(&self) -> &'static str {
        match self {
            ChargeMode::Coherent => "coherent",
            ChargeMode::Thermal => "thermal",
            ChargeMode::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeSpec {
    pub mode: ChargeMode,
    /// Drive amplitude (coherent mode).
    pub f: f64,
    /// Drive detuning ω_d − ω_c (coherent mode).
    pub delta: f64,
    /// Bath mean occupation (thermal mode).
    pub n_b: f64,
}

impl ChargeSpec {
    pub fn none() -> Self {
        Self {
            mode: ChargeMode::None,
            f: 0.0,
            delta: 0.0,
            n_b: 0.0,
        }
    }

    pub fn coherent(f: f64) -> Self {
        Self {
            mode: ChargeMode::Coherent,
            f,
            ..Self::none()
        }
    }

    pub fn thermal(n_b: f64) -> Self {
        Self {
            mode: ChargeMode::Thermal,
            n_b,
            ..Self::none()
        }
    }

    /// Drive strength in the active mode: `f` for coherent, `n_b` for thermal.
    pub fn strength(&self) -> f64 {
        match self.mode {
            ChargeMode::Coherent => self.f,
            ChargeMode::Thermal => self.n_b,
            ChargeMode::None => 0.0,
        }
    }
}

/// Every physical parameter of one battery configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_spins: usize,
    pub omega_a: f64,
    pub omega_c: f64,
    pub g: f64,
    pub j_hop: f64,
    pub kappa: f64,
    pub charge: ChargeSpec,
    /// Onsite offsets δ_i, empty for a clean chain.
    pub disorder: Vec<f64>,
    /// Declared disorder strength W; every δ_i lies in [−W/2, W/2].
    pub disorder_strength: f64,
    /// Fock truncation d_c. `None` picks one from the charge settings.
    pub fock_cutoff: Option<usize>,
}

/// Largest top-level population the automatic cutoff aims for, well under the
/// default runtime guard of 1e-6.
const AUTO_CUTOFF_TAIL: f64 = 2.5e-7;
const MAX_AUTO_CUTOFF: usize = 160;

impl ModelSpec {
    /// A clean chain with ω_a = ω_c = g = κ = 1, no hopping and no charging.
    pub fn new(n_spins: usize) -> Self {
        Self {
            n_spins,
            omega_a: 1.0,
            omega_c: 1.0,
            g: 1.0,
            j_hop: 0.0,
            kappa: 1.0,
            charge: ChargeSpec::none(),
            disorder: Vec::new(),
            disorder_strength: 0.0,
            fock_cutoff: None,
        }
    }

    pub fn with_hopping(mut self, j: f64) -> Self {
        self.j_hop = j;
        self
    }

    pub fn with_charge(mut self, charge: ChargeSpec) -> Self {
        self.charge = charge;
        self
    }

    pub fn coherent(self, f: f64) -> Self {
        self.with_charge(ChargeSpec::coherent(f))
    }

    pub fn thermal(self, n_b: f64) -> Self {
        self.with_charge(ChargeSpec::thermal(n_b))
    }

    pub fn with_cutoff(mut self, d: usize) -> Self {
        self.fock_cutoff = Some(d);
        self
    }

    pub fn with_disorder(mut self, strength: f64, offsets: Vec<f64>) -> Self {
        self.disorder_strength = strength;
        self.disorder = offsets;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 1 {
            return Err(Error::invalid("n_spins", "need at least one spin"));
        }
        for (name, v) in [
            ("omega_a", self.omega_a),
            ("omega_c", self.omega_c),
            ("g", self.g),
            ("j_hop", self.j_hop),
            ("kappa", self.kappa),
            ("f", self.charge.f),
            ("delta", self.charge.delta),
            ("n_b", self.charge.n_b),
            ("disorder_strength", self.disorder_strength),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.kappa < 0.0 {
            return Err(Error::invalid("kappa", format!("{} < 0", self.kappa)));
        }
        if self.charge.f < 0.0 {
            return Err(Error::invalid("f", format!("{} < 0", self.charge.f)));
        }
        if self.charge.n_b < 0.0 {
            return Err(Error::invalid("n_b", format!("{} < 0", self.charge.n_b)));
        }
        if self.disorder_strength < 0.0 {
            return Err(Error::invalid("disorder_strength", "must be nonnegative"));
        }
        if !self.disorder.is_empty() {
            if self.disorder.len() != self.n_spins {
                return Err(Error::invalid(
                    "disorder",
                    format!("{} offsets for {} spins", self.disorder.len(), self.n_spins),
                ));
            }
            let half = self.disorder_strength / 2.0;
            if let Some(d) = self.disorder.iter().find(|d| !d.is_finite() || d.abs() > half) {
                return Err(Error::invalid(
                    "disorder",
                    format!("offset {d} outside [-{half}, {half}]"),
                ));
            }
        }
        if let Some(d) = self.fock_cutoff {
            if d < 2 {
                return Err(Error::invalid("fock_cutoff", format!("{d} < 2")));
            }
        }
        Ok(())
    }

    /// Onsite offset of site `i` (1-based).
    pub fn offset(&self, site: usize) -> f64 {
        self.disorder.get(site - 1).copied().unwrap_or(0.0)
    }

    /// The Fock truncation in use, resolving the automatic choice.
    pub fn cavity_cutoff(&self) -> usize {
        self.fock_cutoff.unwrap_or_else(|| auto_cutoff(self))
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        self.validate()?;
        SpaceLayout::new(self.cavity_cutoff(), self.n_spins)
    }

    /// Frequency of the frame the master equation is written in. Coherent
    /// charging uses the frame co-rotating with the cavity at ω_c, where the
    /// resonant drive is time independent; other modes stay in the lab frame.
    pub fn frame_frequency(&self) -> f64 {
        match self.charge.mode {
            ChargeMode::Coherent => self.omega_c,
            _ => 0.0,
        }
    }
}

/// Smallest d_c whose uncoupled cavity steady state leaves less than
/// `AUTO_CUTOFF_TAIL` in the top level, padded by the number of spins.
fn auto_cutoff(spec: &ModelSpec) -> usize {
    let n = spec.n_spins;
    let top = match spec.charge.mode {
        ChargeMode::None => 0,
        ChargeMode::Thermal => {
            let nb = spec.charge.n_b;
            if nb <= 0.0 {
                0
            } else {
                let ratio = nb / (nb + 1.0);
                let mut p = 1.0 / (nb + 1.0);
                let mut k = 0;
                while p > AUTO_CUTOFF_TAIL && k < MAX_AUTO_CUTOFF {
                    p *= ratio;
                    k += 1;
                }
                k
            }
        }
        ChargeMode::Coherent => {
            let denom = spec.charge.delta.powi(2) + spec.kappa.powi(2) / 4.0;
            let mean = if denom > 0.0 {
                spec.charge.f.powi(2) / denom
            } else {
                // no damped fixed point; size for a few photons per unit drive
                4.0 * spec.charge.f.powi(2)
            };
            poisson_tail_index(mean, AUTO_CUTOFF_TAIL)
        }
    };
    (top + n + 1).clamp(2, MAX_AUTO_CUTOFF)
}

fn poisson_tail_index(mean: f64, tail: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    // pmf via log recursion to stay finite for large means
    let mut log_p = -mean;
    let mut k = 0usize;
    while (k as f64) < mean || log_p > tail.ln() {
        k += 1;
        log_p += mean.ln() - (k as f64).ln();
        if k >= MAX_AUTO_CUTOFF {
            break;
        }
    }
    k
}

/// H_A = ω_c c†c on the full space.
pub fn build_h_cavity(spec: &ModelSpec, layout: &SpaceLayout) -> Result<ComplexOperator> {
    check_layout(spec, layout)?;
    let ds = layout.spin_dim();
    let diag: Vec<f64> = (0..layout.total_dim())
        .map(|k| spec.omega_c * (k / ds) as f64)
        .collect();
    Ok(ComplexOperator::from_real_diagonal(&diag))
}

/// H_B on the 2^N spin space: ω_a Σ (1+δ_i) σ₊σ₋ + J Σ_{i<N} (σ₊^i σ₋^{i+1} + h.c.),
/// open boundary.
pub fn build_h_battery(spec: &ModelSpec) -> Result<ComplexOperator> {
    spec.validate()?;
    let n = spec.n_spins;
    let dim = 1usize << n;
    let mask = |site: usize| 1usize << (n - site);
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for s in 0..dim {
        let onsite: f64 = (1..=n)
            .filter(|&i| s & mask(i) != 0)
            .map(|i| spec.omega_a * (1.0 + spec.offset(i)))
            .sum();
        m[(s, s)] = C64::new(onsite, 0.0);
        if spec.j_hop != 0.0 {
            for i in 1..n {
                let (a, b) = (mask(i), mask(i + 1));
                // σ₊^i σ₋^{i+1}: site i+1 excited, site i empty -> swap
                if s & a == 0 && s & b != 0 {
                    let t = (s | a) & !b;
                    m[(t, s)] += C64::new(spec.j_hop, 0.0);
                    m[(s, t)] += C64::new(spec.j_hop, 0.0);
                }
            }
        }
    }
    Ok(ComplexOperator::from_matrix_unchecked(m))
}

/// H_I = g Σ_i (σ₊^i c + σ₋^i c†) on the full space.
pub fn build_h_interaction(spec: &ModelSpec, layout: &SpaceLayout) -> Result<ComplexOperator> {
    check_layout(spec, layout)?;
    let dim = layout.total_dim();
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    if spec.g != 0.0 {
        for fock in 1..layout.cavity_dim() {
            let amp = spec.g * (fock as f64).sqrt();
            for s in 0..layout.spin_dim() {
                for site in 1..=spec.n_spins {
                    let bit = layout.site_mask(site);
                    if s & bit == 0 {
                        let from = layout.index(fock, s);
                        let to = layout.index(fock - 1, s | bit);
                        m[(to, from)] = C64::new(amp, 0.0);
                        m[(from, to)] = C64::new(amp, 0.0);
                    }
                }
            }
        }
    }
    Ok(ComplexOperator::from_matrix_unchecked(m))
}

/// H_S = H_A + H_B + H_I on the full space (lab frame, no drive).
pub fn build_h_system(spec: &ModelSpec, layout: &SpaceLayout) -> Result<ComplexOperator> {
    let h_a = build_h_cavity(spec, layout)?;
    let h_b = crate::hilbert::embed_spins(&build_h_battery(spec)?, layout)?;
    let h_i = build_h_interaction(spec, layout)?;
    Ok(&(&h_a + &h_b) + &h_i)
}

/// Drive term f(e^{−iδt} c† + e^{iδt} c); time independent when δ = 0.
pub fn build_h_drive(spec: &ModelSpec, layout: &SpaceLayout, t: f64) -> Result<ComplexOperator> {
    check_layout(spec, layout)?;
    if spec.charge.mode != ChargeMode::Coherent {
        return Err(Error::NoDrive {
            mode: spec.charge.mode.name(),
        });
    }
    let c = embed(&annihilation(layout.cavity_dim())?, Slot::Cavity, layout)?;
    let phase = C64::from_polar(1.0, -spec.charge.delta * t);
    let drive = &c.adjoint().scaled_complex(phase) + &c.scaled_complex(phase.conj());
    Ok(drive.scaled(spec.charge.f))
}

/// Total excitation number c†c + Σ σ₊σ₋ on the full space.
pub fn excitation_number(layout: &SpaceLayout) -> ComplexOperator {
    let diag: Vec<f64> = (0..layout.total_dim())
        .map(|k| {
            let (fock, s) = layout.split_index(k);
            (fock + s.count_ones() as usize) as f64
        })
        .collect();
    ComplexOperator::from_real_diagonal(&diag)
}

/// Σ σ₊σ₋ on the 2^N spin space.
pub fn spin_excitation_number(n_spins: usize) -> ComplexOperator {
    let diag: Vec<f64> = (0..1usize << n_spins).map(|s| s.count_ones() as f64).collect();
    ComplexOperator::from_real_diagonal(&diag)
}

/// Hamiltonian that generates the dynamics at time `t`, in the frame given by
/// [`ModelSpec::frame_frequency`]: H_S − ω_frame N_exc (+ drive in coherent mode).
pub fn build_generator(spec: &ModelSpec, layout: &SpaceLayout, t: f64) -> Result<ComplexOperator> {
    let mut h = build_h_system(spec, layout)?;
    let w = spec.frame_frequency();
    if w != 0.0 {
        h = &h - &excitation_number(layout).scaled(w);
    }
    if spec.charge.mode == ChargeMode::Coherent {
        h = &h + &build_h_drive(spec, layout, t)?;
    }
    Ok(h)
}

/// Cavity jump operators: κ(n_B+1) on c and κ n_B on c† in thermal mode,
/// κ on c otherwise.
pub fn build_dissipators(spec: &ModelSpec, layout: &SpaceLayout) -> Result<Vec<Dissipator>> {
    check_layout(spec, layout)?;
    let c = embed(&annihilation(layout.cavity_dim())?, Slot::Cavity, layout)?;
    let mut out = Vec::new();
    match spec.charge.mode {
        ChargeMode::Thermal => {
            let nb = spec.charge.n_b;
            out.push(Dissipator::new(c.clone(), spec.kappa * (nb + 1.0))?);
            if nb > 0.0 {
                out.push(Dissipator::new(c.adjoint(), spec.kappa * nb)?);
            }
        }
        _ => out.push(Dissipator::new(c, spec.kappa)?),
    }
    out.retain(|d| d.rate > 0.0);
    Ok(out)
}

/// Lowest eigenvector of H_B with its energy.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub vector: DVector<C64>,
    /// Gap to the next level; zero (up to rounding) at a level crossing.
    pub gap: f64,
}

impl GroundState {
    pub fn is_degenerate(&self) -> bool {
        self.gap < 1e-10
    }
}

/// Ground state of H_B. At an exact degeneracy the first vector in solver
/// order is kept and a warning is logged.
pub fn battery_ground_state(spec: &ModelSpec) -> Result<GroundState> {
    let spectrum = spectrum::battery_spectrum(spec)?;
    let energy = spectrum.energies[0];
    let gap = spectrum.energies.get(1).map_or(f64::INFINITY, |e| e - energy);
    let mut vector = spectrum.vectors.column(0).into_owned();
    // drop rounding-level amplitudes so sector structure is exact
    for z in vector.iter_mut() {
        if z.norm() < 1e-12 {
            *z = C64::new(0.0, 0.0);
        }
    }
    let norm = vector.norm();
    vector /= C64::new(norm, 0.0);
    let ground = GroundState { energy, vector, gap };
    if ground.is_degenerate() {
        warn!(
            "battery ground state is degenerate (gap {:.2e}) at J = {}; using first eigenvector",
            gap, spec.j_hop
        );
    }
    Ok(ground)
}

/// |0⟩_A⟨0| ⊗ |g⟩_B⟨g|
pub fn initial_state(spec: &ModelSpec, layout: &SpaceLayout) -> Result<DensityMatrix> {
    check_layout(spec, layout)?;
    let ground = battery_ground_state(spec)?;
    let mut psi = DVector::zeros(layout.total_dim());
    for (s, amp) in ground.vector.iter().enumerate() {
        psi[layout.index(0, s)] = *amp;
    }
    DensityMatrix::pure(&psi)
}

/// `n` offsets drawn uniformly from [−w/2, w/2] with a seeded ChaCha8 stream.
pub fn sample_disorder(w: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_disorder_with(&mut rng, w, n)
}

/// Same as [`sample_disorder`] with a caller-owned generator.
pub fn sample_disorder_with<R: Rng>(rng: &mut R, w: f64, n: usize) -> Result<Vec<f64>> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::invalid(
            "disorder_strength",
            format!("{w} is not a valid strength"),
        ));
    }
    if w == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let half = w / 2.0;
    Ok((0..n).map(|_| rng.gen_range(-half..=half)).collect())
}

fn check_layout(spec: &ModelSpec, layout: &SpaceLayout) -> Result<()> {
    spec.validate()?;
    if layout.n_spins() != spec.n_spins {
        return Err(Error::DimensionMismatch {
            expected: spec.n_spins,
            got: layout.n_spins(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{embed_spins, sigma_minus, sigma_plus, spin_site_operator, tensor};

    fn layout_for(spec: &ModelSpec) -> SpaceLayout {
        spec.layout().unwrap()
    }

    #[test]
    fn cavity_hamiltonian_is_number_operator() {
        let spec = ModelSpec::new(1).with_cutoff(3);
        let layout = layout_for(&spec);
        let h = build_h_cavity(&spec, &layout).unwrap();
        let expected = tensor(
            &ComplexOperator::from_real_diagonal(&[0.0, 1.0, 2.0]),
            &ComplexOperator::identity(2),
        );
        assert_eq!(h, expected);

        let mut zero = spec.clone();
        zero.omega_c = 0.0;
        assert_eq!(build_h_cavity(&zero, &layout).unwrap().max_abs(), 0.0);

        // vacuum expectation vanishes
        let rho = initial_state(&spec, &layout).unwrap();
        assert_eq!(rho.expectation(&h).norm(), 0.0);
    }

    #[test]
    fn battery_hamiltonian_two_sites_matches_kron_assembly() {
        let spec = ModelSpec::new(2).with_hopping(0.5);
        let h = build_h_battery(&spec).unwrap();
        let sp = |i| spin_site_operator(&sigma_plus(), i, 2).unwrap();
        let sm = |i| spin_site_operator(&sigma_minus(), i, 2).unwrap();
        let onsite = &(&sp(1) * &sm(1)) + &(&sp(2) * &sm(2));
        let hop = &(&sp(1) * &sm(2)) + &(&sp(2) * &sm(1));
        let oracle = &onsite + &hop.scaled(0.5);
        assert!((&h - &oracle).max_abs() < 1e-15);
        let expected = ComplexOperator::from_real_rows(
            4,
            &[
                0.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.5, 0.0, //
                0.0, 0.5, 1.0, 0.0, //
                0.0, 0.0, 0.0, 2.0,
            ],
        )
        .unwrap();
        assert_eq!(h, expected);
    }

    #[test]
    fn battery_hamiltonian_noninteracting_counts_excitations() {
        let spec = ModelSpec::new(3);
        let h = build_h_battery(&spec).unwrap();
        for s in 0..8usize {
            assert_eq!(h.matrix()[(s, s)].re, s.count_ones() as f64);
        }
        assert_eq!((&h - &spin_excitation_number(3)).max_abs(), 0.0);
    }

    #[test]
    fn battery_hamiltonian_conserves_excitations() {
        for j in [0.3, 1.0, 2.7] {
            let spec = ModelSpec::new(3).with_hopping(j);
            let h = build_h_battery(&spec).unwrap();
            assert!(h.is_hermitian(1e-15));
            assert!(h.commutator(&spin_excitation_number(3)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn disorder_enters_onsite_only() {
        let spec = ModelSpec::new(2).with_hopping(0.4).with_disorder(0.5, vec![0.2, -0.1]);
        let h = build_h_battery(&spec).unwrap();
        assert!((h.matrix()[(0b10, 0b10)].re - 1.2).abs() < 1e-15);
        assert!((h.matrix()[(0b01, 0b01)].re - 0.9).abs() < 1e-15);
        assert!((h.matrix()[(0b11, 0b11)].re - 2.1).abs() < 1e-15);
        assert_eq!(h.matrix()[(0b01, 0b10)].re, 0.4);
    }

    #[test]
    fn interaction_single_spin_element() {
        let spec = ModelSpec::new(1).with_cutoff(2);
        let layout = layout_for(&spec);
        let h = build_h_interaction(&spec, &layout).unwrap();
        let bra = layout.index(0, 1);
        let ket = layout.index(1, 0);
        assert_eq!(h.matrix()[(bra, ket)], C64::new(1.0, 0.0));

        let mut off = spec.clone();
        off.g = 0.0;
        assert_eq!(build_h_interaction(&off, &layout).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn interaction_matches_embedded_operators() {
        let spec = ModelSpec::new(2).with_cutoff(3);
        let layout = layout_for(&spec);
        let h = build_h_interaction(&spec, &layout).unwrap();
        let c = embed(&annihilation(3).unwrap(), Slot::Cavity, &layout).unwrap();
        let mut oracle = ComplexOperator::zeros(layout.total_dim());
        for i in 1..=2 {
            let sp = embed(&sigma_plus(), Slot::Spin(i), &layout).unwrap();
            let term = &sp * &c;
            oracle = &(&oracle + &term) + &term.adjoint();
        }
        assert!((&h - &oracle).max_abs() < 1e-14);
    }

    #[test]
    fn system_hamiltonian_conserves_total_excitations() {
        let spec = ModelSpec::new(3).with_hopping(0.8).with_cutoff(4);
        let layout = layout_for(&spec);
        let h = build_h_system(&spec, &layout).unwrap();
        assert!(h.is_hermitian(1e-12));
        assert!(h.commutator(&excitation_number(&layout)).max_abs() < 1e-12);
        let hi = build_h_interaction(&spec, &layout).unwrap();
        assert!(hi.commutator(&excitation_number(&layout)).max_abs() < 1e-12);
    }

    #[test]
    fn drive_resonant_and_detuned() {
        let spec = ModelSpec::new(1).coherent(2.0).with_cutoff(4);
        let layout = layout_for(&spec);
        let c = embed(&annihilation(4).unwrap(), Slot::Cavity, &layout).unwrap();
        let expected = (&c + &c.adjoint()).scaled(2.0);
        for t in [0.0, 0.7, 13.0] {
            let h = build_h_drive(&spec, &layout, t).unwrap();
            assert!((&h - &expected).max_abs() < 1e-15);
        }

        let mut detuned = spec.clone();
        detuned.charge.delta = 0.3;
        let period = 2.0 * std::f64::consts::PI / 0.3;
        for t in [0.0, 1.1, 5.0] {
            let a = build_h_drive(&detuned, &layout, t).unwrap();
            let b = build_h_drive(&detuned, &layout, t + period).unwrap();
            assert!((&a - &b).max_abs() < 1e-12);
            assert!(a.is_hermitian(1e-15));
        }

        let zero = ModelSpec::new(1).coherent(0.0).with_cutoff(4);
        assert_eq!(build_h_drive(&zero, &layout, 1.0).unwrap().max_abs(), 0.0);

        let thermal = ModelSpec::new(1).thermal(1.0).with_cutoff(4);
        assert!(matches!(
            build_h_drive(&thermal, &layout, 0.0),
            Err(Error::NoDrive { .. })
        ));
    }

    #[test]
    fn initial_state_clean_chain() {
        let spec = ModelSpec::new(3).with_cutoff(3);
        let layout = layout_for(&spec);
        let rho = initial_state(&spec, &layout).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        assert_eq!(rho.matrix()[(0, 0)], C64::new(1.0, 0.0));
        let ground = battery_ground_state(&spec).unwrap();
        assert_eq!(ground.energy, 0.0);
    }

    #[test]
    fn initial_state_with_hopping() {
        let spec = ModelSpec::new(3).with_hopping(1.0).with_cutoff(3);
        let layout = layout_for(&spec);
        let ground = battery_ground_state(&spec).unwrap();
        assert!((ground.energy - (1.0 - 2f64.sqrt())).abs() < 1e-12);
        let rho = initial_state(&spec, &layout).unwrap();
        let sq = rho.matrix() * rho.matrix();
        assert!(linalg_max(&(sq - rho.matrix())) < 1e-12);
        let hb = embed_spins(&build_h_battery(&spec).unwrap(), &layout).unwrap();
        let e = rho.expectation(&hb).re;
        assert!((e - ground.energy).abs() < 1e-10);
    }

    fn linalg_max(m: &DMatrix<C64>) -> f64 {
        crate::linalg::max_abs(m)
    }

    #[test]
    fn dissipators_per_mode() {
        let spec = ModelSpec::new(1).thermal(2.0).with_cutoff(3);
        let layout = layout_for(&spec);
        let d = build_dissipators(&spec, &layout).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].rate, 3.0);
        assert_eq!(d[1].rate, 2.0);
        let spec = ModelSpec::new(1).coherent(2.0).with_cutoff(3);
        assert_eq!(build_dissipators(&spec, &layout).unwrap().len(), 1);
        let mut closed = spec.clone();
        closed.kappa = 0.0;
        assert!(build_dissipators(&closed, &layout).unwrap().is_empty());
    }

    #[test]
    fn disorder_sampling() {
        assert_eq!(sample_disorder(0.0, 4, 9).unwrap(), vec![0.0; 4]);
        assert_eq!(
            sample_disorder(0.7, 5, 42).unwrap(),
            sample_disorder(0.7, 5, 42).unwrap()
        );
        assert_ne!(
            sample_disorder(0.7, 5, 42).unwrap(),
            sample_disorder(0.7, 5, 43).unwrap()
        );
        let n = 100_000;
        let draws = sample_disorder(1.0, n, 7).unwrap();
        assert!(draws.iter().all(|d| d.abs() <= 0.5));
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * (1.0 / (12.0 * n as f64).sqrt()));
        assert!(sample_disorder(-1.0, 3, 0).is_err());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = ModelSpec::new(2);
        s.kappa = -1.0;
        assert!(s.validate().is_err());
        let s = ModelSpec::new(2).with_disorder(0.2, vec![0.05]);
        assert!(s.validate().is_err());
        let s = ModelSpec::new(2).with_disorder(0.2, vec![0.05, 0.3]);
        assert!(s.validate().is_err());
        let s = ModelSpec::new(2).with_cutoff(1);
        assert!(s.validate().is_err());
        assert!(ModelSpec::new(0).validate().is_err());
    }

    #[test]
    fn auto_cutoff_tracks_charge_strength() {
        let none = ModelSpec::new(3);
        assert_eq!(none.cavity_cutoff(), 4);
        let weak = ModelSpec::new(3).thermal(0.2);
        let strong = ModelSpec::new(3).thermal(2.0);
        assert!(weak.cavity_cutoff() < strong.cavity_cutoff());
        let f2 = ModelSpec::new(1).coherent(2.0);
        // mean photon number 16 needs a tail well past 16
        assert!(f2.cavity_cutoff() > 35);
    }
}
