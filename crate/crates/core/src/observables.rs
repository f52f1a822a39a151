//! Figures of merit of the battery: stored energy, ergotropy, efficiency,
//! charging power and time, and ground-state order parameters.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{ComplexOperator, DensityMatrix};
use crate::{linalg, C64};

/// Below this stored energy (in units of ω_a) the efficiency is undefined.
pub const EFFICIENCY_FLOOR: f64 = 1e-9;

/// Populations down to this value are treated as rounding noise and clamped.
pub const POSITIVITY_TOL: f64 = 1e-7;

/// Battery observables at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySnapshot {
    pub t: f64,
    pub energy_e_b: f64,
    pub delta_e: f64,
    pub ergotropy: f64,
    /// `None` while the stored energy is below [`EFFICIENCY_FLOOR`].
    pub efficiency: Option<f64>,
    /// `None` at t = 0.
    pub power: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub points: Vec<BatterySnapshot>,
}

impl TimeSeries {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn delta_e(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta_e).collect()
    }

    pub fn ergotropy(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.ergotropy).collect()
    }

    pub fn last(&self) -> Option<&BatterySnapshot> {
        self.points.last()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderParameters {
    /// ⟨S_z⟩_g / N
    pub m_z: f64,
    /// ⟨S_z²⟩_g / N²
    pub xi_z: f64,
}

/// Re tr[H_B ρ_B]
pub fn battery_energy(rho_b: &DensityMatrix, h_b: &ComplexOperator) -> Result<f64> {
    if rho_b.dim() != h_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: h_b.dim(),
            got: rho_b.dim(),
        });
    }
    let e = rho_b.expectation(h_b);
    if e.im.abs() > 1e-10 {
        return Err(Error::NotHermitian { defect: e.im.abs() });
    }
    Ok(e.re)
}

/// Maximum work extractable by a unitary: E − Σ r_n e_n with the state's
/// eigenvalues descending and the Hamiltonian's ascending.
pub fn ergotropy(rho_b: &DensityMatrix, h_b: &ComplexOperator) -> Result<f64> {
    if rho_b.dim() != h_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: h_b.dim(),
            got: rho_b.dim(),
        });
    }
    let levels = linalg::hermitian_eigenvalues(h_b.matrix());
    ergotropy_with_levels(rho_b, h_b, &levels)
}

/// [`ergotropy`] with the ascending spectrum of `h_b` supplied by the caller.
pub fn ergotropy_with_levels(rho_b: &DensityMatrix, h_b: &ComplexOperator, levels: &[f64]) -> Result<f64> {
    let (pops, vectors) = linalg::hermitian_eigen(rho_b.matrix());
    let min = pops.first().copied().unwrap_or(0.0);
    if min < -POSITIVITY_TOL {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    let clamped: Vec<f64> = pops.iter().map(|&p| p.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(Error::NotNormalized { trace: total });
    }
    // energy of the clamped state, so both terms see the same populations
    let mut energy = 0.0;
    for (k, p) in clamped.iter().enumerate() {
        if *p > 0.0 {
            let v = vectors.column(k).into_owned();
            energy += p / total * h_b.expectation_in(&v).re;
        }
    }
    let passive: f64 = clamped.iter().rev().zip(levels).map(|(r, e)| r / total * e).sum();
    let work = energy - passive;
    Ok(if (-1e-10..0.0).contains(&work) { 0.0 } else { work })
}

/// R_B = ε_B / ΔE, undefined when ΔE is below [`EFFICIENCY_FLOOR`].
pub fn efficiency(delta_e: f64, ergotropy: f64) -> Option<f64> {
    (delta_e >= EFFICIENCY_FLOOR).then(|| ergotropy / delta_e)
}

/// P_B = ΔE / t
pub fn charging_power(delta_e: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", format!("charging power needs t > 0, got {t}")));
    }
    Ok(delta_e / t)
}

/// Time of maximal charging power over the samples with t > 0. Ties go to
/// the earliest sample.
pub fn charging_time(series: &TimeSeries) -> Result<f64> {
    let times = series.times();
    charging_time_of(&times, &series.delta_e())
}

/// [`charging_time`] on bare arrays.
pub fn charging_time_of(times: &[f64], delta_e: &[f64]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&t, &de) in times.iter().zip(delta_e) {
        if t <= 0.0 {
            continue;
        }
        let p = de / t;
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((t, p));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::EmptySeries)
}

/// M_z and ξ_z of a normalized spin-chain state with σ_z = diag(−1, +1).
pub fn order_parameters(ground: &DVector<C64>, n: usize) -> Result<OrderParameters> {
    if ground.len() != 1 << n {
        return Err(Error::DimensionMismatch {
            expected: 1 << n,
            got: ground.len(),
        });
    }
    let norm2 = ground.norm_squared();
    if (norm2 - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { trace: norm2 });
    }
    let nf = n as f64;
    let (mut sz, mut sz2) = (0.0, 0.0);
    for (s, z) in ground.iter().enumerate() {
        let p = z.norm_sqr();
        let m = 2.0 * s.count_ones() as f64 - nf;
        sz += p * m;
        sz2 += p * m * m;
    }
    Ok(OrderParameters {
        m_z: sz / nf,
        xi_z: sz2 / (nf * nf),
    })
}

/// H_B together with its spectrum and ground energy, reused across samples.
#[derive(Clone, Debug)]
pub struct BatteryReference {
    pub h_b: ComplexOperator,
    pub levels: Vec<f64>,
    pub ground_energy: f64,
}

impl BatteryReference {
    pub fn new(h_b: ComplexOperator) -> Self {
        let levels = linalg::hermitian_eigenvalues(h_b.matrix());
        let ground_energy = levels[0];
        Self {
            h_b,
            levels,
            ground_energy,
        }
    }

    pub fn snapshot(&self, t: f64, rho_b: &DensityMatrix) -> Result<BatterySnapshot> {
        let energy_e_b = battery_energy(rho_b, &self.h_b)?;
        let delta_e = energy_e_b - self.ground_energy;
        let ergotropy = ergotropy_with_levels(rho_b, &self.h_b, &self.levels)?;
        Ok(BatterySnapshot {
            t,
            energy_e_b,
            delta_e,
            ergotropy,
            efficiency: efficiency(delta_e, ergotropy),
            power: (t > 0.0).then(|| delta_e / t),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_h_battery, ModelSpec};
    use crate::spectrum::battery_spectrum;

    fn diag_state(p: &[f64]) -> DensityMatrix {
        DensityMatrix::new(ComplexOperator::from_real_diagonal(p)).unwrap()
    }

    #[test]
    fn energy_examples() {
        let spec = ModelSpec::new(2).with_hopping(0.5);
        let h = build_h_battery(&spec).unwrap();
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!((battery_energy(&mixed, &h).unwrap() - 1.0).abs() < 1e-15);

        let s = battery_spectrum(&spec).unwrap();
        let g = DensityMatrix::pure(&s.ground_vector()).unwrap();
        assert!((battery_energy(&g, &h).unwrap() - s.energies[0]).abs() < 1e-12);

        let h1 = ComplexOperator::from_real_diagonal(&[0.0, 1.0]);
        assert_eq!(battery_energy(&diag_state(&[0.0, 1.0]), &h1).unwrap(), 1.0);
        assert!(battery_energy(&diag_state(&[0.5, 0.5]), &h).is_err());
    }

    #[test]
    fn ergotropy_examples() {
        let h = ComplexOperator::from_real_diagonal(&[0.0, 1.0]);
        // brute force over both orderings: min(0.3*0+0.7*1, 0.7*0+0.3*1) = 0.3
        let e = ergotropy(&diag_state(&[0.3, 0.7]), &h).unwrap();
        assert!((e - 0.4).abs() < 1e-12);
        assert!((ergotropy(&diag_state(&[0.0, 1.0]), &h).unwrap() - 1.0).abs() < 1e-12);
        let h2 = ComplexOperator::from_real_diagonal(&[0.0, 2.5]);
        assert!((ergotropy(&diag_state(&[0.0, 1.0]), &h2).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(ergotropy(&diag_state(&[0.8, 0.2]), &h).unwrap(), 0.0);
    }

    #[test]
    fn ergotropy_of_gibbs_states_vanishes() {
        let h = build_h_battery(&ModelSpec::new(3).with_hopping(0.9)).unwrap();
        for beta in [0.1, 1.0, 7.0] {
            let rho = DensityMatrix::thermal(&h, beta).unwrap();
            assert!(ergotropy(&rho, &h).unwrap() < 1e-10);
        }
    }

    #[test]
    fn ergotropy_rejects_non_positive_states() {
        let h = ComplexOperator::from_real_diagonal(&[0.0, 1.0]);
        let bad = DensityMatrix::new_unchecked(ComplexOperator::from_real_diagonal(&[1.1, -0.1]));
        assert!(matches!(ergotropy(&bad, &h), Err(Error::NotPositive { .. })));
        // rounding-level negativity is clamped
        let tiny = DensityMatrix::new_unchecked(ComplexOperator::from_real_diagonal(&[1e-8 - 0.0, 1.0 - 1e-8]));
        assert!(ergotropy(&tiny, &h).unwrap() > 0.99);
        let noisy = DensityMatrix::new_unchecked(ComplexOperator::from_real_diagonal(&[-5e-8, 1.0 + 5e-8]));
        assert!((ergotropy(&noisy, &h).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ergotropy_insensitive_to_degenerate_relabeling() {
        // H with a degenerate pair; rotate the degenerate block of the state
        let h = ComplexOperator::from_real_diagonal(&[0.0, 1.0, 1.0, 2.0]);
        let p = [0.1, 0.5, 0.15, 0.25];
        let a = ergotropy(&diag_state(&p), &h).unwrap();
        let swapped = diag_state(&[0.1, 0.15, 0.5, 0.25]);
        let b = ergotropy(&swapped, &h).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn efficiency_and_power() {
        assert_eq!(efficiency(0.3, 0.3), Some(1.0));
        assert_eq!(efficiency(0.0, 0.0), None);
        assert_eq!(efficiency(0.5, 0.0), Some(0.0));
        assert_eq!(charging_power(2.0, 4.0).unwrap(), 0.5);
        assert!(charging_power(1.0, 0.0).is_err());
        assert!(charging_power(1.0, -1.0).is_err());
    }

    #[test]
    fn charging_time_of_saturating_curve() {
        // (1 − e^{−t})/t is strictly decreasing, so the power peaks at the first positive sample
        let dt = 1e-3;
        let times: Vec<f64> = (0..10_000).map(|k| k as f64 * dt).collect();
        let de: Vec<f64> = times.iter().map(|t| 1.0 - (-t).exp()).collect();
        assert_eq!(charging_time_of(&times, &de).unwrap(), dt);
        // t e^{−t} − (1 − e^{−t}) < 0 for every t > 0, so the stationarity condition has no root
        for k in 1..200 {
            let t = k as f64 * 0.05;
            assert!(t * (-t).exp() < 1.0 - (-t).exp());
        }
    }

    #[test]
    fn charging_time_of_squared_saturating_curve() {
        // (1 − e^{−t})²/t peaks where 2t = e^t − 1; Newton oracle
        let mut root = 1.5f64;
        for _ in 0..50 {
            let f = root.exp() - 1.0 - 2.0 * root;
            root -= f / (root.exp() - 2.0);
        }
        let dt = 1e-3;
        let times: Vec<f64> = (0..10_000).map(|k| k as f64 * dt).collect();
        let de: Vec<f64> = times.iter().map(|t| (1.0 - (-t).exp()).powi(2)).collect();
        let tau = charging_time_of(&times, &de).unwrap();
        assert!((tau - root).abs() <= dt, "{tau} vs {root}");
    }

    #[test]
    fn charging_time_ties_go_earliest() {
        let times: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
        let series = TimeSeries {
            points: times
                .iter()
                .map(|&t| BatterySnapshot {
                    t,
                    energy_e_b: t,
                    delta_e: t,
                    ergotropy: 0.0,
                    efficiency: None,
                    power: None,
                })
                .collect(),
        };
        assert_eq!(charging_time(&series).unwrap(), 0.5);
        assert!(matches!(charging_time(&TimeSeries::default()), Err(Error::EmptySeries)));
    }

    #[test]
    fn order_parameters_examples() {
        for n in 1..=5 {
            let mut v = DVector::zeros(1 << n);
            v[0] = C64::new(1.0, 0.0);
            let op = order_parameters(&v, n).unwrap();
            assert_eq!(op.m_z, -1.0);
            assert_eq!(op.xi_z, 1.0);
        }
        let s = battery_spectrum(&ModelSpec::new(3).with_hopping(1.0)).unwrap();
        let op = order_parameters(&s.ground_vector(), 3).unwrap();
        assert!((op.m_z + 1.0 / 3.0).abs() < 1e-12);
        assert!((op.xi_z - 1.0 / 9.0).abs() < 1e-12);
        let unnormalized = DVector::from_element(8, C64::new(1.0, 0.0));
        assert!(order_parameters(&unnormalized, 3).is_err());
    }

    #[test]
    fn snapshot_at_ground_is_empty() {
        let spec = ModelSpec::new(2).with_hopping(1.2);
        let reference = BatteryReference::new(build_h_battery(&spec).unwrap());
        let g = DensityMatrix::pure(&battery_spectrum(&spec).unwrap().ground_vector()).unwrap();
        let snap = reference.snapshot(0.0, &g).unwrap();
        assert!(snap.delta_e.abs() < 1e-12);
        assert!(snap.ergotropy.abs() < 1e-12);
        assert_eq!(snap.efficiency, None);
        assert_eq!(snap.power, None);
    }
}
