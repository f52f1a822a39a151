//! Exact diagonalization of the battery Hamiltonian and ground-state
//! crossing detection.
//!
//! H_B conserves the number of spin excitations, so away from level
//! crossings the ground state carries an integer excitation label. Crossings
//! are located where that label changes and refined by bisection on J.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_h_battery, ModelSpec};
use crate::observables::{order_parameters, OrderParameters};
use crate::{linalg, C64};

/// Crossing positions are refined until the bracket is narrower than this.
pub const CROSSING_TOL: f64 = 1e-10;

/// Full spectrum of H_B, ascending.
#[derive(Clone, Debug)]
pub struct BatterySpectrum {
    pub energies: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `energies`.
    pub vectors: DMatrix<C64>,
}

impl BatterySpectrum {
    pub fn ground_vector(&self) -> DVector<C64> {
        self.vectors.column(0).into_owned()
    }
}

pub fn battery_spectrum(spec: &ModelSpec) -> Result<BatterySpectrum> {
    if spec.n_spins > 12 {
        return Err(Error::invalid("n_spins", "exact diagonalization is limited to N <= 12"));
    }
    let h = build_h_battery(spec)?;
    let (energies, vectors) = linalg::hermitian_eigen(h.matrix());
    Ok(BatterySpectrum { energies, vectors })
}

/// Mean and variance of the spin excitation number in a normalized state.
pub fn excitation_statistics(v: &DVector<C64>) -> (f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (s, z) in v.iter().enumerate() {
        let p = z.norm_sqr();
        let k = s.count_ones() as f64;
        mean += p * k;
        second += p * k * k;
    }
    (mean, second - mean * mean)
}

fn ground_label(spec: &ModelSpec) -> Result<(usize, BatterySpectrum)> {
    let spectrum = battery_spectrum(spec)?;
    let (mean, _) = excitation_statistics(&spectrum.ground_vector());
    Ok((mean.round() as usize, spectrum))
}

fn at_j(template: &ModelSpec, j: f64) -> ModelSpec {
    let mut spec = template.clone();
    spec.j_hop = j;
    spec
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Bisects on J between two points whose ground labels differ.
fn refine_crossing(template: &ModelSpec, mut lo: f64, mut hi: f64, lo_label: usize) -> Result<f64> {
    while hi - lo > CROSSING_TOL {
        let mid = 0.5 * (lo + hi);
        let (label, _) = ground_label(&at_j(template, mid))?;
        if label == lo_label {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn crossings_from_labels(template: &ModelSpec, grid: &[f64], labels: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for k in 1..grid.len() {
        if labels[k] != labels[k - 1] {
            out.push(refine_crossing(template, grid[k - 1], grid[k], labels[k - 1])?);
        }
    }
    Ok(out)
}

/// Locates ground-state crossings of H_B for J in [j_min, j_max].
pub fn ground_crossings(template: &ModelSpec, j_min: f64, j_max: f64, grid: usize) -> Result<Vec<f64>> {
    if !(j_min < j_max) {
        return Err(Error::invalid(
            "j_range",
            format!("need j_min < j_max, got [{j_min}, {j_max}]"),
        ));
    }
    if grid < 3 {
        return Err(Error::invalid("grid", format!("need at least 3 points, got {grid}")));
    }
    let js = linspace(j_min, j_max, grid);
    let labels = js
        .par_iter()
        .map(|&j| ground_label(&at_j(template, j)).map(|(l, _)| l))
        .collect::<Result<Vec<_>>>()?;
    crossings_from_labels(template, &js, &labels)
}

/// Spectra of H_B along a J grid.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumScan {
    pub j_grid: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
    pub ground_energy: Vec<f64>,
    pub ground_excitations: Vec<usize>,
    pub order: Vec<OrderParameters>,
    pub crossings: Vec<f64>,
}

/// Diagonalizes H_B at every grid point (in parallel) and refines crossings.
pub fn scan_spectrum(template: &ModelSpec, j_grid: &[f64]) -> Result<SpectrumScan> {
    if j_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("j_grid", "must be strictly ascending"));
    }
    let n = template.n_spins;
    let points = j_grid
        .par_iter()
        .map(|&j| {
            let (label, spectrum) = ground_label(&at_j(template, j))?;
            let order = order_parameters(&spectrum.ground_vector(), n)?;
            Ok((label, spectrum.energies, order))
        })
        .collect::<Result<Vec<_>>>()?;
    let ground_excitations: Vec<usize> = points.iter().map(|p| p.0).collect();
    let crossings = crossings_from_labels(template, j_grid, &ground_excitations)?;
    let mut levels = Vec::with_capacity(points.len());
    let mut order = Vec::with_capacity(points.len());
    for (_, energies, op) in points {
        levels.push(energies);
        order.push(op);
    }
    let ground_energy = levels.iter().map(|l| l[0]).collect();
    Ok(SpectrumScan {
        j_grid: j_grid.to_vec(),
        levels,
        ground_energy,
        ground_excitations,
        order,
        crossings,
    })
}

/// Order parameters along a J grid with their discontinuities.
#[derive(Clone, Debug, Serialize)]
pub struct OrderParameterScan {
    pub j_grid: Vec<f64>,
    pub params: Vec<OrderParameters>,
    /// Midpoints of grid intervals where M_z jumps by more than 0.5/N.
    pub discontinuities: Vec<f64>,
    pub crossings: Vec<f64>,
    /// Every discontinuity has a crossing inside its grid interval and vice versa.
    pub consistent: bool,
}

pub fn order_parameter_scan(template: &ModelSpec, j_grid: &[f64]) -> Result<OrderParameterScan> {
    let scan = scan_spectrum(template, j_grid)?;
    let n = template.n_spins as f64;
    let mut discontinuities = Vec::new();
    let mut intervals = Vec::new();
    for k in 1..j_grid.len() {
        if (scan.order[k].m_z - scan.order[k - 1].m_z).abs() > 0.5 / n {
            discontinuities.push(0.5 * (j_grid[k - 1] + j_grid[k]));
            intervals.push((j_grid[k - 1], j_grid[k]));
        }
    }
    let inside = |x: f64| intervals.iter().any(|&(a, b)| a <= x && x <= b);
    let consistent = intervals.len() == scan.crossings.len() && scan.crossings.iter().all(|&c| inside(c));
    Ok(OrderParameterScan {
        j_grid: j_grid.to_vec(),
        params: scan.order,
        discontinuities,
        crossings: scan.crossings,
        consistent,
    })
}
