//! Charging experiments: single trajectories, steady-state sweeps over N and
//! J, disorder ensembles and charging-time scans.
//!
//! Sweep points run in parallel on the current rayon pool. Results are always
//! collected in input order, so output does not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::{self, EvolutionConfig, EvolutionSummary, SteadyMethod};
use crate::model::{self, ChargeMode, ModelSpec};
use crate::observables::{self, BatteryReference, TimeSeries};
use crate::spectrum;

/// Largest joint Hilbert-space dimension a sweep point may use.
pub const MAX_TOTAL_DIM: usize = 2048;

/// Horizon multiplier for steady-state searches under weak charging.
pub const WEAK_CHARGING_FACTOR: f64 = 5.0;

/// Default number of disorder realizations.
pub const DEFAULT_REALIZATIONS: usize = 100;

/// A charging trajectory together with the integrator's bookkeeping.
#[derive(Clone, Debug)]
pub struct DynamicsRun {
    pub series: TimeSeries,
    pub summary: EvolutionSummary,
    /// Mean photon number at each sample.
    pub photons: Vec<f64>,
}

/// Integrates the charging process from the battery ground state and records
/// ΔE, ergotropy, efficiency and power at every sample.
pub fn run_dynamics(spec: &ModelSpec, cfg: &EvolutionConfig) -> Result<DynamicsRun> {
    spec.validate()?;
    let layout = spec.layout()?;
    let reference = BatteryReference::new(model::build_h_battery(spec)?);
    let rho0 = model::initial_state(spec, &layout)?;
    let mut points = Vec::new();
    let mut photons = Vec::new();
    let summary = lindblad::evolve_with(&rho0, spec, cfg, |t, view| {
        let rho_b = view.battery_state();
        points.push(reference.snapshot(t, &rho_b)?);
        photons.push(view.photon_number());
        Ok(())
    })?;
    Ok(DynamicsRun {
        series: TimeSeries { points },
        summary,
        photons,
    })
}

/// Steady-state figures of merit for one model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyPoint {
    pub delta_e: f64,
    pub ergotropy: f64,
    pub efficiency: Option<f64>,
    /// tr(H_B ρ_B) in the steady state.
    pub energy_e_b: f64,
    /// Ground energy of this model's own H_B.
    pub ground_energy: f64,
    /// ‖L(ρ)‖₁ at the returned state.
    pub residual: f64,
    /// Last window rate ‖ρ(t+1/κ) − ρ(t)‖₁ κ.
    pub rate: f64,
    pub t_reached: f64,
    pub photons: f64,
    pub method: SteadyMethod,
}

/// True for charging that relaxes slowly: f < κ (coherent) or n_B < 1 (thermal).
pub fn is_weak_charging(spec: &ModelSpec) -> bool {
    match spec.charge.mode {
        ChargeMode::Coherent => spec.charge.f < spec.kappa,
        ChargeMode::Thermal => spec.charge.n_b < 1.0,
        ChargeMode::None => false,
    }
}

/// The configuration actually used for a steady-state search of `spec`.
///
/// When no horizon is configured, weak charging gets 5× the default one.
pub fn steady_config(spec: &ModelSpec, cfg: &EvolutionConfig) -> EvolutionConfig {
    let mut cfg = cfg.clone();
    if cfg.steady_t_max.is_none() && is_weak_charging(spec) && spec.kappa > 0.0 {
        cfg.steady_t_max = Some(lindblad::STEADY_HORIZON / spec.kappa * WEAK_CHARGING_FACTOR);
    }
    cfg
}

pub fn steady_point(spec: &ModelSpec, cfg: &EvolutionConfig) -> Result<SteadyPoint> {
    spec.validate()?;
    let cfg = steady_config(spec, cfg);
    let ss = lindblad::steady_state(spec, &cfg)?;
    let reference = BatteryReference::new(model::build_h_battery(spec)?);
    let rho_b = ss.battery_state()?;
    let snap = reference.snapshot(ss.t_reached, &rho_b)?;
    let n = model::excitation_number(&ss.layout);
    let spins = crate::hilbert::embed_spins(&model::spin_excitation_number(spec.n_spins), &ss.layout)?;
    let photons = ss.rho.expectation(&(&n - &spins)).re;
    Ok(SteadyPoint {
        delta_e: snap.delta_e,
        ergotropy: snap.ergotropy,
        efficiency: snap.efficiency,
        energy_e_b: snap.energy_e_b,
        ground_energy: reference.ground_energy,
        residual: ss.residual,
        rate: ss.rate,
        t_reached: ss.t_reached,
        photons,
        method: ss.method,
    })
}

/// One entry of a sweep: the steady state or the reason it is missing.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub steady: Option<SteadyPoint>,
    pub error: Option<String>,
    /// RNG seed of this point, for disorder ensembles.
    pub seed: Option<u64>,
}

impl SweepPoint {
    fn from_result(value: f64, seed: Option<u64>, r: Result<SteadyPoint>) -> Self {
        match r {
            Ok(p) => Self {
                value,
                steady: Some(p),
                error: None,
                seed,
            },
            Err(e) => Self {
                value,
                steady: None,
                error: Some(e.to_string()),
                seed,
            },
        }
    }
}

/// Mean, variance and standard error of one quantity over the converged points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Unbiased sample variance; zero for a single sample.
    pub variance: f64,
    pub std_error: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        // shifted by the first sample so identical inputs give exactly zero spread
        let x0 = xs[0];
        let shift = xs.iter().map(|x| x - x0).sum::<f64>() / n;
        let mean = x0 + shift;
        let variance = if xs.len() > 1 {
            xs.iter().map(|x| (x - x0 - shift).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            mean,
            variance,
            std_error: (variance / n).sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub realizations: usize,
    pub successes: usize,
    pub delta_e: Stat,
    pub ergotropy: Stat,
    /// Over the realizations where the efficiency is defined.
    pub efficiency: Option<Stat>,
}

/// Steady-state results along one parameter axis.
#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    /// "n", "j" or "realization".
    pub axis: String,
    pub points: Vec<SweepPoint>,
    /// Present iff the sweep is an ensemble of more than one realization.
    pub ensemble: Option<EnsembleStats>,
    pub seeds: Vec<u64>,
    /// Ground-state crossings of the clean chain within the swept J range.
    pub crossings: Vec<f64>,
}

impl SweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.steady.is_none()).count()
    }

    /// Largest residual over the converged points.
    pub fn max_residual(&self) -> f64 {
        self.points
            .iter()
            .filter_map(|p| p.steady.as_ref())
            .fold(0.0, |a, s| a.max(s.residual))
    }
}

fn check_resources(spec: &ModelSpec) -> Result<()> {
    let dim = spec.layout()?.total_dim();
    if dim > MAX_TOTAL_DIM {
        return Err(Error::invalid(
            "n_spins",
            format!("joint dimension {dim} exceeds the sweep bound {MAX_TOTAL_DIM}"),
        ));
    }
    Ok(())
}

/// Steady states for each chain length, other settings taken from `template`.
/// Onsite disorder is cleared.
pub fn sweep_spin_number(template: &ModelSpec, n_list: &[usize], cfg: &EvolutionConfig) -> Result<SweepResult> {
    if n_list.is_empty() {
        return Err(Error::EmptySeries);
    }
    cfg.validate()?;
    let points = n_list
        .par_iter()
        .map(|&n| {
            let mut spec = template.clone();
            spec.n_spins = n;
            spec.disorder.clear();
            spec.disorder_strength = 0.0;
            let r = check_resources(&spec).and_then(|_| steady_point(&spec, cfg));
            SweepPoint::from_result(n as f64, None, r.map_err(|e| e.context(format!("N = {n}"))))
        })
        .collect();
    Ok(SweepResult {
        axis: "n".into(),
        points,
        ensemble: None,
        seeds: Vec::new(),
        crossings: Vec::new(),
    })
}

/// Grid density used when locating crossings for a J sweep.
const CROSSING_GRID: usize = 400;

/// Steady states along a J grid, with the clean-chain ground crossings
/// inside the grid's range.
pub fn sweep_hopping(template: &ModelSpec, j_grid: &[f64], cfg: &EvolutionConfig) -> Result<SweepResult> {
    if j_grid.is_empty() {
        return Err(Error::EmptySeries);
    }
    cfg.validate()?;
    let points = j_grid
        .par_iter()
        .map(|&j| {
            let spec = template.clone().with_hopping(j);
            let r = check_resources(&spec).and_then(|_| steady_point(&spec, cfg));
            SweepPoint::from_result(j, None, r.map_err(|e| e.context(format!("J = {j}"))))
        })
        .collect();
    Ok(SweepResult {
        axis: "j".into(),
        points,
        ensemble: None,
        seeds: Vec::new(),
        crossings: grid_crossings(template, j_grid)?,
    })
}

fn grid_crossings(template: &ModelSpec, j_grid: &[f64]) -> Result<Vec<f64>> {
    let lo = j_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = j_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Ok(Vec::new());
    }
    let mut clean = template.clone();
    clean.disorder.clear();
    clean.disorder_strength = 0.0;
    spectrum::ground_crossings(&clean, lo, hi, CROSSING_GRID)
}

/// Seed of disorder realization `k`: the (k+1)-th output of a SplitMix64
/// stream started at `base_seed`.
pub fn realization_seed(base_seed: u64, k: usize) -> u64 {
    const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut z = base_seed.wrapping_add(GAMMA.wrapping_mul(k as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Steady states of `realizations` disordered chains with offsets uniform on
/// [−w/2, w/2]. Each realization is measured against its own ground energy.
/// Failed realizations are listed but left out of the statistics.
pub fn disorder_ensemble(
    template: &ModelSpec,
    w: f64,
    realizations: usize,
    base_seed: u64,
    cfg: &EvolutionConfig,
) -> Result<SweepResult> {
    if realizations == 0 {
        return Err(Error::invalid("realizations", "at least one realization is required"));
    }
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::invalid("w", format!("{w} is not a nonnegative strength")));
    }
    cfg.validate()?;
    check_resources(template)?;
    let seeds: Vec<u64> = (0..realizations).map(|k| realization_seed(base_seed, k)).collect();
    let points: Vec<SweepPoint> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| {
            let r = model::sample_disorder(w, template.n_spins, seed).and_then(|offsets| {
                let spec = template.clone().with_disorder(w, offsets);
                steady_point(&spec, cfg)
            });
            SweepPoint::from_result(
                k as f64,
                Some(seed),
                r.map_err(|e| e.context(format!("realization {k}"))),
            )
        })
        .collect();
    let ensemble = if realizations > 1 {
        ensemble_stats(&points)
    } else {
        None
    };
    Ok(SweepResult {
        axis: "realization".into(),
        points,
        ensemble,
        seeds,
        crossings: Vec::new(),
    })
}

fn ensemble_stats(points: &[SweepPoint]) -> Option<EnsembleStats> {
    let ok: Vec<&SteadyPoint> = points.iter().filter_map(|p| p.steady.as_ref()).collect();
    let de: Vec<f64> = ok.iter().map(|s| s.delta_e).collect();
    let erg: Vec<f64> = ok.iter().map(|s| s.ergotropy).collect();
    let eff: Vec<f64> = ok.iter().filter_map(|s| s.efficiency).collect();
    Some(EnsembleStats {
        realizations: points.len(),
        successes: ok.len(),
        delta_e: Stat::of(&de)?,
        ergotropy: Stat::of(&erg)?,
        efficiency: Stat::of(&eff),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChargingTimePoint {
    pub j: f64,
    pub tau_c: Option<f64>,
    /// ΔE(τ_c)/τ_c.
    pub peak_power: Option<f64>,
    pub error: Option<String>,
}

/// τ_c = argmax ΔE(t)/t over `cfg.t_max` for every J in the grid.
pub fn charging_time_scan(
    template: &ModelSpec,
    j_grid: &[f64],
    cfg: &EvolutionConfig,
) -> Result<Vec<ChargingTimePoint>> {
    if j_grid.is_empty() {
        return Err(Error::EmptySeries);
    }
    cfg.validate()?;
    Ok(j_grid
        .par_iter()
        .map(|&j| {
            let spec = template.clone().with_hopping(j);
            let r = check_resources(&spec)
                .and_then(|_| run_dynamics(&spec, cfg))
                .and_then(|run| {
                    let tau = observables::charging_time(&run.series)?;
                    let p = run
                        .series
                        .points
                        .iter()
                        .find(|s| s.t == tau)
                        .and_then(|s| s.power)
                        .ok_or(Error::EmptySeries)?;
                    Ok((tau, p))
                });
            match r {
                Ok((tau, p)) => ChargingTimePoint {
                    j,
                    tau_c: Some(tau),
                    peak_power: Some(p),
                    error: None,
                },
                Err(e) => ChargingTimePoint {
                    j,
                    tau_c: None,
                    peak_power: None,
                    error: Some(e.context(format!("J = {j}")).to_string()),
                },
            }
        })
        .collect())
}
