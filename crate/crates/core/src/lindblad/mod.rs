//! Time integration of the cavity–battery master equation and steady states.
//!
//! The generator is dρ/dt = −i[H, ρ] + Σ_k γ_k (A_k ρ A_k† − ½{A_k†A_k, ρ}),
//! integrated with classical fixed-step RK4 on the reachable entries of ρ.

mod sparse;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{annihilation, embed, partial_trace_cavity, ComplexOperator, DensityMatrix, Slot, SpaceLayout};
use crate::model::{self, ChargeMode, ModelSpec};
use crate::C64;

use sparse::{Pattern, SparseOp, Superoperator, Term};

/// A jump operator with its rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Dissipator {
    pub operator: ComplexOperator,
    pub rate: f64,
}

impl Dissipator {
    pub fn new(operator: ComplexOperator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::invalid("rate", format!("{rate} is not a nonnegative rate")));
        }
        Ok(Self { operator, rate })
    }
}

/// Integration settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Largest allowed step; `None` derives one from the model (see [`EvolutionConfig::step_for`]).
    pub dt: Option<f64>,
    /// Horizon of a dynamics run.
    pub t_max: f64,
    /// Spacing of output samples. The step is shrunk so it divides this exactly.
    pub sample_dt: f64,
    /// Steady-state criterion on ‖ρ(t+1/κ) − ρ(t)‖₁ κ.
    pub steady_tol: f64,
    /// Largest tolerated population of the top Fock level.
    pub guard_tol: f64,
    /// Horizon for steady-state searches; `None` means [`STEADY_HORIZON`]/κ.
    pub steady_t_max: Option<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_max: 20.0,
            sample_dt: 0.05,
            steady_tol: 1e-7,
            guard_tol: 1e-6,
            steady_t_max: None,
        }
    }
}

/// Default steady-state horizon in units of 1/κ. Weakly split levels of a
/// nearly uniform chain dephase slowly, so a few hundred decay times is not
/// always enough.
pub const STEADY_HORIZON: f64 = 2000.0;

/// Step size constant for the accuracy bound dt ≤ ACCURACY_DT / max rate.
const ACCURACY_DT: f64 = 0.01;
/// RK4 is stable for |λ dt| up to about 2.8 along both axes of the left half plane.
const STABILITY_LIMIT: f64 = 2.0;
const TRACE_DRIFT_LIMIT: f64 = 1e-6;
const POSITIVITY_LIMIT: f64 = 1e-7;
/// Largest number of reachable entries for which L(ρ) = 0 is solved densely.
const DIRECT_LIMIT: usize = 2500;
/// Below this |λ_min| / ‖A‖ the constrained generator is treated as singular,
/// meaning the stationary state is not unique.
const DEGENERACY_TOL: f64 = 1e-10;

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::invalid("dt", format!("{dt} must be positive")));
            }
        }
        for (name, v) in [
            ("t_max", self.t_max),
            ("sample_dt", self.sample_dt),
            ("steady_tol", self.steady_tol),
            ("guard_tol", self.guard_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        if let Some(t) = self.steady_t_max {
            if !(t > 0.0) {
                return Err(Error::invalid("steady_t_max", format!("{t} must be positive")));
            }
        }
        Ok(())
    }

    /// Scale the horizons by `factor`.
    pub fn with_longer_horizon(mut self, factor: f64) -> Self {
        self.t_max *= factor;
        self.steady_t_max = self.steady_t_max.map(|t| t * factor);
        self
    }

    /// Step size used for `spec`: the configured `dt` or
    /// min(0.01 / max(ω_a, ω_c, g, κ, f, κ n_B, |J|, 1), 2 / ‖L‖), then shrunk
    /// to divide `sample_dt`.
    pub fn step_for(&self, spec: &ModelSpec) -> Result<f64> {
        let engine = Engine::new(spec, None)?;
        Ok(self.snap_step(engine.max_stable_step(), spec).1)
    }

    fn snap_step(&self, stable: f64, spec: &ModelSpec) -> (usize, f64) {
        let wanted = self.dt.unwrap_or_else(|| {
            let scale = [
                spec.omega_a,
                spec.omega_c,
                spec.g,
                spec.kappa,
                spec.charge.f,
                spec.kappa * spec.charge.n_b,
                spec.j_hop.abs(),
                1.0,
            ]
            .into_iter()
            .fold(0.0f64, f64::max);
            (ACCURACY_DT / scale).min(stable)
        });
        let stride = (self.sample_dt / wanted - 1e-9).ceil().max(1.0) as usize;
        (stride, self.sample_dt / stride as f64)
    }
}

/// Dense reference evaluation of the master-equation right-hand side.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &ComplexOperator, dissipators: &[Dissipator]) -> Result<ComplexOperator> {
    let dim = rho.dim();
    if h.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: h.dim(),
        });
    }
    let defect = h.hermitian_defect();
    if defect > 1e-10 {
        return Err(Error::NotHermitian { defect });
    }
    let r = rho.matrix();
    let hm = h.matrix();
    let mut out = (hm * r - r * hm) * C64::new(0.0, -1.0);
    for d in dissipators {
        if d.operator.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: d.operator.dim(),
            });
        }
        let a = d.operator.matrix();
        let ad = a.adjoint();
        let ada = &ad * a;
        out += (a * r * &ad - (&ada * r + r * &ada) * C64::new(0.5, 0.0)) * C64::new(d.rate, 0.0);
    }
    ComplexOperator::new(out)
}

/// Compiled generator for one model and initial state.
struct Engine {
    layout: SpaceLayout,
    pattern: Pattern,
    /// Time-independent part.
    static_part: Superoperator,
    /// Detuned drive: coefficient f e^{−iδt} on the c† commutator, its
    /// conjugate on the c commutator.
    drive: Option<(f64, f64, Superoperator, Superoperator)>,
    stable_step: f64,
    top_fock: Vec<usize>,
}

impl Engine {
    fn new(spec: &ModelSpec, rho0: Option<&DensityMatrix>) -> Result<Self> {
        let layout = spec.layout()?;
        let dim = layout.total_dim();
        let mut h = model::build_h_system(spec, &layout)?;
        let frame = spec.frame_frequency();
        if frame != 0.0 {
            h = &h - &model::excitation_number(&layout).scaled(frame);
        }
        let detuned = spec.charge.mode == ChargeMode::Coherent && spec.charge.delta != 0.0;
        if spec.charge.mode == ChargeMode::Coherent && !detuned {
            h = &h + &model::build_h_drive(spec, &layout, 0.0)?;
        }
        let dissipators = model::build_dissipators(spec, &layout)?;

        // H_eff = H − (i/2) Σ γ A†A, so −i[H,ρ] − ½{Γ,ρ} = −i(H_eff ρ − ρ H_eff†)
        let mut h_eff = h.matrix().clone();
        for d in &dissipators {
            let a = d.operator.matrix();
            h_eff -= a.adjoint() * a * C64::new(0.0, 0.5 * d.rate);
        }
        let h_eff_sparse = SparseOp::from_dense(&h_eff);
        let h_eff_adj = SparseOp::from_dense(&h_eff.adjoint());
        let jumps: Vec<(SparseOp, f64)> = dissipators
            .iter()
            .map(|d| (SparseOp::from_dense(d.operator.matrix()), d.rate))
            .collect();
        let c = embed(&annihilation(layout.cavity_dim())?, Slot::Cavity, &layout)?;
        let c_sparse = SparseOp::from_dense(c.matrix());
        let cdag_sparse = SparseOp::from_dense(&c.matrix().adjoint());

        let mut terms = vec![Term::Sandwich {
            left: &h_eff_sparse,
            right: &h_eff_adj,
        }];
        for (op, rate) in &jumps {
            terms.push(Term::Jump { op, rate: *rate });
        }
        let drive_terms = [
            Term::Sandwich {
                left: &cdag_sparse,
                right: &cdag_sparse,
            },
            Term::Sandwich {
                left: &c_sparse,
                right: &c_sparse,
            },
        ];

        let support: Vec<(usize, usize)> = match rho0 {
            Some(rho) => {
                let m = rho.matrix();
                let mut s = Vec::new();
                for j in 0..dim {
                    for i in 0..dim {
                        if m[(i, j)] != C64::new(0.0, 0.0) {
                            s.push((i, j));
                        }
                    }
                }
                s
            }
            None => vec![(0, 0)],
        };
        let mut reach_terms: Vec<Term<'_>> = Vec::new();
        reach_terms.push(Term::Sandwich {
            left: &h_eff_sparse,
            right: &h_eff_adj,
        });
        for (op, rate) in &jumps {
            reach_terms.push(Term::Jump { op, rate: *rate });
        }
        if detuned {
            reach_terms.push(Term::Sandwich {
                left: &cdag_sparse,
                right: &cdag_sparse,
            });
            reach_terms.push(Term::Sandwich {
                left: &c_sparse,
                right: &c_sparse,
            });
        }
        let pattern = Pattern::reachable(dim, &support, &reach_terms);
        let static_part = Superoperator::build(&pattern, &terms);
        let drive = detuned.then(|| {
            (
                spec.charge.f,
                spec.charge.delta,
                Superoperator::build(&pattern, &drive_terms[..1]),
                Superoperator::build(&pattern, &drive_terms[1..]),
            )
        });

        let mut bound = 2.0 * h_eff_sparse.norm_bound();
        for (op, rate) in &jumps {
            bound += rate * op.norm_bound().powi(2);
        }
        if detuned {
            bound += 4.0 * spec.charge.f * c_sparse.norm_bound();
        }
        let stable_step = if bound > 0.0 {
            STABILITY_LIMIT / bound
        } else {
            f64::INFINITY
        };

        let top = layout.cavity_dim() - 1;
        let top_fock = (0..layout.spin_dim())
            .filter_map(|s| pattern.diagonal_position(layout.index(top, s)))
            .collect();
        log::debug!(
            "compiled generator: dim {}, {} reachable entries, {} nonzeros, {} blocks",
            dim,
            pattern.len(),
            static_part.nnz(),
            pattern.blocks().len()
        );
        Ok(Self {
            layout,
            pattern,
            static_part,
            drive,
            stable_step,
            top_fock,
        })
    }

    fn max_stable_step(&self) -> f64 {
        self.stable_step
    }

    fn rhs(&self, t: f64, x: &[C64], out: &mut [C64]) {
        self.static_part.apply(x, out);
        if let Some((f, delta, plus, minus)) = &self.drive {
            let a = C64::from_polar(*f, -delta * t);
            plus.apply_add(a, x, out);
            minus.apply_add(a.conj(), x, out);
        }
    }

    fn top_population(&self, x: &[C64]) -> f64 {
        self.top_fock.iter().map(|&p| x[p].re).sum()
    }

    /// Unit-trace solution of L(ρ) = 0 on the reachable entries, or `None`
    /// when the pattern is too large, the generator is time dependent, or the
    /// stationary state is not unique.
    fn direct_steady(&self) -> Option<Vec<C64>> {
        let n = self.pattern.len();
        if n > DIRECT_LIMIT || self.drive.is_some() {
            return None;
        }
        let diag: Vec<usize> = (0..self.layout.total_dim())
            .filter_map(|i| self.pattern.diagonal_position(i))
            .collect();
        let r = *diag.first()?;
        // the diagonal rows of L sum to zero, so one of them can carry tr ρ = 1
        let mut a = self.static_part.to_dense();
        for c in 0..n {
            a[(r, c)] = C64::new(0.0, 0.0);
        }
        for &p in &diag {
            a[(r, p)] = C64::new(1.0, 0.0);
        }
        let scale = a
            .row_iter()
            .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let lu = a.lu();
        let mut b = DVector::zeros(n);
        b[r] = C64::new(1.0, 0.0);
        let x = lu.solve(&b)?;

        // inverse iteration from a fixed scrambled vector estimates |λ_min|
        let mut state = 0x2545_F491_4F6C_DD1Du64;
        let mut v = DVector::from_fn(n, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            C64::new((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5, 0.0)
        });
        v /= C64::new(v.norm(), 0.0);
        let mut growth = 0.0;
        for _ in 0..6 {
            let y = lu.solve(&v)?;
            growth = y.norm();
            if !growth.is_finite() || growth == 0.0 {
                return None;
            }
            v = y / C64::new(growth, 0.0);
        }
        if 1.0 / growth < DEGENERACY_TOL * scale {
            log::debug!("stationary state is not unique (|lambda_min| ~ {:.1e})", 1.0 / growth);
            return None;
        }
        let mut x: Vec<C64> = x.iter().copied().collect();
        self.pattern.hermitize(&mut x);
        let trace = self.pattern.trace(&x);
        if !((trace - 1.0).abs() < 1e-8) || !self.pattern.is_positive_within(&x, POSITIVITY_LIMIT) {
            return None;
        }
        Some(x)
    }
}

/// RK4 state with scratch buffers.
struct Integrator<'a> {
    engine: &'a Engine,
    x: Vec<C64>,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
    dt: f64,
    guard_tol: f64,
}

impl<'a> Integrator<'a> {
    fn new(engine: &'a Engine, x: Vec<C64>, dt: f64, guard_tol: f64) -> Self {
        let n = x.len();
        let z = || vec![C64::new(0.0, 0.0); n];
        Self {
            engine,
            x,
            k: [z(), z(), z(), z()],
            tmp: z(),
            dt,
            guard_tol,
        }
    }

    fn step(&mut self, t: f64) {
        let h = self.dt;
        let e = self.engine;
        let [k1, k2, k3, k4] = &mut self.k;
        e.rhs(t, &self.x, k1);
        for ((y, x), k) in self.tmp.iter_mut().zip(&self.x).zip(k1.iter()) {
            *y = x + k * (0.5 * h);
        }
        e.rhs(t + 0.5 * h, &self.tmp, k2);
        for ((y, x), k) in self.tmp.iter_mut().zip(&self.x).zip(k2.iter()) {
            *y = x + k * (0.5 * h);
        }
        e.rhs(t + 0.5 * h, &self.tmp, k3);
        for ((y, x), k) in self.tmp.iter_mut().zip(&self.x).zip(k3.iter()) {
            *y = x + k * h;
        }
        e.rhs(t + h, &self.tmp, k4);
        let w = h / 6.0;
        for (p, x) in self.x.iter_mut().enumerate() {
            *x += (k1[p] + (k2[p] + k3[p]) * 2.0 + k4[p]) * w;
        }
        e.pattern.hermitize(&mut self.x);
    }

    /// Advances `steps` steps from `t0`, checking the Fock guard after each.
    fn advance(&mut self, t0: f64, steps: usize) -> Result<()> {
        for m in 0..steps {
            let t = t0 + m as f64 * self.dt;
            self.step(t);
            let top = self.engine.top_population(&self.x);
            if top > self.guard_tol {
                return Err(Error::FockGuard {
                    t: t + self.dt,
                    population: top,
                    threshold: self.guard_tol,
                    cutoff: self.engine.layout.cavity_dim(),
                });
            }
        }
        Ok(())
    }

    fn check_integrity(&self, t: f64) -> Result<()> {
        let trace = self.engine.pattern.trace(&self.x);
        if (trace - 1.0).abs() > TRACE_DRIFT_LIMIT || !trace.is_finite() {
            return Err(Error::TraceDrift { t, trace });
        }
        if !self.engine.pattern.is_positive_within(&self.x, POSITIVITY_LIMIT) {
            return Err(Error::PositivityLost {
                t,
                min_eigenvalue: self.engine.pattern.min_eigenvalue(&self.x),
            });
        }
        Ok(())
    }
}

/// Read access to the state at a sample time.
pub struct StateView<'a> {
    engine: &'a Engine,
    values: &'a [C64],
}

impl StateView<'_> {
    pub fn layout(&self) -> &SpaceLayout {
        &self.engine.layout
    }

    pub fn trace(&self) -> f64 {
        self.engine.pattern.trace(self.values)
    }

    /// Full density matrix.
    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::new_unchecked(ComplexOperator::from_matrix_unchecked(
            self.engine.pattern.scatter(self.values),
        ))
    }

    /// ρ_B = tr_A[ρ], computed from the stored entries only.
    pub fn battery_state(&self) -> DensityMatrix {
        let layout = &self.engine.layout;
        let ds = layout.spin_dim();
        let mut m = nalgebra::DMatrix::zeros(ds, ds);
        for (&(i, j), v) in self.engine.pattern.entries().iter().zip(self.values) {
            let (fi, si) = layout.split_index(i);
            let (fj, sj) = layout.split_index(j);
            if fi == fj {
                m[(si, sj)] += *v;
            }
        }
        DensityMatrix::new_unchecked(ComplexOperator::from_matrix_unchecked(m))
    }

    /// ⟨c†c⟩
    pub fn photon_number(&self) -> f64 {
        let layout = &self.engine.layout;
        (0..layout.total_dim())
            .filter_map(|i| {
                let p = self.engine.pattern.diagonal_position(i)?;
                Some(layout.split_index(i).0 as f64 * self.values[p].re)
            })
            .sum()
    }

    pub fn top_fock_population(&self) -> f64 {
        self.engine.top_population(self.values)
    }

    /// Smallest eigenvalue of ρ (block by block).
    pub fn min_eigenvalue(&self) -> f64 {
        self.engine.pattern.min_eigenvalue(self.values)
    }

    /// max |ρ − ρ†| over stored entries.
    pub fn hermitian_defect(&self) -> f64 {
        let p = &self.engine.pattern;
        p.entries()
            .iter()
            .zip(self.values)
            .map(|(&(i, j), v)| {
                let q = p.position(j, i).expect("pattern is symmetric");
                (v - self.values[q].conj()).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// What an evolution did.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvolutionSummary {
    pub dt: f64,
    pub steps: usize,
    pub t_end: f64,
    pub samples: usize,
    pub reachable_entries: usize,
    pub max_trace_drift: f64,
    pub max_top_population: f64,
}

/// Integrates from `rho0` to `cfg.t_max`, calling `observe` at t = 0 and at
/// every multiple of `cfg.sample_dt`.
pub fn evolve_with<F>(
    rho0: &DensityMatrix,
    spec: &ModelSpec,
    cfg: &EvolutionConfig,
    mut observe: F,
) -> Result<EvolutionSummary>
where
    F: FnMut(f64, &StateView<'_>) -> Result<()>,
{
    cfg.validate()?;
    let engine = Engine::new(spec, Some(rho0))?;
    if rho0.dim() != engine.layout.total_dim() {
        return Err(Error::DimensionMismatch {
            expected: engine.layout.total_dim(),
            got: rho0.dim(),
        });
    }
    let (stride, dt) = cfg.snap_step(engine.max_stable_step(), spec);
    let n_samples = (cfg.t_max / cfg.sample_dt - 1e-9).ceil() as usize;
    let mut integ = Integrator::new(&engine, engine.pattern.gather(rho0.matrix()), dt, cfg.guard_tol);
    let mut summary = EvolutionSummary {
        dt,
        steps: 0,
        t_end: 0.0,
        samples: 0,
        reachable_entries: engine.pattern.len(),
        max_trace_drift: 0.0,
        max_top_population: 0.0,
    };
    let mut record = |t: f64, x: &[C64], summary: &mut EvolutionSummary| -> Result<()> {
        let view = StateView {
            engine: &engine,
            values: x,
        };
        summary.max_trace_drift = summary.max_trace_drift.max((view.trace() - 1.0).abs());
        summary.max_top_population = summary.max_top_population.max(view.top_fock_population());
        summary.samples += 1;
        observe(t, &view)
    };
    record(0.0, &integ.x, &mut summary)?;
    for k in 0..n_samples {
        let t0 = k as f64 * cfg.sample_dt;
        let t1 = (k + 1) as f64 * cfg.sample_dt;
        integ.advance(t0, stride)?;
        integ.check_integrity(t1)?;
        summary.steps += stride;
        summary.t_end = t1;
        record(t1, &integ.x, &mut summary)?;
    }
    Ok(summary)
}

/// Integrates and returns the full state at every sample time.
pub fn evolve(rho0: &DensityMatrix, spec: &ModelSpec, cfg: &EvolutionConfig) -> Result<Vec<(f64, DensityMatrix)>> {
    let mut out = Vec::new();
    evolve_with(rho0, spec, cfg, |t, view| {
        out.push((t, view.density()));
        Ok(())
    })?;
    Ok(out)
}

/// How a stationary state was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    /// Time integration until the state stopped changing.
    Integration,
    /// Dense solve of L(ρ) = 0 with tr ρ = 1, used when the solution is unique.
    Direct,
}

/// Long-time limit of the dynamics from the model's initial state.
#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    pub layout: SpaceLayout,
    /// ‖L(ρ)‖₁ at the returned state.
    pub residual: f64,
    /// Last measured ‖ρ(t+Δ) − ρ(t)‖₁ / Δ; equal to the residual for a direct solve.
    pub rate: f64,
    /// Time integrated before the state was accepted.
    pub t_reached: f64,
    pub dt: f64,
    pub method: SteadyMethod,
}

impl SteadyState {
    pub fn battery_state(&self) -> Result<DensityMatrix> {
        partial_trace_cavity(&self.rho, &self.layout)
    }
}

/// Long-time state reached from the model's initial state.
///
/// The default route integrates until ‖ρ(t+Δ) − ρ(t)‖₁/Δ and ‖L(ρ)‖₁/10 both
/// fall below `cfg.steady_tol`, with Δ = 1/κ. Symmetric chains have several
/// stationary states and keep memory of ρ(0), which integration respects.
/// Disordered chains have a unique one that can take very long to approach,
/// so for them L(ρ) = 0 is solved directly first. Integration that times out
/// also falls back to the direct solve when the solution is unique.
pub fn steady_state(spec: &ModelSpec, cfg: &EvolutionConfig) -> Result<SteadyState> {
    cfg.validate()?;
    if !(spec.kappa > 0.0) {
        return Err(Error::invalid("kappa", "a steady state needs kappa > 0"));
    }
    if spec.charge.mode == ChargeMode::Coherent && spec.charge.delta != 0.0 {
        return Err(Error::invalid(
            "delta",
            "a detuned drive is periodic in this frame and has no stationary state",
        ));
    }
    let layout = spec.layout()?;
    let rho0 = model::initial_state(spec, &layout)?;
    let engine = Engine::new(spec, Some(&rho0))?;
    let (_, dt) = cfg.snap_step(engine.max_stable_step(), spec);
    let window_steps = ((1.0 / spec.kappa) / dt).ceil().max(1.0) as usize;
    let window = window_steps as f64 * dt;
    let t_max = cfg.steady_t_max.unwrap_or(STEADY_HORIZON / spec.kappa);
    let sqrt_dim = (engine.layout.total_dim() as f64).sqrt();

    let direct = |t_reached: f64| -> Option<SteadyState> {
        let x = engine.direct_steady()?;
        let mut lx = vec![C64::new(0.0, 0.0); x.len()];
        engine.rhs(0.0, &x, &mut lx);
        let residual = engine.pattern.trace_norm(&lx);
        if residual >= 10.0 * cfg.steady_tol || engine.top_population(&x) > cfg.guard_tol {
            return None;
        }
        let view = StateView {
            engine: &engine,
            values: &x,
        };
        Some(SteadyState {
            rho: view.density(),
            layout: engine.layout,
            residual,
            rate: residual,
            t_reached,
            dt,
            method: SteadyMethod::Direct,
        })
    };
    if spec.disorder.iter().any(|d| *d != 0.0) {
        if let Some(ss) = direct(0.0) {
            return Ok(ss);
        }
    }

    let mut integ = Integrator::new(&engine, engine.pattern.gather(rho0.matrix()), dt, cfg.guard_tol);
    let mut prev = integ.x.clone();
    let mut diff = integ.x.clone();
    let mut t = 0.0;
    let mut windows = 0usize;
    let mut rate = f64::INFINITY;
    while t < t_max {
        prev.copy_from_slice(&integ.x);
        integ.advance(t, window_steps)?;
        windows += 1;
        t = windows as f64 * window;
        integ.check_integrity(t)?;
        for ((d, a), b) in diff.iter_mut().zip(&integ.x).zip(&prev) {
            *d = a - b;
        }
        // ‖·‖_F ≤ ‖·‖₁ ≤ √dim ‖·‖_F decides most windows without a diagonalization
        let fro = diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        rate = if fro / window >= cfg.steady_tol {
            fro / window
        } else if sqrt_dim * fro / window < cfg.steady_tol {
            sqrt_dim * fro / window
        } else {
            engine.pattern.trace_norm(&diff) / window
        };
        if rate < cfg.steady_tol {
            engine.rhs(t, &integ.x, &mut diff);
            let residual = engine.pattern.trace_norm(&diff);
            if residual < 10.0 * cfg.steady_tol {
                let view = StateView {
                    engine: &engine,
                    values: &integ.x,
                };
                return Ok(SteadyState {
                    rho: view.density(),
                    layout: engine.layout,
                    residual,
                    rate,
                    t_reached: t,
                    dt,
                    method: SteadyMethod::Integration,
                });
            }
        }
    }
    if let Some(ss) = direct(t) {
        return Ok(ss);
    }
    Err(Error::SteadyStateTimeout { t_max, rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::DensityMatrix;
    use nalgebra::DMatrix;

    fn real(m: &[f64], d: usize) -> ComplexOperator {
        ComplexOperator::from_real_rows(d, m).unwrap()
    }

    #[test]
    fn pure_decay_rhs() {
        let c = annihilation(2).unwrap();
        let rho = DensityMatrix::new(real(&[0.0, 0.0, 0.0, 1.0], 2)).unwrap();
        let out = lindblad_rhs(&rho, &ComplexOperator::zeros(2), &[Dissipator::new(c, 1.0).unwrap()]).unwrap();
        let expected = real(&[1.0, 0.0, 0.0, -1.0], 2);
        assert!((&out - &expected).max_abs() < 1e-15);
    }

    #[test]
    fn von_neumann_limit_is_traceless() {
        let h = real(&[1.0, 0.3, 0.3, -0.5], 2);
        let rho = DensityMatrix::new(real(&[0.6, 0.2, 0.2, 0.4], 2)).unwrap();
        let out = lindblad_rhs(&rho, &h, &[]).unwrap();
        let direct = h.commutator(rho.operator()).scaled_complex(C64::new(0.0, -1.0));
        assert!((&out - &direct).max_abs() < 1e-15);
        assert!(out.trace().norm() < 1e-15);
        assert!(out.is_hermitian(1e-15));
    }

    #[test]
    fn non_hermitian_generator_rejected() {
        let h = real(&[0.0, 1.0, 0.0, 0.0], 2);
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(lindblad_rhs(&rho, &h, &[]), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn thermal_cavity_is_fixed_point() {
        let d = 30;
        let nb: f64 = 2.0;
        let c = annihilation(d).unwrap();
        let pops: Vec<f64> = (0..d).map(|n| (nb / (nb + 1.0)).powi(n as i32) / (nb + 1.0)).collect();
        let z: f64 = pops.iter().sum();
        let rho = DensityMatrix::new(ComplexOperator::from_real_diagonal(
            &pops.iter().map(|p| p / z).collect::<Vec<_>>(),
        ))
        .unwrap();
        let diss = [
            Dissipator::new(c.clone(), nb + 1.0).unwrap(),
            Dissipator::new(c.adjoint(), nb).unwrap(),
        ];
        let h = ComplexOperator::from_real_diagonal(&(0..d).map(|n| n as f64).collect::<Vec<_>>());
        let out = lindblad_rhs(&rho, &h, &diss).unwrap();
        assert!(out.max_abs() < 1e-10);
    }

    #[test]
    fn sparse_generator_matches_dense_reference() {
        for spec in [
            ModelSpec::new(2).with_hopping(0.7).thermal(0.8).with_cutoff(4),
            ModelSpec::new(2).with_hopping(0.3).coherent(0.5).with_cutoff(4),
        ] {
            let layout = spec.layout().unwrap();
            let dim = layout.total_dim();
            // a dense Hermitian unit-trace test matrix so every entry is reachable
            let m = DMatrix::from_fn(dim, dim, |i, j| {
                C64::new(((i * 7 + j * 3) % 11) as f64 / 50.0, ((i + 2 * j) % 5) as f64 / 70.0)
            });
            let m = &m + m.adjoint() + DMatrix::identity(dim, dim) * C64::new(dim as f64, 0.0);
            let tr = m.trace();
            let m = m / tr;
            let rho = DensityMatrix::new_unchecked(ComplexOperator::new(m.clone()).unwrap());
            let h = model::build_generator(&spec, &layout, 0.0).unwrap();
            let diss = model::build_dissipators(&spec, &layout).unwrap();
            let dense = lindblad_rhs(&rho, &h, &diss).unwrap();
            let engine = Engine::new(&spec, Some(&rho)).unwrap();
            assert_eq!(engine.pattern.len(), dim * dim);
            let x = engine.pattern.gather(&m);
            let mut out = vec![C64::new(0.0, 0.0); x.len()];
            engine.rhs(0.0, &x, &mut out);
            let sparse = engine.pattern.scatter(&out);
            assert!(crate::linalg::max_abs(&(sparse - dense.matrix())) < 1e-12);
        }
    }

    #[test]
    fn detuned_drive_matches_dense_reference() {
        let mut spec = ModelSpec::new(1).coherent(0.7).with_cutoff(5);
        spec.charge.delta = 0.4;
        let layout = spec.layout().unwrap();
        let rho0 = model::initial_state(&spec, &layout).unwrap();
        let engine = Engine::new(&spec, Some(&rho0)).unwrap();
        let dim = layout.total_dim();
        let m = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                C64::new(1.0 / dim as f64, 0.0)
            } else {
                C64::new(0.01, 0.0)
            }
        });
        let rho = DensityMatrix::new_unchecked(ComplexOperator::new(m.clone()).unwrap());
        let diss = model::build_dissipators(&spec, &layout).unwrap();
        for t in [0.0, 1.3] {
            let h = model::build_generator(&spec, &layout, t).unwrap();
            let dense = lindblad_rhs(&rho, &h, &diss).unwrap();
            let x = engine.pattern.gather(&m);
            let mut out = vec![C64::new(0.0, 0.0); x.len()];
            engine.rhs(t, &x, &mut out);
            assert!(crate::linalg::max_abs(&(engine.pattern.scatter(&out) - dense.matrix())) < 1e-12);
        }
    }

    #[test]
    fn thermal_pattern_is_excitation_block_diagonal() {
        let spec = ModelSpec::new(3).thermal(1.0).with_cutoff(6);
        let layout = spec.layout().unwrap();
        let rho0 = model::initial_state(&spec, &layout).unwrap();
        let engine = Engine::new(&spec, Some(&rho0)).unwrap();
        let dim = layout.total_dim();
        assert!(engine.pattern.len() < dim * dim / 4);
        let n_exc = |i: usize| {
            let (f, s) = layout.split_index(i);
            f + s.count_ones() as usize
        };
        for &(i, j) in engine.pattern.entries() {
            assert_eq!(n_exc(i), n_exc(j));
        }
    }

    #[test]
    fn dark_initial_state_is_steady() {
        let spec = ModelSpec::new(2).with_cutoff(3);
        let cfg = EvolutionConfig::default();
        let ss = steady_state(&spec, &cfg).unwrap();
        assert!((ss.rho.matrix()[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!(ss.residual < 1e-12);
    }

    #[test]
    fn steady_state_argument_checks() {
        let mut spec = ModelSpec::new(1).thermal(1.0);
        spec.kappa = 0.0;
        assert!(steady_state(&spec, &EvolutionConfig::default()).is_err());
        let mut spec = ModelSpec::new(1).coherent(1.0);
        spec.charge.delta = 0.2;
        assert!(steady_state(&spec, &EvolutionConfig::default()).is_err());
    }

    #[test]
    fn guard_trips_on_small_cutoff() {
        let spec = ModelSpec::new(1).coherent(2.0).with_cutoff(4);
        let layout = spec.layout().unwrap();
        let rho0 = model::initial_state(&spec, &layout).unwrap();
        let err = evolve_with(&rho0, &spec, &EvolutionConfig::default(), |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::FockGuard { cutoff: 4, .. }));
    }

    #[test]
    fn step_divides_sample_interval() {
        let cfg = EvolutionConfig::default();
        let spec = ModelSpec::new(2).thermal(2.0);
        let dt = cfg.step_for(&spec).unwrap();
        let ratio = cfg.sample_dt / dt;
        assert!((ratio - ratio.round()).abs() < 1e-9);
        assert!(dt <= 0.01 / 2.0 + 1e-15);
        let fixed = EvolutionConfig {
            dt: Some(0.003),
            ..EvolutionConfig::default()
        };
        let dt = fixed.step_for(&spec).unwrap();
        assert!(dt <= 0.003 && dt > 0.0025);
    }

    #[test]
    fn direct_solve_detects_dark_sectors() {
        // a uniform pair has a decoupled singlet, so the stationary state is not unique
        let clean = ModelSpec::new(2).with_hopping(0.3).thermal(0.5).with_cutoff(6);
        let rho0 = model::initial_state(&clean, &clean.layout().unwrap()).unwrap();
        assert!(Engine::new(&clean, Some(&rho0)).unwrap().direct_steady().is_none());

        let disordered = clean.clone().with_disorder(0.6, vec![0.25, -0.2]);
        let rho0 = model::initial_state(&disordered, &disordered.layout().unwrap()).unwrap();
        let engine = Engine::new(&disordered, Some(&rho0)).unwrap();
        let x = engine.direct_steady().unwrap();
        let mut lx = vec![C64::new(0.0, 0.0); x.len()];
        engine.rhs(0.0, &x, &mut lx);
        assert!(engine.pattern.trace_norm(&lx) < 1e-10);
        assert!((engine.pattern.trace(&x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disordered_steady_state_is_solved_directly() {
        let spec = ModelSpec::new(2)
            .with_hopping(0.3)
            .thermal(0.5)
            .with_cutoff(8)
            .with_disorder(0.6, vec![0.25, -0.2]);
        let cfg = EvolutionConfig {
            guard_tol: 1e-2,
            ..EvolutionConfig::default()
        };
        let ss = steady_state(&spec, &cfg).unwrap();
        assert_eq!(ss.method, SteadyMethod::Direct);
        assert_eq!(ss.t_reached, 0.0);
        let clean = ModelSpec::new(2).with_hopping(0.3).thermal(0.5).with_cutoff(8);
        let ss = steady_state(&clean, &cfg).unwrap();
        assert_eq!(ss.method, SteadyMethod::Integration);
    }
}
