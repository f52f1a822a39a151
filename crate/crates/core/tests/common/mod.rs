//! Reference implementations used only by the integration tests. They are
//! written independently of the library: operators are assembled with plain
//! Kronecker products and the master equation is solved in vectorized form.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::Rng;

pub type M = DMatrix<C>;

pub fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn eye(d: usize) -> M {
    M::identity(d, d)
}

/// Lowering operator on a d-level ladder.
pub fn lower(d: usize) -> M {
    let mut a = M::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    a
}

/// σ₋ with |0⟩ the ground state.
pub fn sm() -> M {
    lower(2)
}

pub fn kron_all(ops: &[M]) -> M {
    ops.iter().skip(1).fold(ops[0].clone(), |acc, o| acc.kronecker(o))
}

/// `op` on spin `site` (1-based) of an N-chain, identity elsewhere.
pub fn on_site(op: &M, site: usize, n: usize) -> M {
    let ops: Vec<M> = (1..=n).map(|k| if k == site { op.clone() } else { eye(2) }).collect();
    kron_all(&ops)
}

/// Parameters of the reference model.
#[derive(Clone, Debug)]
pub struct Params {
    pub n: usize,
    pub d: usize,
    pub omega_a: f64,
    pub omega_c: f64,
    pub g: f64,
    pub j: f64,
    pub kappa: f64,
    /// Coherent drive strength (resonant, written in the frame rotating at ω_c).
    pub f: Option<f64>,
    /// Thermal bath occupation.
    pub n_b: Option<f64>,
    pub offsets: Vec<f64>,
}

impl Params {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            omega_a: 1.0,
            omega_c: 1.0,
            g: 1.0,
            j: 0.0,
            kappa: 1.0,
            f: None,
            n_b: None,
            offsets: vec![0.0; n],
        }
    }
}

pub fn battery_hamiltonian(p: &Params) -> M {
    let n = p.n;
    let dim = 1 << n;
    let mut h = M::zeros(dim, dim);
    for i in 1..=n {
        let s = on_site(&sm(), i, n);
        h += s.adjoint() * &s * c(p.omega_a * (1.0 + p.offsets[i - 1]));
    }
    for i in 1..n {
        let a = on_site(&sm(), i, n);
        let b = on_site(&sm(), i + 1, n);
        let hop = a.adjoint() * &b;
        h += (&hop + hop.adjoint()) * c(p.j);
    }
    h
}

/// Full Hamiltonian on cavity ⊗ spins, in the rotating frame when driven.
pub fn system_hamiltonian(p: &Params) -> M {
    let n = p.n;
    let sd = 1 << n;
    let a = lower(p.d).kronecker(&eye(sd));
    let hb = eye(p.d).kronecker(&battery_hamiltonian(p));
    let mut h = a.adjoint() * &a * c(p.omega_c) + hb;
    for i in 1..=n {
        let s = eye(p.d).kronecker(&on_site(&sm(), i, n));
        let x = s.adjoint() * &a;
        h += (&x + x.adjoint()) * c(p.g);
    }
    if let Some(f) = p.f {
        let mut number = a.adjoint() * &a;
        for i in 1..=n {
            let s = eye(p.d).kronecker(&on_site(&sm(), i, n));
            number += s.adjoint() * s;
        }
        h -= number * c(p.omega_c);
        h += (&a + a.adjoint()) * c(f);
    }
    h
}

pub fn jump_operators(p: &Params) -> Vec<(M, f64)> {
    let a = lower(p.d).kronecker(&eye(1 << p.n));
    match p.n_b {
        Some(nb) => vec![(a.clone(), p.kappa * (nb + 1.0)), (a.adjoint(), p.kappa * nb)],
        None => vec![(a, p.kappa)],
    }
}

/// Column-stacked Liouvillian: vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
pub fn liouvillian(h: &M, jumps: &[(M, f64)]) -> M {
    let d = h.nrows();
    let i = eye(d);
    let mut l = (i.kronecker(h) - h.transpose().kronecker(&i)) * C::new(0.0, -1.0);
    for (a, rate) in jumps {
        let ada = a.adjoint() * a;
        let term =
            a.map(|z| z.conj()).kronecker(a) - i.kronecker(&ada) * c(0.5) - ada.transpose().kronecker(&i) * c(0.5);
        l += term * c(*rate);
    }
    l
}

pub fn vec_of(rho: &M) -> DVector<C> {
    DVector::from_column_slice(rho.as_slice())
}

pub fn unvec(v: &DVector<C>, d: usize) -> M {
    M::from_column_slice(d, d, v.as_slice())
}

/// ρ(t) = exp(L t) ρ(0).
pub fn propagate(l: &M, rho0: &M, t: f64) -> M {
    let d = rho0.nrows();
    let prop = (l * c(t)).exp();
    unvec(&(prop * vec_of(rho0)), d)
}

/// Null vector of L normalized to unit trace, from L with one row replaced
/// by the trace functional.
pub fn null_space_steady_state(l: &M, d: usize) -> M {
    let mut a = l.clone();
    let mut b = DVector::zeros(d * d);
    for col in 0..d * d {
        a[(0, col)] = C::new(0.0, 0.0);
    }
    for k in 0..d {
        a[(0, k * d + k)] = c(1.0);
    }
    b[0] = c(1.0);
    let v = a.lu().solve(&b).expect("steady state is unique");
    let rho = unvec(&v, d);
    (&rho + rho.adjoint()) * c(0.5)
}

pub fn eigenvalues_h(m: &M) -> Vec<f64> {
    let herm = (m + m.adjoint()) * c(0.5);
    let mut ev: Vec<f64> = herm.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

pub fn trace_norm(m: &M) -> f64 {
    eigenvalues_h(m).iter().map(|x| x.abs()).sum()
}

/// Partial trace over the cavity of a cavity ⊗ spins operator.
pub fn trace_out_cavity(rho: &M, d: usize, spin_dim: usize) -> M {
    let mut out = M::zeros(spin_dim, spin_dim);
    for n in 0..d {
        out += rho.view((n * spin_dim, n * spin_dim), (spin_dim, spin_dim));
    }
    out
}

/// Ground state of the battery embedded with the cavity in vacuum.
pub fn initial_state(p: &Params) -> M {
    let hb = battery_hamiltonian(p);
    let herm = (&hb + hb.adjoint()) * c(0.5);
    let eig = herm.symmetric_eigen();
    let k = (0..eig.eigenvalues.len())
        .min_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap())
        .unwrap();
    let g = eig.eigenvectors.column(k).into_owned();
    let sd = 1 << p.n;
    let mut psi = DVector::zeros(p.d * sd);
    psi.rows_mut(0, sd).copy_from(&g);
    &psi * psi.adjoint()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// tr(ρH) minus the smallest energy reachable by assigning ρ's eigenvalues
/// to H's levels in any order.
pub fn brute_force_ergotropy(rho: &M, h: &M) -> f64 {
    let energy = (rho * h).trace().re;
    let r = eigenvalues_h(rho);
    let e = eigenvalues_h(h);
    let best = permutations(r.len())
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(k, &pk)| r[k] * e[pk]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    energy - best
}

/// Many-body levels of the clean hopping chain from free fermions: each
/// subset of the modes ω_a + 2J cos(kπ/(N+1)) is one eigenstate.
pub fn free_fermion_levels(n: usize, omega_a: f64, j: f64) -> Vec<f64> {
    let modes: Vec<f64> = (1..=n)
        .map(|k| omega_a + 2.0 * j * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
        .collect();
    let mut levels: Vec<f64> = (0..1usize << n)
        .map(|mask| (0..n).filter(|b| mask >> b & 1 == 1).map(|b| modes[b]).sum())
        .collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels
}

pub fn random_hermitian<R: Rng>(rng: &mut R, d: usize) -> M {
    let a = M::from_fn(d, d, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&a + a.adjoint()) * c(0.5)
}

/// Random full-rank-or-not density matrix A A† / tr.
pub fn random_density<R: Rng>(rng: &mut R, d: usize) -> M {
    let rank = rng.gen_range(1..=d);
    let a = M::from_fn(d, rank, |_, _| {
        C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let rho = &a * a.adjoint();
    let tr = rho.trace().re;
    rho / c(tr)
}
