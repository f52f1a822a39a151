//! Operators on the cavity ⊗ spin-chain Hilbert space.
//!
//! Basis convention: the cavity factor comes first, then spins 1..N, so a
//! basis index is `fock * 2^N + spin_bits` with site 1 as the most significant
//! spin bit. Each spin uses `|0⟩` for the ground (spin-down) state and `|1⟩`
//! for the excited state, so `σ₋|1⟩ = |0⟩`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

/// Dense square complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexOperator(DMatrix<C64>);

impl ComplexOperator {
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(mat))
    }

    pub(crate) fn from_matrix_unchecked(mat: DMatrix<C64>) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        Self(mat)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self(DMatrix::from_diagonal(&d))
    }

    /// Builds an operator from real entries given row by row.
    pub fn from_real_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: rows.len(),
            });
        }
        Self::new(DMatrix::from_row_iterator(
            dim,
            dim,
            rows.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// max |A - A†|
    pub fn hermitian_defect(&self) -> f64 {
        linalg::hermitian_defect(&self.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * C64::new(s, 0.0))
    }

    pub fn scaled_complex(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    /// [A, B] = AB - BA
    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.0 * v
    }

    /// ⟨v|A|v⟩
    pub fn expectation_in(&self, v: &DVector<C64>) -> C64 {
        v.dotc(&(&self.0 * v))
    }
}

impl Add for &ComplexOperator {
    type Output = ComplexOperator;
    fn add(self, rhs: Self) -> ComplexOperator {
        ComplexOperator(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexOperator {
    type Output = ComplexOperator;
    fn sub(self, rhs: Self) -> ComplexOperator {
        ComplexOperator(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexOperator {
    type Output = ComplexOperator;
    fn mul(self, rhs: Self) -> ComplexOperator {
        ComplexOperator(&self.0 * &rhs.0)
    }
}

/// A Hermitian, unit-trace, positive-semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexOperator);

/// Tolerance used when validating user-supplied states.
const STATE_TOL: f64 = 1e-8;

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (down to -1e-8).
    pub fn new(op: ComplexOperator) -> Result<Self> {
        let defect = op.hermitian_defect();
        if defect > STATE_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let trace = op.trace().re;
        if (trace - 1.0).abs() > STATE_TOL {
            return Err(Error::NotNormalized { trace });
        }
        let rho = Self(op);
        let min_eigenvalue = rho.min_eigenvalue();
        if min_eigenvalue < -STATE_TOL {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(rho)
    }

    pub(crate) fn new_unchecked(op: ComplexOperator) -> Self {
        Self(op)
    }

    /// |ψ⟩⟨ψ| for a normalized vector.
    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { trace: norm * norm });
        }
        Ok(Self(ComplexOperator(psi * psi.adjoint())))
    }

    /// Gibbs state e^{-βH}/Z of a Hermitian operator.
    pub fn thermal(h: &ComplexOperator, beta: f64) -> Result<Self> {
        let defect = h.hermitian_defect();
        if defect > 1e-10 {
            return Err(Error::NotHermitian { defect });
        }
        let (energies, vectors) = linalg::hermitian_eigen(h.matrix());
        let e0 = energies[0];
        let weights: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
        let z: f64 = weights.iter().sum();
        let dim = h.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for (k, w) in weights.iter().enumerate() {
            let v = vectors.column(k);
            m += v * v.adjoint() * C64::new(w / z, 0.0);
        }
        Ok(Self(ComplexOperator(m)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexOperator::identity(dim).scaled(1.0 / dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn operator(&self) -> &ComplexOperator {
        &self.0
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        self.0.matrix()
    }

    pub fn into_operator(self) -> ComplexOperator {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// tr[A ρ]
    pub fn expectation(&self, op: &ComplexOperator) -> C64 {
        (op.matrix() * self.matrix()).trace()
    }

    pub fn purity(&self) -> f64 {
        (self.matrix() * self.matrix()).trace().re
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(self.matrix())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Tensor product with another state.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self(tensor(&self.0, &other.0))
    }
}

/// Dimensions of the cavity ⊗ N-spin space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpaceLayout {
    cavity_dim: usize,
    n_spins: usize,
}

/// A tensor factor of [`SpaceLayout`]: the cavity, or spin site `i` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Cavity,
    Spin(usize),
}

impl SpaceLayout {
    pub fn new(cavity_dim: usize, n_spins: usize) -> Result<Self> {
        if cavity_dim < 2 {
            return Err(Error::invalid("cavity_dim", format!("{cavity_dim} < 2")));
        }
        if n_spins < 1 {
            return Err(Error::invalid("n_spins", "need at least one spin"));
        }
        if n_spins > 16 {
            return Err(Error::invalid(
                "n_spins",
                format!("{n_spins} spins is too many for dense storage"),
            ));
        }
        Ok(Self { cavity_dim, n_spins })
    }

    pub fn cavity_dim(&self) -> usize {
        self.cavity_dim
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn spin_dim(&self) -> usize {
        1 << self.n_spins
    }

    pub fn total_dim(&self) -> usize {
        self.cavity_dim * self.spin_dim()
    }

    /// Basis index of `|fock⟩ ⊗ |spin_bits⟩`.
    pub fn index(&self, fock: usize, spin_bits: usize) -> usize {
        fock * self.spin_dim() + spin_bits
    }

    /// Inverse of [`SpaceLayout::index`].
    pub fn split_index(&self, index: usize) -> (usize, usize) {
        (index / self.spin_dim(), index % self.spin_dim())
    }

    /// Bit mask for spin site `i` (1-based) inside the spin bits.
    pub fn site_mask(&self, site: usize) -> usize {
        1 << (self.n_spins - site)
    }

    fn slot_dim(&self, slot: Slot) -> Result<usize> {
        match slot {
            Slot::Cavity => Ok(self.cavity_dim),
            Slot::Spin(i) if (1..=self.n_spins).contains(&i) => Ok(2),
            Slot::Spin(i) => Err(Error::InvalidSlot {
                slot: i,
                n_spins: self.n_spins,
            }),
        }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexOperator, b: &ComplexOperator) -> ComplexOperator {
    ComplexOperator(a.matrix().kronecker(b.matrix()))
}

/// Truncated bosonic annihilation operator with `⟨n-1|c|n⟩ = √n`.
pub fn annihilation(d: usize) -> Result<ComplexOperator> {
    if d < 2 {
        return Err(Error::invalid("cavity_dim", format!("{d} < 2")));
    }
    let mut m = DMatrix::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(ComplexOperator(m))
}

/// σ₋ = |0⟩⟨1|
pub fn sigma_minus() -> ComplexOperator {
    let mut m = DMatrix::zeros(2, 2);
    m[(0, 1)] = C64::new(1.0, 0.0);
    ComplexOperator(m)
}

/// σ₊ = |1⟩⟨0|
pub fn sigma_plus() -> ComplexOperator {
    sigma_minus().adjoint()
}

/// σ_z = diag(-1, +1) in the {|0⟩, |1⟩} basis.
pub fn sigma_z() -> ComplexOperator {
    ComplexOperator::from_real_diagonal(&[-1.0, 1.0])
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` placed at `slot`.
pub fn embed(op: &ComplexOperator, slot: Slot, layout: &SpaceLayout) -> Result<ComplexOperator> {
    let expected = layout.slot_dim(slot)?;
    if op.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: op.dim(),
        });
    }
    let out = match slot {
        Slot::Cavity => tensor(op, &ComplexOperator::identity(layout.spin_dim())),
        Slot::Spin(i) => {
            let left = layout.cavity_dim() << (i - 1);
            let right = 1 << (layout.n_spins() - i);
            tensor(
                &tensor(&ComplexOperator::identity(left), op),
                &ComplexOperator::identity(right),
            )
        }
    };
    Ok(out)
}

/// Embeds an operator acting on the 2^N spin space alone.
pub fn embed_spins(op: &ComplexOperator, layout: &SpaceLayout) -> Result<ComplexOperator> {
    if op.dim() != layout.spin_dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.spin_dim(),
            got: op.dim(),
        });
    }
    Ok(tensor(&ComplexOperator::identity(layout.cavity_dim()), op))
}

/// Single-spin operator at `site` acting on the 2^N spin space only.
pub fn spin_site_operator(op: &ComplexOperator, site: usize, n_spins: usize) -> Result<ComplexOperator> {
    if !(1..=n_spins).contains(&site) {
        return Err(Error::InvalidSlot { slot: site, n_spins });
    }
    if op.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: op.dim(),
        });
    }
    let left = ComplexOperator::identity(1 << (site - 1));
    let right = ComplexOperator::identity(1 << (n_spins - site));
    Ok(tensor(&tensor(&left, op), &right))
}

/// ρ_B = tr_A[ρ]: traces out the cavity factor.
pub fn partial_trace_cavity(rho: &DensityMatrix, layout: &SpaceLayout) -> Result<DensityMatrix> {
    if rho.dim() != layout.total_dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.total_dim(),
            got: rho.dim(),
        });
    }
    let ds = layout.spin_dim();
    let m = rho.matrix();
    let mut out = DMatrix::zeros(ds, ds);
    for n in 0..layout.cavity_dim() {
        out += m.view((n * ds, n * ds), (ds, ds));
    }
    Ok(DensityMatrix(ComplexOperator(out)))
}

/// ρ_A = tr_B[ρ]: traces out the spins, leaving the cavity state.
pub fn partial_trace_spins(rho: &DensityMatrix, layout: &SpaceLayout) -> Result<DensityMatrix> {
    if rho.dim() != layout.total_dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.total_dim(),
            got: rho.dim(),
        });
    }
    let ds = layout.spin_dim();
    let dc = layout.cavity_dim();
    let m = rho.matrix();
    let mut out = DMatrix::zeros(dc, dc);
    for a in 0..dc {
        for b in 0..dc {
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..ds {
                acc += m[(a * ds + s, b * ds + s)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix(ComplexOperator(out)))
}
