//! Sparse Liouvillian restricted to the density-matrix entries that the
//! dynamics can reach from the initial state.
//!
//! Entry (i, j) is reachable when it is in the support of ρ(0) or is fed by a
//! reachable entry through one of the generator's terms. Thermal charging,
//! for example, never couples sectors of different total excitation number,
//! so only the excitation-diagonal blocks are ever populated.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix};

use crate::{linalg, C64};

const ABSENT: u32 = u32::MAX;

/// Compressed sparse rows of a square operator; exact zeros are dropped.
#[derive(Clone, Debug)]
pub(crate) struct SparseOp {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOp {
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// Transpose, optionally conjugating the entries.
    pub fn transpose(&self, conjugate: bool) -> Self {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(j, i)] = if conjugate { v.conj() } else { v };
            }
        }
        Self::from_dense(&m)
    }

    /// Upper bound on the spectral norm, sqrt(‖A‖₁ ‖A‖_∞).
    pub fn norm_bound(&self) -> f64 {
        let mut col_sums = vec![0.0; self.dim];
        let mut row_max = 0.0f64;
        for i in 0..self.dim {
            let mut s = 0.0;
            for (j, v) in self.row(i) {
                s += v.norm();
                col_sums[j] += v.norm();
            }
            row_max = row_max.max(s);
        }
        let col_max = col_sums.iter().fold(0.0f64, |a, &b| a.max(b));
        (row_max * col_max).sqrt()
    }
}

/// One term of the generator, acting on ρ.
pub(crate) enum Term<'a> {
    /// −i (L ρ − ρ R)
    Sandwich { left: &'a SparseOp, right: &'a SparseOp },
    /// rate · A ρ A†
    Jump { op: &'a SparseOp, rate: f64 },
}

/// Reachable entries of ρ, their lookup table and the connected blocks.
#[derive(Clone, Debug)]
pub(crate) struct Pattern {
    dim: usize,
    /// (row, col) of each stored entry, ordered by column then row.
    entries: Vec<(usize, usize)>,
    lookup: Vec<u32>,
    transpose: Vec<u32>,
    diagonal: Vec<Option<u32>>,
    blocks: Vec<Vec<usize>>,
}

impl Pattern {
    /// Closure of `support` under the generator terms.
    pub fn reachable(dim: usize, support: &[(usize, usize)], terms: &[Term<'_>]) -> Self {
        // column lists: for an operator X, which rows i have X[i, k] != 0
        struct Adj {
            left_cols: Vec<Vec<usize>>,
            right_rows: Vec<Vec<usize>>,
        }
        let col_lists = |op: &SparseOp| {
            let mut out = vec![Vec::new(); dim];
            for i in 0..dim {
                for (k, _) in op.row(i) {
                    out[k].push(i);
                }
            }
            out
        };
        let row_lists = |op: &SparseOp| {
            (0..dim)
                .map(|l| op.row(l).map(|(j, _)| j).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        let adj: Vec<Adj> = terms
            .iter()
            .map(|t| match t {
                Term::Sandwich { left, right } => Adj {
                    left_cols: col_lists(left),
                    right_rows: row_lists(right),
                },
                Term::Jump { op, .. } => {
                    let c = col_lists(op);
                    Adj {
                        left_cols: c.clone(),
                        right_rows: c,
                    }
                }
            })
            .collect();

        let mut seen = vec![false; dim * dim];
        let mut queue = VecDeque::new();
        let push = |i: usize, j: usize, seen: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize)>| {
            for (a, b) in [(i, j), (j, i)] {
                if !seen[a + b * dim] {
                    seen[a + b * dim] = true;
                    queue.push_back((a, b));
                }
            }
        };
        for &(i, j) in support {
            push(i, j, &mut seen, &mut queue);
        }
        while let Some((k, l)) = queue.pop_front() {
            for (term, a) in terms.iter().zip(&adj) {
                match term {
                    Term::Sandwich { .. } => {
                        for &i in &a.left_cols[k] {
                            push(i, l, &mut seen, &mut queue);
                        }
                        for &j in &a.right_rows[l] {
                            push(k, j, &mut seen, &mut queue);
                        }
                    }
                    Term::Jump { .. } => {
                        for &i in &a.left_cols[k] {
                            for &j in &a.right_rows[l] {
                                push(i, j, &mut seen, &mut queue);
                            }
                        }
                    }
                }
            }
        }

        let mut entries = Vec::new();
        let mut lookup = vec![ABSENT; dim * dim];
        for j in 0..dim {
            for i in 0..dim {
                if seen[i + j * dim] {
                    lookup[i + j * dim] = entries.len() as u32;
                    entries.push((i, j));
                }
            }
        }
        let transpose = entries.iter().map(|&(i, j)| lookup[j + i * dim]).collect();
        let diagonal = (0..dim)
            .map(|i| Some(lookup[i + i * dim]).filter(|&p| p != ABSENT))
            .collect();
        let blocks = connected_blocks(dim, &entries);
        Self {
            dim,
            entries,
            lookup,
            transpose,
            diagonal,
            blocks,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let p = self.lookup[i + j * self.dim];
        (p != ABSENT).then_some(p as usize)
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn diagonal_position(&self, i: usize) -> Option<usize> {
        self.diagonal[i].map(|p| p as usize)
    }

    pub fn gather(&self, m: &DMatrix<C64>) -> Vec<C64> {
        self.entries.iter().map(|&(i, j)| m[(i, j)]).collect()
    }

    pub fn scatter(&self, values: &[C64]) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (&(i, j), v) in self.entries.iter().zip(values) {
            m[(i, j)] = *v;
        }
        m
    }

    pub fn trace(&self, values: &[C64]) -> f64 {
        self.diagonal.iter().flatten().map(|&p| values[p as usize].re).sum()
    }

    /// Replaces values by the Hermitian part (ρ + ρ†)/2.
    pub fn hermitize(&self, values: &mut [C64]) {
        for p in 0..values.len() {
            let q = self.transpose[p] as usize;
            if p < q {
                let avg = (values[p] + values[q].conj()) * 0.5;
                values[p] = avg;
                values[q] = avg.conj();
            } else if p == q {
                values[p].im = 0.0;
            }
        }
    }

    fn block_matrix(&self, block: &[usize], values: &[C64]) -> DMatrix<C64> {
        let n = block.len();
        DMatrix::from_fn(n, n, |a, b| {
            self.position(block[a], block[b])
                .map_or(C64::new(0.0, 0.0), |p| values[p])
        })
    }

    /// Sum of |λ| over all blocks, for Hermitian values.
    pub fn trace_norm(&self, values: &[C64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| linalg::trace_norm_hermitian(&self.block_matrix(b, values)))
            .sum()
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self, values: &[C64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                linalg::hermitian_eigenvalues(&self.block_matrix(b, values))
                    .first()
                    .copied()
                    .unwrap_or(0.0)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every eigenvalue exceeds −`tol` (Cholesky of ρ + tol·I per block).
    pub fn is_positive_within(&self, values: &[C64], tol: f64) -> bool {
        self.blocks.iter().all(|b| {
            let mut m = self.block_matrix(b, values);
            for k in 0..b.len() {
                m[(k, k)] += C64::new(tol, 0.0);
            }
            Cholesky::new(m).is_some()
        })
    }
}

fn connected_blocks(dim: usize, entries: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut used = vec![false; dim];
    for &(i, j) in entries {
        used[i] = true;
        used[j] = true;
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut roots: Vec<Option<usize>> = vec![None; dim];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in (0..dim).filter(|&i| used[i]) {
        let r = find(&mut parent, i);
        let slot = *roots[r].get_or_insert_with(|| {
            blocks.push(Vec::new());
            blocks.len() - 1
        });
        blocks[slot].push(i);
    }
    blocks
}

/// Sparse matrix acting on the pattern's value vector.
#[derive(Clone, Debug)]
pub(crate) struct Superoperator {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<C64>,
}

impl Superoperator {
    pub fn build(pattern: &Pattern, terms: &[Term<'_>]) -> Self {
        let minus_i = C64::new(0.0, -1.0);
        let plus_i = C64::new(0.0, 1.0);
        // right factors are needed column-wise: R[l, j] for fixed j
        let right_t: Vec<Option<SparseOp>> = terms
            .iter()
            .map(|t| match t {
                Term::Sandwich { right, .. } => Some(right.transpose(false)),
                Term::Jump { .. } => None,
            })
            .collect();

        let mut row_ptr = Vec::with_capacity(pattern.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut row: Vec<(u32, C64)> = Vec::new();
        row_ptr.push(0);
        for &(i, j) in pattern.entries() {
            row.clear();
            for (term, rt) in terms.iter().zip(&right_t) {
                match term {
                    Term::Sandwich { left, .. } => {
                        for (k, v) in left.row(i) {
                            if let Some(q) = pattern.position(k, j) {
                                row.push((q as u32, minus_i * v));
                            }
                        }
                        let rt = rt.as_ref().expect("sandwich term has a right factor");
                        for (l, v) in rt.row(j) {
                            if let Some(q) = pattern.position(i, l) {
                                row.push((q as u32, plus_i * v));
                            }
                        }
                    }
                    Term::Jump { op, rate } => {
                        for (k, a) in op.row(i) {
                            for (l, b) in op.row(j) {
                                if let Some(q) = pattern.position(k, l) {
                                    row.push((q as u32, a * b.conj() * *rate));
                                }
                            }
                        }
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            let mut last: Option<u32> = None;
            for &(q, v) in row.iter() {
                if last == Some(q) {
                    *vals.last_mut().expect("merged entry") += v;
                } else {
                    cols.push(q);
                    vals.push(v);
                    last = Some(q);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.row_ptr.len() - 1;
        let mut m = DMatrix::zeros(n, n);
        for p in 0..n {
            for k in self.row_ptr[p]..self.row_ptr[p + 1] {
                m[(p, self.cols[k] as usize)] += self.vals[k];
            }
        }
        m
    }

    /// out = scale · L x (overwrites `out`).
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        for (p, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[p]..self.row_ptr[p + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *o = acc;
        }
    }

    /// out += coef · L x
    pub fn apply_add(&self, coef: C64, x: &[C64], out: &mut [C64]) {
        for (p, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[p]..self.row_ptr[p + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *o += coef * acc;
        }
    }
}
