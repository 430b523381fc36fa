//! Up-looking sparse Cholesky (LLᵀ) and LDLᵀ with a fixed pivot sequence.
//!
//! [`symbolic_cholesky`] runs once per sparsity pattern: it permutes the
//! pattern, builds the elimination tree, and records the row structure of
//! the factor in topological order together with the storage position of
//! every factor entry. Numeric refactorization then replays that schedule
//! without any graph traversal, so the same values always produce the same
//! bits.

use std::sync::Arc;

use super::{SparseError, SparseSymmetric};

/// Pivots at or below this value are treated as non-positive.
pub const PIVOT_FLOOR: f64 = 1e-30;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct SymbolicFactorization {
    n: usize,
    perm: Vec<usize>,
    parent: Vec<usize>,
    col_counts: Vec<usize>,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    // upper triangle of P A Pᵀ, column k holds rows i <= k
    c_col_ptr: Vec<usize>,
    c_row_idx: Vec<usize>,
    // input storage slot -> slot in the permuted upper pattern
    value_map: Vec<usize>,
    // row k of L: columns i < k in topological order, and where L(k, i) lives
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_pos: Vec<usize>,
    input_col_ptr: Vec<usize>,
    input_row_idx: Vec<usize>,
}

impl SymbolicFactorization {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Elimination tree of the permuted matrix; `None` marks a root.
    pub fn parent(&self, k: usize) -> Option<usize> {
        (self.parent[k] != NONE).then_some(self.parent[k])
    }

    /// Entries per factor column, diagonal included.
    pub fn col_counts(&self) -> &[usize] {
        &self.col_counts
    }

    /// Nonzeros of the factor, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.l_row_idx.len()
    }

    pub fn factor_col_ptr(&self) -> &[usize] {
        &self.l_col_ptr
    }

    pub fn factor_row_idx(&self) -> &[usize] {
        &self.l_row_idx
    }

    fn check_pattern(&self, a: &SparseSymmetric) -> Result<(), SparseError> {
        if a.col_ptr() != self.input_col_ptr.as_slice() || a.row_idx() != self.input_row_idx.as_slice() {
            return Err(SparseError::PatternMismatch);
        }
        Ok(())
    }
}

/// Symbolic analysis of `a` under the elimination order `perm`
/// (`perm[k]` = original index eliminated k-th).
pub fn symbolic_cholesky(a: &SparseSymmetric, perm: &[usize]) -> Result<SymbolicFactorization, SparseError> {
    let n = a.n();
    if perm.len() != n {
        return Err(SparseError::InvalidPermutation);
    }
    let mut iperm = vec![NONE; n];
    for (k, &i) in perm.iter().enumerate() {
        if i >= n || iperm[i] != NONE {
            return Err(SparseError::InvalidPermutation);
        }
        iperm[i] = k;
    }

    // permuted upper pattern C = (P A Pᵀ) upper, with slot map
    let mut counts = vec![0usize; n];
    let mut coords = Vec::with_capacity(a.nnz());
    for j in 0..n {
        for p in a.col_ptr()[j]..a.col_ptr()[j + 1] {
            let (pi, pj) = (iperm[a.row_idx()[p]], iperm[j]);
            let (r, c) = (pi.min(pj), pi.max(pj));
            counts[c] += 1;
            coords.push((c, r, p));
        }
    }
    coords.sort_unstable();
    let mut c_col_ptr = vec![0usize; n + 1];
    for k in 0..n {
        c_col_ptr[k + 1] = c_col_ptr[k] + counts[k];
    }
    let mut c_row_idx = Vec::with_capacity(coords.len());
    let mut value_map = vec![0usize; a.nnz()];
    for (slot, &(_, r, p)) in coords.iter().enumerate() {
        c_row_idx.push(r);
        value_map[p] = slot;
    }

    // elimination tree
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in c_col_ptr[k]..c_col_ptr[k + 1] {
            let mut i = c_row_idx[p];
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }

    // row structures via elimination-tree reach, in topological order
    let mut mark = vec![NONE; n];
    let mut stack = vec![0usize; n];
    let mut path = vec![0usize; n];
    let mut row_ptr = vec![0usize; n + 1];
    let mut row_cols = Vec::new();
    let mut col_counts = vec![1usize; n];
    for k in 0..n {
        mark[k] = k;
        let mut top = n;
        for p in c_col_ptr[k]..c_col_ptr[k + 1] {
            let mut i = c_row_idx[p];
            if i >= k {
                continue;
            }
            let mut len = 0;
            while mark[i] != k {
                path[len] = i;
                len += 1;
                mark[i] = k;
                i = parent[i];
            }
            while len > 0 {
                len -= 1;
                top -= 1;
                stack[top] = path[len];
            }
        }
        for &i in &stack[top..n] {
            row_cols.push(i);
            col_counts[i] += 1;
        }
        row_ptr[k + 1] = row_cols.len();
    }

    let mut l_col_ptr = vec![0usize; n + 1];
    for j in 0..n {
        l_col_ptr[j + 1] = l_col_ptr[j] + col_counts[j];
    }
    let mut l_row_idx = vec![0usize; l_col_ptr[n]];
    let mut next = l_col_ptr.clone();
    let mut row_pos = vec![0usize; row_cols.len()];
    for k in 0..n {
        // column k's diagonal comes first: nothing was appended to it before step k
        l_row_idx[next[k]] = k;
        next[k] += 1;
        for t in row_ptr[k]..row_ptr[k + 1] {
            let i = row_cols[t];
            row_pos[t] = next[i];
            l_row_idx[next[i]] = k;
            next[i] += 1;
        }
    }
    // The diagonal of column k is written at step k, after rows of earlier
    // steps were appended to earlier columns only, so l_col_ptr[k] is the diagonal.

    Ok(SymbolicFactorization {
        n,
        perm: perm.to_vec(),
        parent,
        col_counts,
        l_col_ptr,
        l_row_idx,
        c_col_ptr,
        c_row_idx,
        value_map,
        row_ptr,
        row_cols,
        row_pos,
        input_col_ptr: a.col_ptr().to_vec(),
        input_row_idx: a.row_idx().to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorStatus {
    Unfactored,
    Success,
    /// A pivot at or below [`PIVOT_FLOOR`]; `column` is in original numbering.
    NotPositiveDefinite {
        column: usize,
    },
    /// LDLᵀ pivot with magnitude at or below [`PIVOT_FLOOR`].
    ZeroPivot {
        column: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("matrix is not positive definite (pivot at column {column})")]
pub struct NotPositiveDefinite {
    pub column: usize,
}

/// Eigenvalue sign counts (positive, zero, negative).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

/// Anything that can apply the inverse of a symmetric matrix.
pub trait SymmetricSolve {
    fn dim(&self) -> usize;
    fn solve_in_place(&self, rhs: &mut [f64]);
}

fn gather_permuted(sym: &SymbolicFactorization, a: &SparseSymmetric, cx: &mut [f64]) {
    for (p, &v) in a.values().iter().enumerate() {
        cx[sym.value_map[p]] = v;
    }
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` on a fixed symbolic structure.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicFactorization>,
    lx: Vec<f64>,
    cx: Vec<f64>,
    work: Vec<f64>,
    status: FactorStatus,
}

impl CholeskyFactor {
    pub fn new(symbolic: Arc<SymbolicFactorization>) -> Self {
        let n = symbolic.n;
        CholeskyFactor {
            lx: vec![0.0; symbolic.factor_nnz()],
            cx: vec![0.0; symbolic.c_row_idx.len()],
            work: vec![0.0; n],
            symbolic,
            status: FactorStatus::Unfactored,
        }
    }

    pub fn symbolic(&self) -> &Arc<SymbolicFactorization> {
        &self.symbolic
    }

    pub fn status(&self) -> FactorStatus {
        self.status
    }

    /// Factor values in the symbolic column layout (diagonal first per column).
    pub fn values(&self) -> &[f64] {
        &self.lx
    }

    /// Numeric refactorization with the stored pivot order.
    pub fn refactor(&mut self, a: &SparseSymmetric) -> Result<(), NotPositiveDefinite> {
        let sym = Arc::clone(&self.symbolic);
        sym.check_pattern(a).expect("matrix pattern differs from symbolic analysis");
        gather_permuted(&sym, a, &mut self.cx);
        let x = &mut self.work;
        x.fill(0.0);
        for k in 0..sym.n {
            for p in sym.c_col_ptr[k]..sym.c_col_ptr[k + 1] {
                x[sym.c_row_idx[p]] = self.cx[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for t in sym.row_ptr[k]..sym.row_ptr[k + 1] {
                let i = sym.row_cols[t];
                let pos = sym.row_pos[t];
                let lki = x[i] / self.lx[sym.l_col_ptr[i]];
                x[i] = 0.0;
                for p in sym.l_col_ptr[i] + 1..pos {
                    x[sym.l_row_idx[p]] -= self.lx[p] * lki;
                }
                d -= lki * lki;
                self.lx[pos] = lki;
            }
            if !(d > PIVOT_FLOOR) {
                // leave the scratch clean for the next attempt
                x.fill(0.0);
                let column = sym.perm[k];
                self.status = FactorStatus::NotPositiveDefinite { column };
                return Err(NotPositiveDefinite { column });
            }
            self.lx[sym.l_col_ptr[k]] = d.sqrt();
        }
        self.status = FactorStatus::Success;
        Ok(())
    }
}

impl SymmetricSolve for CholeskyFactor {
    fn dim(&self) -> usize {
        self.symbolic.n
    }

    /// Solves `A x = b` in place: permute, forward, backward, unpermute.
    fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(self.status, FactorStatus::Success, "solve with a failed factor");
        let sym = &self.symbolic;
        let n = sym.n;
        let mut y: Vec<f64> = (0..n).map(|k| rhs[sym.perm[k]]).collect();
        for j in 0..n {
            let start = sym.l_col_ptr[j];
            y[j] /= self.lx[start];
            let yj = y[j];
            for p in start + 1..sym.l_col_ptr[j + 1] {
                y[sym.l_row_idx[p]] -= self.lx[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let start = sym.l_col_ptr[j];
            let mut s = y[j];
            for p in start + 1..sym.l_col_ptr[j + 1] {
                s -= self.lx[p] * y[sym.l_row_idx[p]];
            }
            y[j] = s / self.lx[start];
        }
        for k in 0..n {
            rhs[sym.perm[k]] = y[k];
        }
    }
}

/// Fresh factor for `a` on `symbolic`.
pub fn factorize(
    symbolic: &Arc<SymbolicFactorization>,
    a: &SparseSymmetric,
) -> Result<CholeskyFactor, NotPositiveDefinite> {
    let mut f = CholeskyFactor::new(Arc::clone(symbolic));
    f.refactor(a)?;
    Ok(f)
}

/// `P A Pᵀ = L D Lᵀ` with unit `L`, no pivoting. Used for indefinite
/// systems whose inertia is read off the signs of `D`.
#[derive(Clone, Debug)]
pub struct LdlFactor {
    symbolic: Arc<SymbolicFactorization>,
    lx: Vec<f64>,
    d: Vec<f64>,
    cx: Vec<f64>,
    work: Vec<f64>,
    status: FactorStatus,
}

impl LdlFactor {
    pub fn new(symbolic: Arc<SymbolicFactorization>) -> Self {
        let n = symbolic.n;
        LdlFactor {
            lx: vec![0.0; symbolic.factor_nnz()],
            d: vec![0.0; n],
            cx: vec![0.0; symbolic.c_row_idx.len()],
            work: vec![0.0; n],
            symbolic,
            status: FactorStatus::Unfactored,
        }
    }

    pub fn status(&self) -> FactorStatus {
        self.status
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }

    pub fn inertia(&self) -> Inertia {
        let mut inertia = Inertia::default();
        for &d in &self.d {
            if d > PIVOT_FLOOR {
                inertia.positive += 1;
            } else if d < -PIVOT_FLOOR {
                inertia.negative += 1;
            } else {
                inertia.zero += 1;
            }
        }
        inertia
    }

    /// Returns the inertia on success; a zero pivot aborts the factorization.
    pub fn refactor(&mut self, a: &SparseSymmetric) -> Result<Inertia, usize> {
        let sym = Arc::clone(&self.symbolic);
        sym.check_pattern(a).expect("matrix pattern differs from symbolic analysis");
        gather_permuted(&sym, a, &mut self.cx);
        let x = &mut self.work;
        x.fill(0.0);
        for k in 0..sym.n {
            for p in sym.c_col_ptr[k]..sym.c_col_ptr[k + 1] {
                x[sym.c_row_idx[p]] = self.cx[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for t in sym.row_ptr[k]..sym.row_ptr[k + 1] {
                let i = sym.row_cols[t];
                let pos = sym.row_pos[t];
                let yi = x[i];
                x[i] = 0.0;
                for p in sym.l_col_ptr[i] + 1..pos {
                    x[sym.l_row_idx[p]] -= self.lx[p] * yi;
                }
                let lki = yi / self.d[i];
                d -= lki * yi;
                self.lx[pos] = lki;
            }
            self.lx[sym.l_col_ptr[k]] = 1.0;
            self.d[k] = d;
            if !(d.abs() > PIVOT_FLOOR) {
                x.fill(0.0);
                self.d[k + 1..].fill(0.0);
                let column = sym.perm[k];
                self.status = FactorStatus::ZeroPivot { column };
                return Err(column);
            }
        }
        self.status = FactorStatus::Success;
        Ok(self.inertia())
    }
}

impl SymmetricSolve for LdlFactor {
    fn dim(&self) -> usize {
        self.symbolic.n
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(self.status, FactorStatus::Success, "solve with a failed factor");
        let sym = &self.symbolic;
        let n = sym.n;
        let mut y: Vec<f64> = (0..n).map(|k| rhs[sym.perm[k]]).collect();
        for j in 0..n {
            let yj = y[j];
            for p in sym.l_col_ptr[j] + 1..sym.l_col_ptr[j + 1] {
                y[sym.l_row_idx[p]] -= self.lx[p] * yj;
            }
        }
        for j in 0..n {
            y[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for p in sym.l_col_ptr[j] + 1..sym.l_col_ptr[j + 1] {
                s -= self.lx[p] * y[sym.l_row_idx[p]];
            }
            y[j] = s;
        }
        for k in 0..n {
            rhs[sym.perm[k]] = y[k];
        }
    }
}
