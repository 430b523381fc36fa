//! Condensed backend: `(W + δw I + Σx + Aᵀ D A) Δx = qx + Aᵀ(C qs + D qy)`.

use std::sync::Arc;

use super::{condition_of, KktData, ReducedSolver};
use crate::sparse::{amd_order, coo_to_csc, symbolic_cholesky, CholeskyFactor, SparseSymmetric};

/// Lower-triangle pattern of the condensed matrix and the slot maps that
/// let numeric assembly skip all structural work.
#[derive(Clone, Debug)]
pub struct CondensedPattern {
    pub matrix: SparseSymmetric,
    /// Hessian entry `k` lands in `hess_slots[k]`.
    pub hess_slots: Vec<usize>,
    /// Diagonal slot of each column.
    pub diag_slots: Vec<usize>,
    /// For constraint row `i`, `products[product_ptr[i]..product_ptr[i+1]]`
    /// holds `(slot, ka, kb)`: `D_i A[ka] A[kb]` is added to `slot`.
    pub product_ptr: Vec<usize>,
    pub products: Vec<(usize, usize, usize)>,
}

/// Structure of `W + diag + AᵀA` and where each contribution goes.
/// The Jacobian coordinates may come in any order; entries sharing a
/// (row, column) pair are treated as separate contributions.
pub fn symbolic_condense(
    n: usize,
    m: usize,
    hess_rows: &[usize],
    hess_cols: &[usize],
    jac_rows: &[usize],
    jac_cols: &[usize],
) -> CondensedPattern {
    let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (k, &i) in jac_rows.iter().enumerate() {
        by_row[i].push(k);
    }
    let mut rows: Vec<usize> = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    rows.extend_from_slice(hess_rows);
    cols.extend_from_slice(hess_cols);
    rows.extend(0..n);
    cols.extend(0..n);
    let mut product_ptr = vec![0usize; m + 1];
    let mut pairs = Vec::new();
    for (i, ks) in by_row.iter().enumerate() {
        for (u, &ka) in ks.iter().enumerate() {
            for &kb in &ks[..=u] {
                let (ca, cb) = (jac_cols[ka], jac_cols[kb]);
                rows.push(ca.max(cb));
                cols.push(ca.min(cb));
                pairs.push((ka, kb));
            }
        }
        product_ptr[i + 1] = pairs.len();
    }
    let zeros = vec![0.0; rows.len()];
    let (matrix, slots) = coo_to_csc(n, &rows, &cols, &zeros, true).expect("condensed pattern is lower triangular");
    let nh = hess_rows.len();
    let hess_slots = slots[..nh].to_vec();
    let diag_slots = slots[nh..nh + n].to_vec();
    let products = pairs.iter().zip(&slots[nh + n..]).map(|(&(ka, kb), &slot)| (slot, ka, kb)).collect();
    CondensedPattern { matrix, hess_slots, diag_slots, product_ptr, products }
}

pub struct CondensedSolver {
    pattern: CondensedPattern,
    factor: CholeskyFactor,
    factored: bool,
}

impl CondensedSolver {
    pub fn new(data: &KktData) -> Self {
        let pattern =
            symbolic_condense(data.n, data.m, &data.hess_rows, &data.hess_cols, &data.jac_rows, &data.jac_cols);
        let perm = amd_order(&pattern.matrix);
        let symbolic = Arc::new(symbolic_cholesky(&pattern.matrix, &perm).expect("AMD returns a permutation"));
        CondensedSolver { factor: CholeskyFactor::new(symbolic), pattern, factored: false }
    }

    pub fn pattern(&self) -> &CondensedPattern {
        &self.pattern
    }

    /// The condensed matrix as last assembled.
    pub fn matrix(&self) -> &SparseSymmetric {
        &self.pattern.matrix
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// Writes `W + δw I + Σx + Aᵀ D A` into the pattern. `C` and `D` must
    /// already match the regularization in `data`.
    pub fn assemble_condensed(&mut self, data: &KktData) {
        let p = &mut self.pattern;
        let vals = p.matrix.values_mut();
        vals.fill(0.0);
        for (k, &slot) in p.hess_slots.iter().enumerate() {
            vals[slot] += data.w[k];
        }
        for (j, &slot) in p.diag_slots.iter().enumerate() {
            vals[slot] += data.delta_w + data.sigma_x[j];
        }
        for i in 0..data.m {
            let di = data.d[i];
            for &(slot, ka, kb) in &p.products[p.product_ptr[i]..p.product_ptr[i + 1]] {
                vals[slot] += di * data.a[ka] * data.a[kb];
            }
        }
    }
}

/// `qx + Aᵀ(C qs + D qy)`
pub fn build_condensed_rhs(data: &KktData, qx: &[f64], qs: &[f64], qy: &[f64]) -> Vec<f64> {
    let t: Vec<f64> = (0..data.m).map(|i| data.c[i] * qs[i] + data.d[i] * qy[i]).collect();
    let mut rhs = data.jac_t_mul(&t);
    for (r, q) in rhs.iter_mut().zip(qx) {
        *r += q;
    }
    rhs
}

/// Back-substitution for the eliminated blocks:
/// `Δs = C(A Δx − qy + δc qs)` and `Δy = (Σs + δw I) Δs − qs`.
pub fn recover_slack_dual(data: &KktData, dx: &[f64], qs: &[f64], qy: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ax = data.jac_mul(dx);
    let mut ds = vec![0.0; data.m];
    let mut dy = vec![0.0; data.m];
    for i in 0..data.m {
        ds[i] = data.c[i] * (ax[i] - qy[i] + data.delta_c * qs[i]);
        dy[i] = (data.sigma_s[i] + data.delta_w) * ds[i] - qs[i];
    }
    (ds, dy)
}

impl ReducedSolver for CondensedSolver {
    fn factorize(&mut self, data: &KktData) -> bool {
        self.assemble_condensed(data);
        self.factored = self.factor.refactor(&self.pattern.matrix).is_ok();
        self.factored
    }

    fn solve(&self, data: &KktData, qx: &[f64], qs: &[f64], qy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        use crate::sparse::SymmetricSolve;
        let mut dx = build_condensed_rhs(data, qx, qs, qy);
        self.factor.solve_in_place(&mut dx);
        let (ds, dy) = recover_slack_dual(data, &dx, qs, qy);
        (dx, ds, dy)
    }

    fn condition_estimate(&self) -> f64 {
        if !self.factored {
            return f64::INFINITY;
        }
        condition_of(&self.pattern.matrix, &self.factor)
    }

    fn dimension(&self) -> usize {
        self.pattern.matrix.n()
    }
}
