//! Reference backend: LDLᵀ of the full 3×3 augmented matrix with an
//! explicit inertia check against `(n + m, 0, m)`.
//!
//! Unknowns are laid out as `[x (n) | s (m) | y (m)]`. The elimination
//! order comes from AMD on the graph of `x` and `y` only, and every `s_i`
//! is placed immediately before its `y_i`. Eliminating `s_i` first gives
//! `y_i` the pivot `−δc − 1/(Σs_i + δw)`, which is strictly negative, so the
//! static pivot sequence never meets a structurally zero pivot.

use std::sync::Arc;

use super::{condition_of, KktData, ReducedSolver};
use crate::sparse::{amd_order, coo_to_csc, symbolic_cholesky, Inertia, LdlFactor, SparseSymmetric, SymmetricSolve};

pub struct AugmentedSolver {
    n: usize,
    m: usize,
    matrix: SparseSymmetric,
    hess_slots: Vec<usize>,
    jac_slots: Vec<usize>,
    x_diag: Vec<usize>,
    s_diag: Vec<usize>,
    y_diag: Vec<usize>,
    sy_slots: Vec<usize>,
    factor: LdlFactor,
    inertia: Option<Inertia>,
}

impl AugmentedSolver {
    pub fn new(data: &KktData) -> Self {
        let (n, m) = (data.n, data.m);
        let dim = n + 2 * m;
        let (s0, y0) = (n, n + m);
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        rows.extend_from_slice(&data.hess_rows);
        cols.extend_from_slice(&data.hess_cols);
        rows.extend(data.jac_rows.iter().map(|&i| y0 + i));
        cols.extend_from_slice(&data.jac_cols);
        rows.extend(0..dim);
        cols.extend(0..dim);
        rows.extend((0..m).map(|i| y0 + i));
        cols.extend((0..m).map(|i| s0 + i));
        let zeros = vec![0.0; rows.len()];
        let (matrix, slots) =
            coo_to_csc(dim, &rows, &cols, &zeros, true).expect("augmented pattern is lower triangular");
        let (nh, nj) = (data.hess_rows.len(), data.jac_rows.len());
        let mut at = 0;
        let mut take = |len: usize| {
            let v = slots[at..at + len].to_vec();
            at += len;
            v
        };
        let hess_slots = take(nh);
        let jac_slots = take(nj);
        let x_diag = take(n);
        let s_diag = take(m);
        let y_diag = take(m);
        let sy_slots = take(m);

        // graph on x and y: W, A and diagonals
        let mut grows: Vec<usize> = data.hess_rows.clone();
        let mut gcols: Vec<usize> = data.hess_cols.clone();
        grows.extend(data.jac_rows.iter().map(|&i| n + i));
        gcols.extend_from_slice(&data.jac_cols);
        let (graph, _) = coo_to_csc(n + m, &grows, &gcols, &vec![0.0; grows.len()], true)
            .expect("graph pattern is lower triangular");
        let mut perm = Vec::with_capacity(dim);
        for v in amd_order(&graph) {
            if v < n {
                perm.push(v);
            } else {
                let i = v - n;
                perm.push(s0 + i);
                perm.push(y0 + i);
            }
        }
        let symbolic = Arc::new(symbolic_cholesky(&matrix, &perm).expect("ordering is a permutation"));
        AugmentedSolver {
            n,
            m,
            matrix,
            hess_slots,
            jac_slots,
            x_diag,
            s_diag,
            y_diag,
            sy_slots,
            factor: LdlFactor::new(symbolic),
            inertia: None,
        }
    }

    pub fn matrix(&self) -> &SparseSymmetric {
        &self.matrix
    }

    /// Inertia of the last factorization that reached the end.
    pub fn inertia(&self) -> Option<Inertia> {
        self.inertia
    }

    fn assemble(&mut self, data: &KktData) {
        let vals = self.matrix.values_mut();
        vals.fill(0.0);
        for (k, &slot) in self.hess_slots.iter().enumerate() {
            vals[slot] += data.w[k];
        }
        for (k, &slot) in self.jac_slots.iter().enumerate() {
            vals[slot] += data.a[k];
        }
        for (j, &slot) in self.x_diag.iter().enumerate() {
            vals[slot] += data.sigma_x[j] + data.delta_w;
        }
        for i in 0..self.m {
            vals[self.s_diag[i]] += data.sigma_s[i] + data.delta_w;
            vals[self.y_diag[i]] -= data.delta_c;
            vals[self.sy_slots[i]] -= 1.0;
        }
    }
}

impl ReducedSolver for AugmentedSolver {
    fn factorize(&mut self, data: &KktData) -> bool {
        self.assemble(data);
        match self.factor.refactor(&self.matrix) {
            Ok(inertia) => {
                self.inertia = Some(inertia);
                inertia == Inertia { positive: self.n + self.m, zero: 0, negative: self.m }
            }
            Err(_) => {
                self.inertia = None;
                false
            }
        }
    }

    fn solve(&self, _data: &KktData, qx: &[f64], qs: &[f64], qy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rhs = Vec::with_capacity(self.n + 2 * self.m);
        rhs.extend_from_slice(qx);
        rhs.extend_from_slice(qs);
        rhs.extend_from_slice(qy);
        self.factor.solve_in_place(&mut rhs);
        let dy = rhs.split_off(self.n + self.m);
        let ds = rhs.split_off(self.n);
        (rhs, ds, dy)
    }

    fn condition_estimate(&self) -> f64 {
        if self.inertia.is_none() {
            return f64::INFINITY;
        }
        condition_of(&self.matrix, &self.factor)
    }

    fn dimension(&self) -> usize {
        self.n + 2 * self.m
    }
}
