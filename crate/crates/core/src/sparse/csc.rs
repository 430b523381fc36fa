use nalgebra::DMatrix;

use super::SparseError;

/// Symmetric matrix stored as its lower triangle in compressed sparse column form.
///
/// Row indices within a column are strictly increasing and the diagonal is
/// always present (possibly as an explicit zero), so it is the first entry
/// of every column.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    pub fn from_parts(
        n: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        if col_ptr.len() != n + 1 || row_idx.len() != values.len() || col_ptr[n] != row_idx.len() {
            return Err(SparseError::Malformed("array lengths"));
        }
        for j in 0..n {
            let (a, b) = (col_ptr[j], col_ptr[j + 1]);
            if a >= b || row_idx[a] != j {
                return Err(SparseError::Malformed("missing diagonal"));
            }
            if row_idx[a..b].windows(2).any(|w| w[0] >= w[1]) || row_idx[b - 1] >= n {
                return Err(SparseError::Malformed("row indices"));
            }
        }
        Ok(SparseSymmetric { n, col_ptr, row_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        SparseSymmetric { n, col_ptr: (0..=n).collect(), row_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Storage slot of the diagonal entry of column `j`.
    pub fn diag_slot(&self, j: usize) -> usize {
        self.col_ptr[j]
    }

    /// Same pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.nnz());
        SparseSymmetric { values, ..self.clone() }
    }

    /// `y = A x` using both triangles.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let v = self.values[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }

    /// Induced 1-norm (max absolute column sum of the full matrix).
    pub fn norm1(&self) -> f64 {
        let mut sums = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let v = self.values[p].abs();
                sums[j] += v;
                if i != j {
                    sums[i] += v;
                }
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                m[(i, j)] = self.values[p];
                m[(j, i)] = self.values[p];
            }
        }
        m
    }
}

/// Builds a lower-triangle CSC matrix from coordinates.
///
/// Returns the matrix and, for every input entry, the storage slot it
/// landed in, so the same pattern can be refilled without re-sorting.
/// Duplicates are summed when `accumulate` is set; otherwise the last one
/// wins. Missing diagonal entries are inserted as zeros.
pub fn coo_to_csc(
    n: usize,
    rows: &[usize],
    cols: &[usize],
    vals: &[f64],
    accumulate: bool,
) -> Result<(SparseSymmetric, Vec<usize>), SparseError> {
    if rows.len() != cols.len() || rows.len() != vals.len() {
        return Err(SparseError::Malformed("coordinate lengths"));
    }
    for (&i, &j) in rows.iter().zip(cols) {
        if i >= n || j >= n {
            return Err(SparseError::IndexOutOfRange { row: i, col: j, n });
        }
        if i < j {
            return Err(SparseError::UpperTriangleEntry { row: i, col: j });
        }
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&k| (cols[k], rows[k]));

    let mut col_ptr = vec![0usize; n + 1];
    let mut row_idx = Vec::with_capacity(rows.len() + n);
    let mut values = Vec::with_capacity(rows.len() + n);
    let mut slot_of = vec![0usize; rows.len()];
    let mut next = 0;
    for j in 0..n {
        col_ptr[j] = row_idx.len();
        row_idx.push(j);
        values.push(0.0);
        while next < order.len() && cols[order[next]] == j {
            let k = order[next];
            let i = rows[k];
            if *row_idx.last().unwrap() != i {
                row_idx.push(i);
                values.push(0.0);
            }
            let slot = row_idx.len() - 1;
            if accumulate {
                values[slot] += vals[k];
            } else {
                values[slot] = vals[k];
            }
            slot_of[k] = slot;
            next += 1;
        }
    }
    col_ptr[n] = row_idx.len();
    Ok((SparseSymmetric { n, col_ptr, row_idx, values }, slot_of))
}
