//! AMD ordering, symbolic analysis and repeated numeric refactorization of a
//! 2-D Laplacian, followed by a solve and a condition estimate.

use std::sync::Arc;

use condensed_opf::sparse::{
    amd_order, coo_to_csc, estimate_condition, symbolic_cholesky, CholeskyFactor, SymmetricSolve,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = 30;
    let n = k * k;
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..k {
        for j in 0..k {
            let p = i * k + j;
            rows.push(p);
            cols.push(p);
            vals.push(4.0);
            if j + 1 < k {
                rows.push(p + 1);
                cols.push(p);
                vals.push(-1.0);
            }
            if i + 1 < k {
                rows.push(p + k);
                cols.push(p);
                vals.push(-1.0);
            }
        }
    }
    let (a, _) = coo_to_csc(n, &rows, &cols, &vals, true)?;

    let natural: Vec<usize> = (0..n).collect();
    let amd = amd_order(&a);
    let sym_nat = symbolic_cholesky(&a, &natural)?;
    let sym_amd = Arc::new(symbolic_cholesky(&a, &amd)?);
    println!("n = {n}, nnz(A lower) = {}", a.nnz());
    println!("nnz(L) natural order {}, AMD order {}", sym_nat.factor_nnz(), sym_amd.factor_nnz());

    let mut factor = CholeskyFactor::new(Arc::clone(&sym_amd));
    for shift in [0.0, 1e-2, 1.0] {
        let shifted: Vec<f64> = a
            .values()
            .iter()
            .enumerate()
            .map(|(slot, v)| if a.row_idx()[slot] == col_of(&a, slot) { v + shift } else { *v })
            .collect();
        let m = a.with_values(shifted);
        factor.refactor(&m)?;
        let mut x = vec![1.0; n];
        factor.solve_in_place(&mut x);
        let mut r = vec![0.0; n];
        m.matvec(&x, &mut r);
        let resid = r.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        println!("shift {shift:>5}: residual {resid:.1e}, kappa_1 estimate {:.3e}", estimate_condition(&m, &factor));
    }
    Ok(())
}

fn col_of(a: &condensed_opf::sparse::SparseSymmetric, slot: usize) -> usize {
    a.col_ptr().partition_point(|&p| p <= slot) - 1
}
