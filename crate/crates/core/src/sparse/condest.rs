//! Hager's 1-norm estimator with Higham's refinements (the LAPACK `dlacon`
//! scheme), specialised to symmetric operators so that `A⁻ᵀ = A⁻¹`.

use super::{SparseSymmetric, SymmetricSolve};

const MAX_ITER: usize = 5;

/// Lower bound on `‖A⁻¹‖₁`, usually within a small factor of the truth.
pub fn estimate_inverse_norm1<S: SymmetricSolve + ?Sized>(solver: &S) -> f64 {
    let n = solver.dim();
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0f64;
    let mut last_j = usize::MAX;
    let mut last_sign: Vec<f64> = Vec::new();
    for iter in 0..MAX_ITER {
        solver.solve_in_place(&mut x);
        let new_est: f64 = x.iter().map(|v| v.abs()).sum();
        if iter > 0 && new_est <= est {
            break;
        }
        est = new_est;
        let sign: Vec<f64> = x.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        if sign == last_sign {
            break;
        }
        let mut z = sign.clone();
        solver.solve_in_place(&mut z);
        let (j, zmax) =
            z.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bj, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bj, bv) });
        let ztx = if iter == 0 { z.iter().sum::<f64>() / n as f64 } else { z[last_j] };
        if iter > 0 && (j == last_j || zmax <= ztx) {
            break;
        }
        last_sign = sign;
        last_j = j;
        x.fill(0.0);
        x[j] = 1.0;
    }

    // alternating test vector guards against the estimate stalling
    let mut alt: Vec<f64> = (0..n)
        .map(|i| {
            let mag = if n > 1 { 1.0 + i as f64 / (n - 1) as f64 } else { 1.0 };
            if i % 2 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect();
    solver.solve_in_place(&mut alt);
    let alt_est = 2.0 * alt.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    est.max(alt_est)
}

/// Estimated `κ₁(A) = ‖A‖₁ ‖A⁻¹‖₁` given a factorization of `a`.
pub fn estimate_condition<S: SymmetricSolve + ?Sized>(a: &SparseSymmetric, solver: &S) -> f64 {
    a.norm1() * estimate_inverse_norm1(solver)
}
