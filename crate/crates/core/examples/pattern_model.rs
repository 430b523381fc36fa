//! Builds a small model from pattern blocks and evaluates its derivatives.
//!
//! The objective is `Σ (x_i − c_i)²` and each constraint chains two
//! neighbours through `x_i · sin(x_{i+1}) = t_i`, with an extra increment
//! block adding `x_0` to every row.

use condensed_opf::model::{param, var, DataArray, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4;
    let mut m = Model::new();
    let x = m.add_variables(n, &vec![-2.0; n], &vec![2.0; n], &vec![0.5; n])?;

    let mut obj = DataArray::new(1, 1);
    for i in 0..n {
        obj.push(&[x.index(i)], &[i as f64 * 0.3]);
    }
    m.add_objective((var(0) - param(0)).powi(2), obj)?;

    let mut chain = DataArray::new(2, 1);
    for i in 0..n - 1 {
        chain.push(&[x.index(i), x.index(i + 1)], &[0.1 * i as f64]);
    }
    let rows = m.add_constraints(var(0) * var(1).sin() - param(0), chain)?;

    let mut inc = DataArray::new(1, 0);
    for r in rows.clone() {
        inc.push_to(r, &[x.index(0)], &[]);
    }
    m.add_constraint_increments(var(0), inc)?;

    let model = m.finalize()?;
    println!("{} variables, {} constraints, {} pattern blocks", model.n_var, model.n_con, model.n_blocks());
    println!("jacobian nnz {}, hessian nnz (lower) {}", model.jac_nnz(), model.hess_nnz());

    let pt = vec![0.3, -0.7, 1.1, 0.4];
    let mut g = vec![0.0; model.n_con];
    let mut grad = vec![0.0; model.n_var];
    let mut jac = vec![0.0; model.jac_nnz()];
    let mut hess = vec![0.0; model.hess_nnz()];
    model.eval_constraints(&pt, &mut g)?;
    model.eval_gradient(&pt, &mut grad)?;
    model.eval_jacobian(&pt, &mut jac)?;
    model.eval_lagrangian_hessian(&pt, &[1.0, -0.5, 2.0], 1.0, &mut hess)?;

    println!("f = {:.6}", model.eval_objective(&pt)?);
    println!("g = {g:.6?}");
    println!("grad = {grad:.6?}");
    for ((i, j), v) in model.jac_rows.iter().zip(&model.jac_cols).zip(&jac) {
        println!("  J[{i}, {j}] = {v:+.6}");
    }
    for ((i, j), v) in model.hess_rows.iter().zip(&model.hess_cols).zip(&hess) {
        println!("  H[{i}, {j}] = {v:+.6}");
    }
    Ok(())
}
