//! Hock–Schittkowski problem 71 through the interior-point solver:
//!
//! ```text
//! min  x0·x3·(x0 + x1 + x2) + x2
//! s.t. x0·x1·x2·x3 ≥ 25,  Σ xᵢ² = 40,  1 ≤ x ≤ 5
//! ```
//!
//! Known optimum 17.0140173 at (1, 4.743, 3.821, 1.379).

use condensed_opf::ipm::{solve, SolverOptions};
use condensed_opf::kkt::KktBackend;
use condensed_opf::model::{var, DataArray, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut m = Model::new();
    let x = m.add_variables(4, &[1.0; 4], &[5.0; 4], &[1.0, 5.0, 5.0, 1.0])?;
    let vars: Vec<usize> = x.range().collect();
    let one = |v: &[usize]| {
        let mut d = DataArray::new(4, 0);
        d.push(v, &[]);
        d
    };
    let (a, b, c, d) = (var(0), var(1), var(2), var(3));
    m.add_objective(&a * &d * (&a + &b + &c) + &c, one(&vars))?;
    m.add_range_constraints(&a * &b * &c * &d, one(&vars), &[25.0], &[f64::INFINITY])?;
    m.add_range_constraints(a.powi(2) + b.powi(2) + c.powi(2) + d.powi(2), one(&vars), &[40.0], &[40.0])?;
    let model = m.finalize()?;

    for (backend, tol) in [(KktBackend::Condensed, 1e-4), (KktBackend::Augmented, 1e-8)] {
        let mut options = SolverOptions::with_tol(tol);
        options.kkt_backend = backend;
        let r = solve(&model, &options)?;
        println!(
            "{backend:?} tol {tol:e}: {} in {} iterations, f = {:.7}, x = {:.4?}",
            r.status, r.iterations, r.objective, r.x
        );
    }
    Ok(())
}
