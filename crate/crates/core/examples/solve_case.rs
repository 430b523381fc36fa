//! Solves one MATPOWER case with the condensed-space interior-point method.
//!
//! ```text
//! cargo run --release --example solve_case -- data/pglib/pglib_opf_case14_ieee.m [tol] [augmented]
//! ```

use condensed_opf::acopf::{build_acopf, load_case};
use condensed_opf::ipm::{solve, SolverOptions};
use condensed_opf::kkt::KktBackend;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/pglib/pglib_opf_case14_ieee.m".into());
    let tol: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1e-4);
    let mut options = SolverOptions::with_tol(tol);
    if args.next().as_deref() == Some("augmented") {
        options.kkt_backend = KktBackend::Augmented;
    }

    let network = load_case(&path)?;
    let acopf = build_acopf(&network)?;
    let report = solve(&acopf.model, &options)?;
    println!(
        "{}: {} after {} iterations, objective {:.4}, violation {:.2e}, {:.3}s",
        network.name,
        report.status,
        report.iterations,
        report.objective,
        report.constraint_violation,
        report.timings.total
    );
    Ok(())
}
