//! Condition estimates of the condensed and augmented KKT matrices at the
//! final iterate of a solve.

use std::path::Path;

use condensed_opf::bench::diagnose_conditioning;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/pglib/pglib_opf_case118_ieee.m".into());
    let tol = std::env::args().nth(2).map(|s| s.parse()).transpose()?.unwrap_or(1e-4);
    let report = diagnose_conditioning(Path::new(&path), tol, 200_000)?;
    println!("final iterate after {} iterations at tol {tol:e}", report.iterations);
    println!("condensed kappa_1  {:.3e}", report.condensed);
    println!("augmented kappa_1  {:.3e}", report.augmented);
    println!("ratio              {:.1}", report.ratio());
    Ok(())
}
