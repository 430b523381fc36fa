//! Runs every case in a directory through the solver and prints the
//! results table and CSV.

use std::path::PathBuf;

use condensed_opf::bench::{render_csv, render_table, run_suite};
use condensed_opf::ipm::SolverOptions;

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/pglib".into());
    let mut cases: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "m"))
        .collect();
    cases.sort();
    let records = run_suite(&cases, &SolverOptions::default(), 4);
    print!("{}", render_table(&records));
    println!();
    print!("{}", render_csv(&records));
    Ok(())
}
