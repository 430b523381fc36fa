//! Parses a MATPOWER case and prints the per-unit network summary together
//! with the size of the resulting ACOPF model.

use condensed_opf::acopf::{build_acopf, load_case, BusType};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/pglib/pglib_opf_case14_ieee.m".into());
    let net = load_case(&path)?;
    let (nb, ng, nl) = net.counts();
    println!("{} (base {} MVA): {nb} buses, {ng} generators, {nl} branches", net.name, net.base_mva);

    let load: f64 = net.buses.iter().map(|b| b.pd).sum();
    let cap: f64 = net.generators.iter().map(|g| g.pmax).sum();
    let pv = net.buses.iter().filter(|b| b.kind == BusType::Pv).count();
    println!("total load {load:.3} pu, generation capacity {cap:.3} pu, {pv} PV buses");
    println!("reference bus id {}", net.buses[net.reference_bus()].id);
    let limited = net.branches.iter().filter(|b| b.rate_a > 0.0).count();
    println!("{limited} branches with thermal limits");

    let acopf = build_acopf(&net)?;
    let model = &acopf.model;
    println!(
        "ACOPF: {} variables, {} constraints, {} pattern blocks, jacobian nnz {}, hessian nnz {}",
        model.n_var,
        model.n_con,
        model.n_blocks(),
        model.jac_nnz(),
        model.hess_nnz()
    );
    Ok(())
}
