mod common;

use common::pglib;
use condensed_opf::acopf::{build_acopf, load_case};
use condensed_opf::bench::{diagnose_conditioning, solve_case};
use condensed_opf::ipm::{SolveStatus, SolverOptions};
use condensed_opf::kkt::KktBackend;

const CASES: [&str; 4] = ["case14_ieee", "case30_ieee", "case57_ieee", "case118_ieee"];

fn options(tol: f64, backend: KktBackend) -> SolverOptions {
    let mut o = SolverOptions::with_tol(tol);
    o.kkt_backend = backend;
    o
}

#[test]
fn ieee_cases_optimal_with_parity() {
    for name in CASES {
        let (cond, report) = solve_case(&pglib(name), &options(1e-4, KktBackend::Condensed)).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal, "{name}");
        // termination is on the scaled residual; raw violation may be larger
        assert!(report.scaled_residual <= 1e-4, "{name}: {}", report.scaled_residual);
        assert!(report.constraint_violation <= 1e-2, "{name}: {}", report.constraint_violation);
        let (aug, _) = solve_case(&pglib(name), &options(1e-4, KktBackend::Augmented)).unwrap();
        assert!(aug.is_optimal(), "{name}");
        assert!(cond.iterations <= 2 * aug.iterations, "{name}: {} vs {}", cond.iterations, aug.iterations);
    }
}

#[test]
fn variable_and_row_counts() {
    for name in CASES {
        let net = load_case(pglib(name)).unwrap();
        let (nb, ng, nl) = net.counts();
        let acopf = build_acopf(&net).unwrap();
        assert_eq!(acopf.model.n_var, 2 * nb + 2 * ng + 4 * nl);
        let ix = &acopf.index;
        let expected_rows = 1 + 4 * nl + ix.angle_branches.len() + 2 * ix.thermal_branches.len() + 2 * nb;
        assert_eq!(acopf.model.n_con, expected_rows, "{name}");
    }
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let run = || solve_case(&pglib("case30_ieee"), &options(1e-4, KktBackend::Condensed)).unwrap();
    let (r1, a) = run();
    let (r2, b) = run();
    assert_eq!(r1.numeric_columns(), r2.numeric_columns());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.x), bits(&b.x));
    assert_eq!(a.numeric_trace().len(), b.numeric_trace().len());
    for (s, t) in a.numeric_trace().iter().zip(b.numeric_trace()) {
        assert_eq!(
            [s.objective, s.inf_pr, s.inf_du, s.mu, s.alpha_primal, s.alpha_dual, s.delta_w].map(f64::to_bits),
            [t.objective, t.inf_pr, t.inf_du, t.mu, t.alpha_primal, t.alpha_dual, t.delta_w].map(f64::to_bits)
        );
    }
}

#[test]
fn condensed_conditioning_exceeds_augmented() {
    let report = diagnose_conditioning(&pglib("case118_ieee"), 1e-4, 200_000).unwrap();
    assert!(report.ratio() >= 100.0, "{report:?}");
}

#[test]
fn tight_tolerance_matches_reference_objective() {
    // published reference optimum for this case
    let (rec, _) = solve_case(&pglib("case14_ieee"), &options(1e-8, KktBackend::Augmented)).unwrap();
    assert!(rec.is_optimal());
    assert!((rec.objective - 2178.08).abs() / 2178.08 <= 1e-5, "{}", rec.objective);
}
