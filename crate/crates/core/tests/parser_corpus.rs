mod common;

use std::f64::consts::PI;

use common::{corpus, network_difference, to_matpower};
use condensed_opf::acopf::{build_acopf, load_case, parse_matpower, CaseError};

#[test]
fn two_bus_values() {
    let net = load_case(corpus("two_bus.m")).unwrap();
    assert_eq!(net.name, "two_bus");
    assert_eq!(net.counts(), (2, 1, 1));
    assert_eq!(net.buses[1].pd, 50.0 / 100.0);
    assert_eq!(net.buses[1].qd, 20.0 / 100.0);
    assert_eq!(net.generators[0].pmax, 2.0);
    assert_eq!(net.branches[0].rate_a, 1.5);
    assert!((net.branches[0].angmin + PI / 6.0).abs() < 1e-15);
}

#[test]
fn out_of_service_components_dropped() {
    let net = load_case(corpus("out_of_service.m")).unwrap();
    // bus 4 is isolated, the third generator and one branch are off, the
    // branch to bus 4 goes with it
    assert_eq!(net.counts(), (3, 2, 3));
    assert_eq!(net.costs.len(), 2);
    assert_eq!(net.costs[1].c2, 0.0);
    assert_eq!(net.costs[1].c1, 3000.0);
    let t = &net.branches[1];
    assert!((t.tap - 0.978).abs() < 1e-15 && (t.shift + 2.0 * PI / 180.0).abs() < 1e-15);
    // ±360 and 0/0 angle limits are unbounded
    assert!(net.branches[0].angmin.is_infinite() && net.branches[0].angmax.is_infinite());
    assert!(net.branches[2].angmin.is_infinite());
    // the continued row kept all thirteen columns
    assert_eq!(net.branches[2].b, 0.02);
    assert_eq!(net.branches[2].rate_a, 0.65);
}

#[test]
fn round_trip_through_writer() {
    for file in ["two_bus.m", "out_of_service.m"] {
        let net = load_case(corpus(file)).unwrap();
        let again = parse_matpower(&to_matpower(&net)).unwrap();
        assert_eq!(network_difference(&net, &again), None);
    }
    let net = load_case(common::pglib("case118_ieee")).unwrap();
    assert_eq!(network_difference(&net, &parse_matpower(&to_matpower(&net)).unwrap()), None);
}

#[test]
fn piecewise_cost_rejected() {
    assert!(matches!(load_case(corpus("piecewise_cost.m")), Err(CaseError::UnsupportedCost { line: 15, .. })));
}

#[test]
fn cubic_cost_rejected() {
    assert!(matches!(load_case(corpus("cubic_cost.m")), Err(CaseError::UnsupportedCost { .. })));
}

#[test]
fn multiple_reference_buses_rejected() {
    assert_eq!(load_case(corpus("two_reference_buses.m")).unwrap_err(), CaseError::MultipleRefBuses(vec![1, 2]));
}

#[test]
fn missing_table_reported() {
    assert_eq!(load_case(corpus("missing_gencost.m")).unwrap_err(), CaseError::MissingTable("gencost"));
}

#[test]
fn syntax_error_position() {
    match load_case(corpus("syntax_error.m")) {
        Err(CaseError::Parse { line, col, .. }) => assert_eq!((line, col), (5, 7)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_file_names_path() {
    let err = load_case(corpus("no_such_case.m")).unwrap_err();
    assert!(err.to_string().contains("no_such_case.m"));
}

#[test]
fn pglib_corpus_builds() {
    for entry in std::fs::read_dir(common::pglib("x").parent().unwrap()).unwrap() {
        let path = entry.unwrap().path();
        let net = load_case(&path).unwrap();
        let (nb, ng, nl) = net.counts();
        let acopf = build_acopf(&net).unwrap();
        assert_eq!(acopf.model.n_blocks(), 15, "{}", path.display());
        assert_eq!(acopf.model.n_var, 2 * nb + 2 * ng + 4 * nl);
    }
}
