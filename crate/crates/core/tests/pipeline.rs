//! File-to-result runs through the public API on the shipped stand-in data.

use relaychar::config::{ListField, ScenarioFile};
use relaychar::faults::Scenario;
use relaychar::netmodel::compute_network_matrices_with;
use relaychar::posttest::{exact_characteristic, is_consistent, simulate_fault};
use relaychar::sep::{check_separation, scan_uniform_injection, SeparationProblem, VerdictTag};
use relaychar::{c64, standin};

#[test]
fn shipped_files_parse_and_describe_the_same_grid() {
    let a = standin::ieee14().unwrap();
    let b = standin::ieee14_all_ibr().unwrap();
    let (na, nb) = (a.network().unwrap(), b.network().unwrap());
    assert_eq!(na.buses().len(), 14);
    assert_eq!(na.lines().len(), nb.lines().len());
    assert!(!na.sg_buses().is_empty());
    assert!(nb.sg_buses().is_empty());
    assert_eq!(nb.ibr_buses().len(), 7);
    assert_eq!(a.relay.m_lower, 0.15);
}

#[test]
fn midline_faults_are_consistent_with_their_own_scenario() {
    let file = standin::ieee14().unwrap();
    let net = file.network().unwrap();
    let unc = file.uncertainty(&net).unwrap();
    let relay = file.relay_settings(&net).unwrap();
    let convention = file.convention().unwrap();
    let lambda = nalgebra::DVector::zeros(unc.noise_dim());
    for s in Scenario::faults() {
        let mats = compute_network_matrices_with(&net, s, file.nominal(), convention).unwrap();
        let m = simulate_fault(s, &mats, &unc, &relay, 0.5, 0.5, &lambda).unwrap();
        let c = exact_characteristic(s, &m.i_l, &unc, &mats, &relay).unwrap();
        assert!(is_consistent(s, &m.v_l, &m.i_l, &c, relay.k).unwrap(), "{s}");
        assert!(c.polygon.area() >= 0.0);
    }
}

#[test]
fn zero_signal_leaves_normal_and_ground_fault_overlapping() {
    let file = standin::ieee14_all_ibr().unwrap();
    let (problem, _) = SeparationProblem::from_file(&file).unwrap();
    let v = check_separation(&problem, Scenario::N, Scenario::Ag, &problem.zero_signal()).unwrap();
    assert_eq!(v.tag, VerdictTag::NotSeparated);
    assert!(v.residual < 1e-6);
}

#[test]
fn scan_is_reproducible() {
    let mut file: ScenarioFile = standin::ieee14_all_ibr().unwrap();
    file.run.pairs = ListField::Keyword("N-ag,ag-ab".into());
    let (problem, _) = SeparationProblem::from_file(&file).unwrap();
    let pairs = file.pairs().unwrap();
    let grid = [c64(0.0, 0.0), c64(1.0, -1.0), c64(-2.5, 0.5)];
    let a = scan_uniform_injection(&problem, &pairs, &grid).unwrap();
    let b = scan_uniform_injection(&problem, &pairs, &grid).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.flags[0], vec![false, a.flags[0][1]]);
}
