use std::path::PathBuf;

use ibvs_core::config::load_scenario;
use ibvs_core::control::ControllerKind;
use ibvs_core::sim::Scenario;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_match_builders() {
    for (file, kind) in [
        ("paper_sec4_inverse.cfg", ControllerKind::InverseJacobian),
        ("paper_sec4_transpose.cfg", ControllerKind::TransposeJacobian),
        ("paper_sec4_kinematic.cfg", ControllerKind::Kinematic),
    ] {
        let s = load_scenario(&shipped(file)).unwrap();
        assert_eq!(s, Scenario::paper(kind), "{file}");
    }
}

#[test]
fn shipped_configs_carry_reference_dynamics() {
    let s = load_scenario(&shipped("paper_sec4_inverse.cfg")).unwrap();
    assert_eq!(s.reference_dynamic_parameters.len(), 8);
    assert_eq!(s.gains.gamma_d.nrows(), ibvs_core::arm::DYN_PARAMS);
}
