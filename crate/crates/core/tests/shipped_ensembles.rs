use std::path::PathBuf;

use bprelab::harness::EnsembleFile;
use bprelab::presets::{critical_branching_family, supercritical_family};

fn shipped(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../ensembles").join(name);
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn shipped_ensembles_match_presets() {
    for (name, ens) in [
        ("critical.json", critical_branching_family(2.0).unwrap()),
        ("supercritical.json", supercritical_family().unwrap()),
    ] {
        let expected = EnsembleFile::from_ensemble(&ens).unwrap().to_json();
        assert_eq!(shipped(name).trim_end(), expected.trim_end(), "{name} is stale");
    }
}

#[test]
fn shipped_ensembles_round_trip() {
    for name in ["critical.json", "supercritical.json"] {
        let file = EnsembleFile::from_json(&shipped(name)).unwrap();
        let again = EnsembleFile::from_ensemble(&file.to_ensemble().unwrap()).unwrap();
        assert_eq!(file.to_json(), again.to_json());
    }
}
