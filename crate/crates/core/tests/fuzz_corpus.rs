//! Replays the fuzz corpus seeds through the same invariants as the targets.

use std::fs;
use std::path::PathBuf;

use ipshadow::config::ExperimentConfig;
use ipshadow::record::{parse_orbits, write_orbits};

fn corpus(name: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(name);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus {}", dir.display());
    out
}

#[test]
fn orbit_record_seeds_round_trip() {
    let mut accepted = 0;
    for (path, text) in corpus("orbit_record") {
        if let Ok(orbits) = parse_orbits(&text) {
            let written = write_orbits(&orbits);
            let again = parse_orbits(&written).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(written, write_orbits(&again));
            accepted += 1;
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn config_seeds_parse_and_validate() {
    for (path, text) in corpus("config") {
        let cfg = ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
