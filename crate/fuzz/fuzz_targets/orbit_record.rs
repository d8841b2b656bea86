//! Parses an orbit record; anything accepted must round-trip through the writer.

#![no_main]

use libfuzzer_sys::fuzz_target;

use ipshadow::record::{parse_orbits, write_orbits};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(orbits) = parse_orbits(text) {
        let written = write_orbits(&orbits);
        let again = parse_orbits(&written).expect("writer output parses");
        assert_eq!(written, write_orbits(&again));
    }
});
