#![no_main]

use libfuzzer_sys::fuzz_target;
use optdes::io::{design_csv, parse_design_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = parse_design_csv(text) {
        // Six-digit output may merge near-duplicate points, so only the
        // absence of panics is checked on the second pass.
        let _ = parse_design_csv(&design_csv(&d));
    }
});
