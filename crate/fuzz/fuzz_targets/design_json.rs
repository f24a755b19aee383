#![no_main]

use libfuzzer_sys::fuzz_target;
use optdes::io::{design_json, parse_design_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = parse_design_json(text) {
        let again = parse_design_json(&design_json(&d)).expect("re-parse of written design");
        assert_eq!(again.points().len(), d.points().len());
    }
});
