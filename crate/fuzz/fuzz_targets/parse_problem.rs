#![no_main]

use libfuzzer_sys::fuzz_target;
use nspace_qm::dsl::parse_problem;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_problem(text);
    }
});
