#![no_main]

use libfuzzer_sys::fuzz_target;
use nspace_qm::dsl::parse_problem;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_problem(text) {
        let printed = spec.to_string();
        let again = parse_problem(&printed).expect("printed problem reparses");
        assert_eq!(again.to_string(), printed);
    }
});
