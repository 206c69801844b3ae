#![no_main]

use libfuzzer_sys::fuzz_target;
use nspace_qm::dsl::parse_expression;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = parse_expression(text, &["x", "y", "t"]) {
        let _ = e.eval(&[0.3, -1.2, 0.5]);
        // printing and reparsing must give the same tree
        let again = parse_expression(&e.to_string(), &["x", "y", "t"]).expect("printed expression reparses");
        assert_eq!(again.to_string(), e.to_string());
    }
});
