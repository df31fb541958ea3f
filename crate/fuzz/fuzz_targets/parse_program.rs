#![no_main]

use libfuzzer_sys::fuzz_target;
use muspec::lang::parse_program;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_program(text) {
        // printing is a right inverse of parsing
        let again = parse_program(&p.to_string()).expect("printed program parses");
        assert_eq!(again, p);
    }
});
