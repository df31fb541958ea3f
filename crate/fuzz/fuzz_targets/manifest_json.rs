#![no_main]

use libfuzzer_sys::fuzz_target;
use muspec::corpus::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::from_json(text) {
        for s in &m.suites {
            let _ = s.check_config();
            for c in &s.cases {
                for sel in &s.selectors {
                    let _ = c.expected(*sel);
                }
            }
        }
    }
});
