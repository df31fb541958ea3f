#![no_main]

use libfuzzer_sys::fuzz_target;
use muspec::nonspec::{check_brackets, ns_project, Observation};

fuzz_target!(|data: &[u8]| {
    let Ok(trace) = serde_json::from_slice::<Vec<Observation>>(data) else { return };
    let text = serde_json::to_string(&trace).unwrap();
    assert_eq!(serde_json::from_str::<Vec<Observation>>(&text).unwrap(), trace);
    if check_brackets(&trace).is_ok() {
        let ns = ns_project(&trace).expect("balanced traces project");
        assert_eq!(ns_project(&ns).unwrap(), ns);
    }
});
