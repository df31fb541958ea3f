#![no_main]

use libfuzzer_sys::fuzz_target;
use muspec::compose::Selector;
use muspec::lang::{parse_program, Assignment, Configuration, Width};
use muspec::nonspec::{check_brackets, ns_behavior, ns_project, Status};
use muspec::specsem::{am_run, SpecParams};

// Parsed programs run under every selector; speculation must not change the
// committed behaviour.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(p) = parse_program(text) else { return };
    let w = Width::new(8).unwrap();
    let c0 = Configuration::initial(&p, Default::default(), Assignment::new());
    let (ns, _) = ns_behavior(&p, &c0, 500, w);
    if ns.status == Status::FuelExhausted {
        return;
    }
    let params = SpecParams { window: 4, rsb_size: 2, ..SpecParams::default() };
    for sel in Selector::ALL {
        let run = am_run(&sel.descriptor(), &p, &c0, params, w, 20_000);
        if run.status == Status::FuelExhausted {
            continue;
        }
        check_brackets(&run.trace).unwrap();
        assert_eq!(ns_project(&run.trace).unwrap(), ns.trace);
    }
});
