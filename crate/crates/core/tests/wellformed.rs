mod common;

use muspec::compose::{check_confluence, check_projection_preservation, Selector};
use muspec::lang::{parse_program, Assignment, Configuration, Loc, Width};
use muspec::nonspec::Source;
use muspec::specsem::{Descriptor, SpecParams};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

use common::{case_strategy, Case};

const FUEL: u64 = 2_000;

fn generated(n: usize) -> Vec<(String, Case, Configuration)> {
    let mut runner = TestRunner::deterministic();
    (0..n)
        .map(|i| {
            let case = case_strategy(15).new_tree(&mut runner).unwrap().current();
            let secrets = Assignment::from([(Loc::reg("c"), (i % 4) as u64), (Loc::mem(12), (i / 4 % 4) as u64)]);
            let c0 = Configuration::initial(&case.program, case.policy.clone(), secrets);
            (format!("gen{i}"), case, c0)
        })
        .collect()
}

fn params() -> SpecParams {
    SpecParams { window: 4, rsb_size: 2, ..SpecParams::default() }
}

#[test]
fn confluence_on_generated_programs() {
    let w = Width::new(8).unwrap();
    let cases = generated(500);
    for sel in Selector::ALL {
        let desc = sel.descriptor();
        let mut shared = 0;
        for (name, case, c0) in &cases {
            let r = check_confluence(&desc, &case.program, c0, params(), w, FUEL);
            assert!(r.ok(), "{sel} {name}: {:?}", r.divergences);
            shared += r.shared_states;
        }
        // singles share nothing; every composition has shared instructions
        assert_eq!(shared > 0, sel.sources().len() > 1, "{sel}");
    }
}

#[test]
fn projection_preserved_on_generated_programs() {
    let w = Width::new(8).unwrap();
    let cases = generated(500);
    for sel in Selector::ALL.into_iter().filter(|s| s.sources().len() > 1) {
        let r = check_projection_preservation(
            &sel.descriptor(),
            cases.iter().map(|(n, c, c0)| (n.as_str(), &c.program, c0.clone())),
            params(),
            w,
            FUEL,
        );
        assert!(r.ok(), "{sel}: {:?}", r.mismatches.first());
        assert!(r.comparisons >= 500, "{sel}: {}", r.comparisons);
    }
}

#[test]
fn broken_composition_is_caught() {
    let w = Width::new(8).unwrap();
    let broken = Descriptor::new(&[Source::B, Source::S], |_| muspec::lang::ClassSet::EMPTY);
    let p = parse_program("Main:\n store a, 0\n beqz a, 3\n skip\n").unwrap();
    let c0 = Configuration::initial(&p, Default::default(), Assignment::new());
    let r = check_confluence(&broken, &p, &c0, params(), w, FUEL);
    assert!(!r.ok());
    let cases = generated(100);
    let total: usize = cases
        .iter()
        .map(|(_, c, c0)| check_confluence(&broken, &c.program, c0, params(), w, FUEL).divergences.len())
        .sum();
    assert!(total > 0);
}
