mod common;

use std::sync::Arc;

use muspec::compose::Selector;
use muspec::lang::{low_equivalent, parse_program, Assignment, Configuration, Loc, Policy, Program, Width};
use muspec::nonspec::{check_brackets, ns_behavior, ns_project, project_trace, Source, Status};
use muspec::sni::{check_sni_concrete, first_difference, from_secret_values, replay_witness, CheckConfig, VerdictStatus};
use muspec::specsem::{
    am_run, oracle_family, oracle_run, AlwaysMispredict, ConcreteMachine, Engine, SpecParams, SpecState, SpecStep,
};
use proptest::prelude::*;

use common::{case_strategy, Case};

const FUEL: u64 = 2_000;

fn w8() -> Width {
    Width::new(8).unwrap()
}

fn params(window: u32, rsb_size: usize) -> SpecParams {
    SpecParams { window, rsb_size, ..SpecParams::default() }
}

fn secrets_strategy() -> impl Strategy<Value = Assignment> {
    prop::array::uniform4(0u64..4).prop_map(|[c, d, m12, m13]| {
        Assignment::from([(Loc::reg("c"), c), (Loc::reg("d"), d), (Loc::mem(12), m12), (Loc::mem(13), m13)])
    })
}

fn initial(case: &Case, secrets: Assignment) -> Configuration {
    Configuration::initial(&case.program, case.policy.clone(), secrets)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn print_then_parse_is_identity(case in case_strategy(15)) {
        let text = case.program.to_string();
        let back = parse_program(&text).unwrap();
        prop_assert_eq!(back, case.program);
    }

    #[test]
    fn low_equivalence_is_an_equivalence(s1 in secrets_strategy(), s2 in secrets_strategy(), s3 in secrets_strategy(),
                                         case in case_strategy(3), writes in prop::collection::vec((0u64..16, 0u64..4), 0..4)) {
        let mut cs: Vec<Configuration> = [s1, s2, s3].into_iter().map(|s| initial(&case, s)).collect();
        for (i, (a, v)) in writes.into_iter().enumerate() {
            cs[i % 3].set_mem(a, v);
        }
        let pol = &case.policy;
        for a in &cs {
            prop_assert!(low_equivalent(a, a, pol));
            for b in &cs {
                prop_assert_eq!(low_equivalent(a, b, pol), low_equivalent(b, a, pol));
                for c in &cs {
                    if low_equivalent(a, b, pol) && low_equivalent(b, c, pol) {
                        prop_assert!(low_equivalent(a, c, pol));
                    }
                }
            }
        }
    }

    #[test]
    fn projections_are_idempotent(case in case_strategy(15), secrets in secrets_strategy()) {
        let c0 = initial(&case, secrets);
        let all: Selector = "b+s+r".parse().unwrap();
        let run = am_run(&all.descriptor(), &case.program, &c0, params(4, 2), w8(), FUEL);
        let ns = ns_project(&run.trace).unwrap();
        prop_assert_eq!(ns_project(&ns).unwrap(), ns.clone());
        for keep in [&[Source::B][..], &[Source::S, Source::R], &[Source::B, Source::S, Source::R]] {
            let once = project_trace(&run.trace, keep).unwrap();
            prop_assert_eq!(project_trace(&once, keep).unwrap(), once.clone());
            prop_assert_eq!(ns_project(&once).unwrap(), ns.clone());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Speculation never changes the committed behaviour.
    #[test]
    fn ns_consistency_all_selectors(case in case_strategy(15), secrets in secrets_strategy(), window in 0u32..6) {
        let c0 = initial(&case, secrets);
        let (ns, _) = ns_behavior(&case.program, &c0, FUEL, w8());
        prop_assume!(ns.status != Status::FuelExhausted);
        for sel in Selector::ALL {
            let run = am_run(&sel.descriptor(), &case.program, &c0, params(window, 2), w8(), 20 * FUEL);
            if run.status == Status::FuelExhausted {
                continue;
            }
            check_brackets(&run.trace).unwrap();
            prop_assert_eq!(&ns_project(&run.trace).unwrap(), &ns.trace, "{}", sel);
            prop_assert_eq!(&run.status, &ns.status, "{}", sel);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ns_consistency_oracles(case in case_strategy(10), secrets in secrets_strategy()) {
        let c0 = initial(&case, secrets);
        let (ns, _) = ns_behavior(&case.program, &c0, FUEL, w8());
        prop_assume!(ns.status != Status::FuelExhausted);
        for src in Source::ALL {
            for o in oracle_family(src, &case.program, 3) {
                let run = oracle_run(src, &o, &case.program, &c0, params(3, 2), w8(), 20 * FUEL);
                if run.status == Status::FuelExhausted {
                    continue;
                }
                prop_assert_eq!(&ns_project(&run.trace).unwrap(), &ns.trace, "{:?} {:?}", src, o);
            }
        }
    }

    /// Walks the engine state by state: windows stay within bounds and
    /// shrink up the stack, the RSB never overflows, and a rollback
    /// restores the frame below untouched.
    #[test]
    fn frame_invariants(case in case_strategy(15), secrets in secrets_strategy(), window in 0u32..6, rsb in 0usize..3) {
        let c0 = initial(&case, secrets);
        let machine = ConcreteMachine { program: &case.program, width: w8() };
        for sel in Selector::ALL {
            let desc = sel.descriptor();
            let engine = Engine { machine: &machine, desc: &desc, params: params(window, rsb), predictor: &AlwaysMispredict };
            let mut st: SpecState<Configuration> = engine.initial(c0.clone());
            for _ in 0..FUEL {
                prop_assert_eq!(st.frames[0].window, None);
                let mut prev = window;
                for f in &st.frames[1..] {
                    let w = f.window.unwrap();
                    prop_assert!(w <= prev, "window {} above {}", w, prev);
                    prev = w;
                }
                for f in &st.frames {
                    prop_assert_eq!(f.rsb.is_some(), sel.contains(Source::R));
                    prop_assert!(f.rsb.as_ref().map_or(0, Vec::len) <= rsb);
                }
                match engine.step(&st, &()) {
                    SpecStep::Rollback(next, _) => {
                        let n = st.height();
                        prop_assert_eq!(next.height(), n - 1);
                        prop_assert_eq!(&next.frames[..n - 2], &st.frames[..n - 2]);
                        let (restored, before) = (&next.frames[n - 2], &st.frames[n - 2]);
                        prop_assert_eq!(&restored.cfg, &before.cfg);
                        prop_assert_eq!(&restored.rsb, &before.rsb);
                        prop_assert_eq!(restored.window, before.window);
                        prop_assert_eq!(restored.ctr, st.frames[n - 1].ctr);
                        st = next;
                    }
                    SpecStep::Next(mut succs) => {
                        prop_assert_eq!(succs.len(), 1);
                        let (next, _, _) = succs.pop().unwrap();
                        prop_assert!(next.height() <= st.height() + 1);
                        st = next;
                    }
                    SpecStep::Terminated | SpecStep::Stuck(_) => break,
                }
            }
        }
    }
}

fn small_config() -> CheckConfig {
    CheckConfig { params: params(4, 2), fuel: FUEL, ..CheckConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    /// Every reported witness is genuine: low-equivalent inputs, equal
    /// committed behaviour, and differing speculative traces that replay.
    #[test]
    fn witnesses_replay(case in case_strategy(12)) {
        let cfg = small_config();
        for sel in Selector::ALL {
            let desc = sel.descriptor();
            let v = check_sni_concrete(&case.program, &case.policy, &desc, &cfg);
            if v.status != VerdictStatus::Insecure {
                prop_assert!(v.witness.is_none());
                continue;
            }
            let w = v.witness.as_ref().unwrap();
            prop_assert!(replay_witness(w, &case.program, &case.policy, &desc, &cfg));
            prop_assert_ne!(&w.trace1, &w.trace2);
            prop_assert_eq!(first_difference(&w.trace1, &w.trace2), Some(w.index));
            prop_assert_eq!(ns_project(&w.trace1).unwrap(), ns_project(&w.trace2).unwrap());
            let c1 = Configuration::initial(&case.program, case.policy.clone(), from_secret_values(&w.secrets1));
            let c2 = Configuration::initial(&case.program, case.policy.clone(), from_secret_values(&w.secrets2));
            prop_assert!(low_equivalent(&c1, &c2, &case.policy));
        }
    }

    /// A tampered witness no longer replays.
    #[test]
    fn tampered_witness_rejected(case in case_strategy(12)) {
        let cfg = small_config();
        let desc = "b+s+r".parse::<Selector>().unwrap().descriptor();
        let v = check_sni_concrete(&case.program, &case.policy, &desc, &cfg);
        if let Some(mut w) = v.witness {
            std::mem::swap(&mut w.trace1, &mut w.trace2);
            prop_assert!(!replay_witness(&w, &case.program, &case.policy, &desc, &cfg));
        }
    }
}

/// Inserting a barrier after every speculation source and at every branch
/// target removes every leak.
#[test]
fn full_fencing_is_secure_on_generated_programs() {
    use muspec::lang::Instr;
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;

    let mut runner = TestRunner::deterministic();
    let cfg = small_config();
    let mut insecure_before = 0;
    for _ in 0..150 {
        let case = case_strategy(10).new_tree(&mut runner).unwrap().current();
        let fenced = fence(&case.program);
        for sel in Selector::ALL {
            let desc = sel.descriptor();
            let before = check_sni_concrete(&case.program, &case.policy, &desc, &cfg);
            insecure_before += usize::from(before.status == VerdictStatus::Insecure);
            let after = check_sni_concrete(&fenced, &case.policy, &desc, &cfg);
            assert_ne!(after.status, VerdictStatus::Insecure, "{sel}\n{}", fenced);
        }
    }
    assert!(insecure_before > 0, "generator never produced a leak");

    fn fence(p: &Program) -> Program {
        // old address -> new address; a barrier precedes every branch target
        let targets: std::collections::BTreeSet<u64> =
            p.code().iter().filter_map(|i| if let Instr::Beqz(_, l) = i { Some(*l) } else { None }).collect();
        let mut map = Vec::new();
        let mut code = Vec::new();
        for (a, i) in p.code().iter().enumerate() {
            map.push(code.len() as u64);
            if targets.contains(&(a as u64)) {
                code.push(Instr::SpBarr);
            }
            code.push(i.clone());
            if matches!(i, Instr::Store(..) | Instr::Beqz(..) | Instr::Call(..)) {
                code.push(Instr::SpBarr);
            }
        }
        map.push(code.len() as u64);
        if targets.contains(&(p.len() as u64)) {
            code.push(Instr::SpBarr);
        }
        let relocate = |a: u64| map.get(a as usize).copied().unwrap_or(a);
        let code = code
            .into_iter()
            .map(|i| match i {
                Instr::Beqz(x, l) => Instr::Beqz(x, relocate(l)),
                Instr::Jmp(muspec::lang::Expr::Lit(l)) => Instr::Jmp(muspec::lang::Expr::Lit(relocate(l))),
                other => other,
            })
            .collect();
        let functions = p.functions().iter().map(|(n, a)| (n.clone(), relocate(*a))).collect();
        Program::new(code, functions).unwrap()
    }
}

#[test]
fn policy_json_round_trip() {
    let p = common::policy(3, 7);
    assert_eq!(Policy::from_json(&p.to_json()).unwrap(), p);
    let _ = Arc::new(p);
}
