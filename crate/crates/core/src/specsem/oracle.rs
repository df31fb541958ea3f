use std::collections::BTreeMap;

use super::engine::{Descriptor, Engine, History, Predictor, SpecParams, SpecRun};
use super::machine::ConcreteMachine;
use crate::lang::{Configuration, Instr, Program, Width};
use crate::nonspec::{Observation, Source};

/// Branch prediction strategy at one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BranchGuess {
    Taken,
    NotTaken,
    /// Always right.
    Perfect,
    /// Repeats the site's most recent outcome in the history (not taken
    /// when there is none).
    Last,
}

/// An explicit predictor. Sites without an entry use the defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Oracle {
    pub branch_default: BranchGuess,
    pub branch_sites: BTreeMap<u64, BranchGuess>,
    pub bypass_default: bool,
    pub bypass_sites: BTreeMap<u64, bool>,
    pub window: u32,
}

impl Oracle {
    /// Never mispredicts, never bypasses.
    pub fn perfect() -> Oracle {
        Oracle {
            branch_default: BranchGuess::Perfect,
            branch_sites: BTreeMap::new(),
            bypass_default: false,
            bypass_sites: BTreeMap::new(),
            window: 0,
        }
    }
}

impl Predictor for Oracle {
    fn branch(&self, pc: u64, history: &History, taken: bool) -> Option<u32> {
        let guess = self.branch_sites.get(&pc).copied().unwrap_or(self.branch_default);
        let predicted = match guess {
            BranchGuess::Taken => true,
            BranchGuess::NotTaken => false,
            BranchGuess::Perfect => taken,
            BranchGuess::Last => history.iter().rev().find(|(p, _)| *p == pc).is_some_and(|(_, t)| *t),
        };
        (predicted != taken).then_some(self.window)
    }

    fn store(&self, pc: u64, _: &History) -> Option<u32> {
        self.bypass_sites.get(&pc).copied().unwrap_or(self.bypass_default).then_some(self.window)
    }

    fn ret(&self, _: &History) -> u32 {
        self.window
    }
}

/// Runs `p` under source `src` driven by `oracle`.
pub fn oracle_run(
    src: Source,
    oracle: &Oracle,
    p: &Program,
    c0: &Configuration,
    params: SpecParams,
    width: Width,
    fuel: u64,
) -> SpecRun<Observation> {
    let machine = ConcreteMachine { program: p, width };
    let desc = Descriptor::single(src);
    let engine = Engine { machine: &machine, desc: &desc, params, predictor: oracle };
    let mut runs = engine.explore(c0.clone(), fuel, usize::MAX).expect("concrete runs do not branch");
    runs.pop().expect("one run").0
}

fn sites(p: &Program, f: impl Fn(&Instr) -> bool) -> Vec<u64> {
    p.code().iter().enumerate().filter(|(_, i)| f(i)).map(|(a, _)| a as u64).collect()
}

/// Per-site assignments of `choices` when there are at most `max_sites`
/// sites, otherwise one uniform choice for all.
fn assignments<T: Copy>(sites: &[u64], choices: &[T], max_sites: usize) -> Vec<(Option<T>, BTreeMap<u64, T>)> {
    if sites.is_empty() || sites.len() > max_sites {
        return choices.iter().map(|&c| (Some(c), BTreeMap::new())).collect();
    }
    let mut out = vec![BTreeMap::new()];
    for &s in sites {
        out = out
            .into_iter()
            .flat_map(|m: BTreeMap<u64, T>| {
                choices.iter().map(move |&c| {
                    let mut m = m.clone();
                    m.insert(s, c);
                    m
                })
            })
            .collect();
    }
    out.into_iter().map(|m| (None, m)).collect()
}

/// The enumerated oracles for `src` on `p`: every per-site strategy (for
/// programs with few sites) combined with every window `0..=window`.
pub fn oracle_family(src: Source, p: &Program, window: u32) -> Vec<Oracle> {
    let mut out = Vec::new();
    for w in 0..=window {
        let base = Oracle { window: w, ..Oracle::perfect() };
        match src {
            Source::B => {
                let guesses = [BranchGuess::Taken, BranchGuess::NotTaken, BranchGuess::Perfect, BranchGuess::Last];
                for (d, m) in assignments(&sites(p, |i| matches!(i, Instr::Beqz(..))), &guesses, 2) {
                    out.push(Oracle {
                        branch_default: d.unwrap_or(BranchGuess::Perfect),
                        branch_sites: m,
                        ..base.clone()
                    });
                }
            }
            Source::S => {
                for (d, m) in assignments(&sites(p, |i| matches!(i, Instr::Store(..))), &[true, false], 3) {
                    out.push(Oracle { bypass_default: d.unwrap_or(false), bypass_sites: m, ..base.clone() });
                }
            }
            Source::R => out.push(base),
        }
    }
    out
}
