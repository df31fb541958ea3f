//! Speculative semantics: branch, store-bypass and return speculation,
//! always-mispredict and oracle-driven, concrete and symbolic.

mod engine;
mod machine;
mod oracle;

pub use engine::{
    relevant, AlwaysMispredict, Descriptor, Engine, Frame, History, Predictor, SpecParams, SpecRun, SpecState,
    SpecStep, TooManyPaths,
};
pub use machine::{ConcreteMachine, Machine, Succ, SymbolicMachine};
pub use oracle::{oracle_family, oracle_run, BranchGuess, Oracle};

use crate::lang::{Configuration, Program, Width};
use crate::nonspec::{Observation, SymConfig, SymObservation, SymParams};

/// Always-mispredict run of `p` under the sources of `desc`.
pub fn am_run(
    desc: &Descriptor,
    p: &Program,
    c0: &Configuration,
    params: SpecParams,
    width: Width,
    fuel: u64,
) -> SpecRun<Observation> {
    let machine = ConcreteMachine { program: p, width };
    let engine = Engine { machine: &machine, desc, params, predictor: &AlwaysMispredict };
    let mut runs = engine.explore(c0.clone(), fuel, usize::MAX).expect("concrete runs do not branch");
    runs.pop().expect("one run").0
}

/// Always-mispredict symbolic runs; `Err` when there are more than
/// `max_paths` of them.
pub fn sym_am_run(
    desc: &Descriptor,
    p: &Program,
    c0: &SymConfig,
    params: SpecParams,
    sym: SymParams<'_>,
    fuel: u64,
    max_paths: usize,
) -> Result<Vec<SpecRun<SymObservation>>, TooManyPaths> {
    let machine = SymbolicMachine { program: p, params: sym };
    let engine = Engine { machine: &machine, desc, params, predictor: &AlwaysMispredict };
    Ok(engine.explore(c0.clone(), fuel, max_paths)?.into_iter().map(|(r, _)| r).collect())
}
