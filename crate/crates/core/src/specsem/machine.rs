use std::fmt;

use crate::lang::{Configuration, Program, Width};
use crate::nonspec::{
    ns_step, NsStep, Observation, PathCondition, Stuck, SymConfig, SymObservation, SymParams, TraceEvent, sym_ns_step,
};

/// Successor produced by one non-speculative step.
pub type Succ<M> = (<M as Machine>::Cfg, Vec<<M as Machine>::Obs>, <M as Machine>::Path);

/// A non-speculative semantics the speculative engine delegates to.
pub trait Machine: Sync {
    type Cfg: Clone + fmt::Debug + PartialEq + Send + Sync;
    type Obs: TraceEvent;
    /// Facts accumulated along one execution path (path conditions).
    type Path: Clone + Default + fmt::Debug + Send + Sync;

    fn program(&self) -> &Program;
    fn width(&self) -> Width;
    fn pc(&self, c: &Self::Cfg) -> u64;
    fn set_pc(&self, c: &mut Self::Cfg, v: u64);
    /// Successors of a configuration whose `pc` holds an instruction.
    fn step(&self, c: &Self::Cfg, path: &Self::Path) -> Result<Vec<Succ<Self>>, Stuck>;
}

/// The concrete semantics: exactly one successor.
pub struct ConcreteMachine<'a> {
    pub program: &'a Program,
    pub width: Width,
}

impl Machine for ConcreteMachine<'_> {
    type Cfg = Configuration;
    type Obs = Observation;
    type Path = ();

    fn program(&self) -> &Program {
        self.program
    }
    fn width(&self) -> Width {
        self.width
    }
    fn pc(&self, c: &Configuration) -> u64 {
        c.pc()
    }
    fn set_pc(&self, c: &mut Configuration, v: u64) {
        c.set_pc(v);
    }
    fn step(&self, c: &Configuration, _: &()) -> Result<Vec<Succ<Self>>, Stuck> {
        match ns_step(self.program, c, self.width) {
            NsStep::Next(c2, o) => Ok(vec![(c2, o.into_iter().collect(), ())]),
            NsStep::Terminated => Ok(Vec::new()),
            NsStep::Stuck(s) => Err(s),
        }
    }
}

/// The symbolic semantics: one successor per feasible case split.
pub struct SymbolicMachine<'a> {
    pub program: &'a Program,
    pub params: SymParams<'a>,
}

impl Machine for SymbolicMachine<'_> {
    type Cfg = SymConfig;
    type Obs = SymObservation;
    type Path = PathCondition;

    fn program(&self) -> &Program {
        self.program
    }
    fn width(&self) -> Width {
        self.params.width
    }
    fn pc(&self, c: &SymConfig) -> u64 {
        c.pc()
    }
    fn set_pc(&self, c: &mut SymConfig, v: u64) {
        c.set_pc(v);
    }
    fn step(&self, c: &SymConfig, path: &PathCondition) -> Result<Vec<Succ<Self>>, Stuck> {
        Ok(sym_ns_step(self.program, c, path, &self.params)?.into_iter().map(|s| (s.cfg, s.obs, s.path)).collect())
    }
}
