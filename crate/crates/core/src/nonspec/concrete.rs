use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::{Observation, Trace};
use crate::lang::{eval_with, Configuration, Expr, Instr, Program, Reg, Width};

/// Why a step could not be taken.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Stuck {
    #[error("undefined register `{name}`")]
    UndefinedRegister { name: String },
    #[error("call to unknown function `{name}`")]
    UnknownFunction { name: String },
    #[error("symbolic value depends on {symbols} symbols, above the split limit")]
    SymbolicTooWide { symbols: usize },
    #[error("no participating source may execute `{class}`")]
    NoDelegate { class: String },
}

impl Stuck {
    /// Whether the cause is a limitation of the analysis rather than of
    /// the program.
    pub fn is_analysis_limit(&self) -> bool {
        matches!(self, Stuck::SymbolicTooWide { .. })
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Terminated,
    Stuck { cause: Stuck },
    FuelExhausted,
}

/// Result of one non-speculative step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NsStep {
    Next(Configuration, Option<Observation>),
    Terminated,
    Stuck(Stuck),
}

pub(crate) fn eval(c: &Configuration, e: &Expr, w: Width) -> u64 {
    let r: Result<u64, _> = eval_with(e, &|r: &Reg| Some(c.reg(r)), w);
    r.expect("register lookup is total")
}

/// One step of the non-speculative semantics.
pub fn ns_step(p: &Program, c: &Configuration, w: Width) -> NsStep {
    let pc = c.pc();
    let Some(instr) = p.fetch(pc) else {
        return NsStep::Terminated;
    };
    let next = w.wrap(pc.wrapping_add(1));
    let mut c2 = c.clone();
    let obs = match instr {
        Instr::Skip | Instr::SpBarr => {
            c2.set_pc(next);
            None
        }
        Instr::Assign(x, e) => {
            c2.set_reg(x.clone(), eval(c, e, w));
            if !x.is_pc() {
                c2.set_pc(next);
            }
            None
        }
        Instr::Cmov(x, e, cond) => {
            if eval(c, cond, w) != 0 {
                c2.set_reg(x.clone(), eval(c, e, w));
            }
            c2.set_pc(next);
            None
        }
        Instr::Load(x, e) => {
            let addr = eval(c, e, w);
            c2.set_reg(x.clone(), w.wrap(c.mem(addr)));
            c2.set_pc(next);
            Some(Observation::Load { addr })
        }
        Instr::Store(x, e) => {
            let addr = eval(c, e, w);
            c2.set_mem(addr, c.reg(x));
            c2.set_pc(next);
            Some(Observation::Store { addr })
        }
        Instr::Jmp(e) => {
            let target = eval(c, e, w);
            c2.set_pc(target);
            Some(Observation::Pc { target })
        }
        Instr::Beqz(x, l) => {
            let target = if c.reg(x) == 0 { *l } else { next };
            c2.set_pc(target);
            Some(Observation::Pc { target })
        }
        Instr::Call(f) => {
            let Some(target) = p.function(f) else {
                return NsStep::Stuck(Stuck::UnknownFunction { name: f.clone() });
            };
            let sp = w.wrap(c.sp().wrapping_sub(8));
            c2.set_reg(Reg::sp(), sp);
            c2.set_mem(sp, next);
            c2.set_pc(target);
            Some(Observation::Call { func: f.clone() })
        }
        Instr::Ret => {
            let sp = c.sp();
            let l = w.wrap(c.mem(sp));
            c2.set_reg(Reg::sp(), w.wrap(sp.wrapping_add(8)));
            c2.set_pc(l);
            Some(Observation::Ret { addr: l })
        }
    };
    NsStep::Next(c2, obs)
}

/// A finished (or abandoned) run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub trace: Trace,
    #[serde(flatten)]
    pub status: Status,
    pub steps: u64,
}

/// Runs the non-speculative semantics for at most `fuel` steps.
pub fn ns_behavior(p: &Program, c0: &Configuration, fuel: u64, w: Width) -> (Run, Configuration) {
    let mut c = c0.clone();
    let mut trace = Vec::new();
    let mut steps = 0;
    loop {
        if p.fetch(c.pc()).is_none() {
            return (Run { trace, status: Status::Terminated, steps }, c);
        }
        if steps == fuel {
            return (Run { trace, status: Status::FuelExhausted, steps }, c);
        }
        match ns_step(p, &c, w) {
            NsStep::Next(c2, obs) => {
                steps += 1;
                trace.extend(obs);
                c = c2;
            }
            NsStep::Terminated => unreachable!("checked above"),
            NsStep::Stuck(cause) => return (Run { trace, status: Status::Stuck { cause }, steps }, c),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lang::{parse_program, Assignment, Loc, Policy};

    fn cfg(p: &Program, regs: &[(&str, u64)], mem: &[(u64, u64)]) -> Configuration {
        let mut c = Configuration::initial(p, Arc::new(Policy::default()), Assignment::new());
        for (r, v) in regs {
            c.set_reg(Reg::new(r), *v);
        }
        for (a, v) in mem {
            c.set_mem(*a, *v);
        }
        c
    }

    fn step(p: &Program, c: &Configuration) -> (Configuration, Option<Observation>) {
        match ns_step(p, c, Width::DEFAULT) {
            NsStep::Next(c, o) => (c, o),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn store_writes_and_observes() {
        let p = parse_program("store x, 3").unwrap();
        let (c, o) = step(&p, &cfg(&p, &[("x", 5)], &[]));
        assert_eq!(c.mem(3), 5);
        assert_eq!(c.pc(), 1);
        assert_eq!(o, Some(Observation::Store { addr: 3 }));
    }

    #[test]
    fn beqz_taken() {
        let p = parse_program("beqz x, 7").unwrap();
        let (c, o) = step(&p, &cfg(&p, &[("x", 0)], &[]));
        assert_eq!(c.pc(), 7);
        assert_eq!(o, Some(Observation::Pc { target: 7 }));
    }

    #[test]
    fn ret_pops_stack() {
        let p = parse_program("ret").unwrap();
        let (c, o) = step(&p, &cfg(&p, &[("sp", 96)], &[(96, 13)]));
        assert_eq!(c.pc(), 13);
        assert_eq!(c.sp(), 104);
        assert_eq!(o, Some(Observation::Ret { addr: 13 }));
    }

    #[test]
    fn call_pushes_return_address() {
        let p = parse_program("call F\nF: skip").unwrap();
        let (c, o) = step(&p, &cfg(&p, &[("sp", 96)], &[]));
        assert_eq!((c.pc(), c.sp(), c.mem(88)), (1, 88, 1));
        assert_eq!(o, Some(Observation::Call { func: "F".into() }));
    }

    #[test]
    fn cmov_only_when_condition_nonzero() {
        let p = parse_program("cmov x, 9, c").unwrap();
        let (c, o) = step(&p, &cfg(&p, &[("x", 1), ("c", 0)], &[]));
        assert_eq!((c.reg(&Reg::new("x")), o), (1, None));
        let (c, _) = step(&p, &cfg(&p, &[("x", 1), ("c", 4)], &[]));
        assert_eq!(c.reg(&Reg::new("x")), 9);
    }

    #[test]
    fn skip_program() {
        let p = parse_program("skip").unwrap();
        let (r, _) = ns_behavior(&p, &cfg(&p, &[], &[]), 100, Width::DEFAULT);
        assert_eq!((r.trace, r.status, r.steps), (vec![], Status::Terminated, 1));
    }

    #[test]
    fn zero_fuel() {
        let p = parse_program("skip").unwrap();
        let (r, _) = ns_behavior(&p, &cfg(&p, &[], &[]), 0, Width::DEFAULT);
        assert_eq!((r.trace, r.status), (vec![], Status::FuelExhausted));
    }

    #[test]
    fn loads_read_secret_default() {
        let p = parse_program("load x, 40").unwrap();
        let c = cfg(&p, &[], &[]);
        let (c2, _) = step(&p, &c);
        assert_eq!(c2.reg(&Reg::new("x")), 0);
        assert!(c.init().misses().contains(&Loc::mem(40)));
    }
}
