use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::expr::Reg;
use super::policy::Policy;
use super::program::Program;

/// A storage location: a register or a memory address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Loc {
    Reg { name: Reg },
    Mem { addr: u64 },
}

impl Loc {
    pub fn reg(name: &str) -> Loc {
        Loc::Reg { name: Reg::new(name) }
    }

    pub fn mem(addr: u64) -> Loc {
        Loc::Mem { addr }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Reg { name } => write!(f, "{name}"),
            Loc::Mem { addr } => write!(f, "m[{addr}]"),
        }
    }
}

/// An assignment of values to secret locations.
pub type Assignment = BTreeMap<Loc, u64>;

/// Values of locations a run has not yet written.
///
/// Lookup order: the secret assignment, then the policy's declared
/// initial values, then 0. Reads of secret locations that fall through to
/// the default are recorded, so callers can discover which secrets a run
/// depends on.
pub struct InitialValues {
    policy: Arc<Policy>,
    secrets: Assignment,
    misses: Mutex<BTreeSet<Loc>>,
}

impl InitialValues {
    pub fn new(policy: Arc<Policy>, secrets: Assignment) -> InitialValues {
        InitialValues { policy, secrets, misses: Mutex::new(BTreeSet::new()) }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn secrets(&self) -> &Assignment {
        &self.secrets
    }

    pub fn is_public(&self, loc: &Loc) -> bool {
        match loc {
            Loc::Reg { name } => self.policy.is_public_reg(name),
            Loc::Mem { addr } => self.policy.is_public_addr(*addr),
        }
    }

    pub fn value(&self, loc: &Loc) -> u64 {
        if let Some(v) = self.secrets.get(loc) {
            return *v;
        }
        let declared = match loc {
            Loc::Reg { name } => self.policy.init_reg(name),
            Loc::Mem { addr } => self.policy.init_mem(*addr),
        };
        if let Some(v) = declared {
            return v;
        }
        if !self.is_public(loc) {
            self.misses.lock().expect("miss set poisoned").insert(loc.clone());
        }
        0
    }

    /// Secret locations read without an assigned value.
    pub fn misses(&self) -> BTreeSet<Loc> {
        self.misses.lock().expect("miss set poisoned").clone()
    }
}

impl PartialEq for InitialValues {
    fn eq(&self, other: &Self) -> bool {
        self.secrets == other.secrets && (Arc::ptr_eq(&self.policy, &other.policy) || self.policy == other.policy)
    }
}

impl fmt::Debug for InitialValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialValues").field("secrets", &self.secrets).finish_non_exhaustive()
    }
}

/// Concrete machine configuration: register file and memory.
///
/// Only written locations are stored; everything else reads through to the
/// shared [`InitialValues`].
#[derive(Clone)]
pub struct Configuration {
    regs: BTreeMap<Reg, u64>,
    mem: BTreeMap<u64, u64>,
    init: Arc<InitialValues>,
}

impl Configuration {
    /// Initial configuration of `p`: `pc` at the entry point, `sp` from the
    /// policy (default 0).
    pub fn initial(p: &Program, policy: Arc<Policy>, secrets: Assignment) -> Configuration {
        let sp = policy.init_reg(&Reg::sp()).unwrap_or(0);
        let init = Arc::new(InitialValues::new(policy, secrets));
        let mut regs = BTreeMap::new();
        regs.insert(Reg::pc(), p.entry());
        regs.insert(Reg::sp(), sp);
        Configuration { regs, mem: BTreeMap::new(), init }
    }

    pub fn init(&self) -> &Arc<InitialValues> {
        &self.init
    }

    pub fn reg(&self, r: &Reg) -> u64 {
        match self.regs.get(r) {
            Some(v) => *v,
            None => self.init.value(&Loc::Reg { name: r.clone() }),
        }
    }

    pub fn mem(&self, a: u64) -> u64 {
        match self.mem.get(&a) {
            Some(v) => *v,
            None => self.init.value(&Loc::Mem { addr: a }),
        }
    }

    pub fn pc(&self) -> u64 {
        self.regs[&Reg::pc()]
    }

    pub fn sp(&self) -> u64 {
        self.regs[&Reg::sp()]
    }

    pub fn set_reg(&mut self, r: Reg, v: u64) {
        self.regs.insert(r, v);
    }

    pub fn set_mem(&mut self, a: u64, v: u64) {
        self.mem.insert(a, v);
    }

    pub fn set_pc(&mut self, v: u64) {
        self.regs.insert(Reg::pc(), v);
    }

    pub fn with_pc(&self, v: u64) -> Configuration {
        let mut c = self.clone();
        c.set_pc(v);
        c
    }

    pub fn written_registers(&self) -> &BTreeMap<Reg, u64> {
        &self.regs
    }

    pub fn written_memory(&self) -> &BTreeMap<u64, u64> {
        &self.mem
    }

    pub fn read(&self, loc: &Loc) -> u64 {
        match loc {
            Loc::Reg { name } => self.reg(name),
            Loc::Mem { addr } => self.mem(*addr),
        }
    }
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.regs == other.regs && self.mem == other.mem && (Arc::ptr_eq(&self.init, &other.init) || *self.init == *other.init)
    }
}

impl Eq for Configuration {}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Configuration")
            .field("regs", &self.regs)
            .field("mem", &self.mem)
            .field("secrets", self.init.secrets())
            .finish()
    }
}

/// True iff both configurations agree on every location `policy` lists as
/// public (including `pc` and `sp`).
pub fn low_equivalent(a: &Configuration, b: &Configuration, policy: &Policy) -> bool {
    let mut regs: BTreeSet<Reg> = policy.public_registers.iter().map(|r| Reg::new(r)).collect();
    regs.insert(Reg::pc());
    regs.insert(Reg::sp());
    if regs.iter().any(|r| a.reg(r) != b.reg(r)) {
        return false;
    }
    let mut addrs: BTreeSet<u64> = BTreeSet::new();
    for c in [a, b] {
        addrs.extend(c.mem.keys().copied());
        addrs.extend(c.init.policy().init_memory.iter().map(|m| m.addr));
        addrs.extend(c.init.secrets().keys().filter_map(|l| match l {
            Loc::Mem { addr } => Some(*addr),
            Loc::Reg { .. } => None,
        }));
    }
    // Addresses outside `addrs` read the same default in both.
    addrs.into_iter().filter(|x| policy.is_public_addr(*x)).all(|x| a.mem(x) == b.mem(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::lang::policy::AddrRange;

    fn prog() -> Program {
        parse_program("skip").unwrap()
    }

    #[test]
    fn reflexive() {
        let p = Arc::new(Policy::default());
        let c = Configuration::initial(&prog(), p.clone(), Assignment::new());
        assert!(low_equivalent(&c, &c, &p));
    }

    #[test]
    fn unlisted_memory_is_unconstrained() {
        let mut pol = Policy::default();
        pol.public_registers.insert("x".into());
        let pol = Arc::new(pol);
        let mut a = Configuration::initial(&prog(), pol.clone(), Assignment::new());
        let mut b = a.clone();
        a.set_reg(Reg::new("x"), 1);
        b.set_reg(Reg::new("x"), 1);
        a.set_mem(0, 1);
        b.set_mem(0, 2);
        assert!(low_equivalent(&a, &b, &pol));
    }

    #[test]
    fn listed_memory_differs() {
        let pol = Arc::new(Policy { public_memory: vec![AddrRange { lo: 0, hi: 8 }], ..Policy::default() });
        let a = Configuration::initial(&prog(), pol.clone(), Assignment::new());
        let mut b = a.clone();
        b.set_mem(4, 9);
        assert!(!low_equivalent(&a, &b, &pol));
    }

    #[test]
    fn secret_reads_are_recorded() {
        let pol = Arc::new(Policy { public_memory: vec![AddrRange { lo: 0, hi: 8 }], ..Policy::default() });
        let c = Configuration::initial(&prog(), pol, Assignment::new());
        assert_eq!(c.mem(3), 0);
        assert_eq!(c.mem(12), 0);
        assert_eq!(c.reg(&Reg::new("k")), 0);
        let misses: Vec<Loc> = c.init().misses().into_iter().collect();
        assert_eq!(misses, vec![Loc::reg("k"), Loc::mem(12)]);
    }
}
