use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::expr::{Expr, Reg};

/// The ten instruction forms of the language.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instr {
    Skip,
    Assign(Reg, Expr),
    /// `load x, e`: `x := m(e)`.
    Load(Reg, Expr),
    /// `store x, e`: `m(e) := x`.
    Store(Reg, Expr),
    Jmp(Expr),
    /// `beqz x, l`: jump to address `l` when `x` is zero.
    Beqz(Reg, u64),
    /// `cmov x, e, c`: `x := e` when `c` is nonzero.
    Cmov(Reg, Expr, Expr),
    SpBarr,
    Call(String),
    Ret,
}

/// Instruction classes, used by the exclusion sets of composed semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstrClass {
    Skip,
    Assign,
    Load,
    Store,
    Jmp,
    Beqz,
    Cmov,
    SpBarr,
    Call,
    Ret,
}

impl InstrClass {
    pub const ALL: [InstrClass; 10] = [
        InstrClass::Skip,
        InstrClass::Assign,
        InstrClass::Load,
        InstrClass::Store,
        InstrClass::Jmp,
        InstrClass::Beqz,
        InstrClass::Cmov,
        InstrClass::SpBarr,
        InstrClass::Call,
        InstrClass::Ret,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstrClass::Skip => "skip",
            InstrClass::Assign => "assign",
            InstrClass::Load => "load",
            InstrClass::Store => "store",
            InstrClass::Jmp => "jmp",
            InstrClass::Beqz => "beqz",
            InstrClass::Cmov => "cmov",
            InstrClass::SpBarr => "spbarr",
            InstrClass::Call => "call",
            InstrClass::Ret => "ret",
        }
    }
}

/// A small set of instruction classes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ClassSet(u16);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);

    pub fn of(classes: &[InstrClass]) -> ClassSet {
        classes.iter().fold(ClassSet::EMPTY, |s, c| s.with(*c))
    }

    pub fn with(self, c: InstrClass) -> ClassSet {
        ClassSet(self.0 | (1 << c as u16))
    }

    pub fn union(self, other: ClassSet) -> ClassSet {
        ClassSet(self.0 | other.0)
    }

    pub fn contains(self, c: InstrClass) -> bool {
        self.0 & (1 << c as u16) != 0
    }

    pub fn is_disjoint(self, other: ClassSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = InstrClass> {
        InstrClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl fmt::Debug for ClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|c| c.name())).finish()
    }
}

impl Instr {
    pub fn class(&self) -> InstrClass {
        match self {
            Instr::Skip => InstrClass::Skip,
            Instr::Assign(..) => InstrClass::Assign,
            Instr::Load(..) => InstrClass::Load,
            Instr::Store(..) => InstrClass::Store,
            Instr::Jmp(_) => InstrClass::Jmp,
            Instr::Beqz(..) => InstrClass::Beqz,
            Instr::Cmov(..) => InstrClass::Cmov,
            Instr::SpBarr => InstrClass::SpBarr,
            Instr::Call(_) => InstrClass::Call,
            Instr::Ret => InstrClass::Ret,
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Skip => write!(f, "skip"),
            Instr::Assign(x, e) => write!(f, "{x} <- {e}"),
            Instr::Load(x, e) => write!(f, "load {x}, {e}"),
            Instr::Store(x, e) => write!(f, "store {x}, {e}"),
            Instr::Jmp(e) => write!(f, "jmp {e}"),
            Instr::Beqz(x, l) => write!(f, "beqz {x}, {l}"),
            Instr::Cmov(x, e, c) => write!(f, "cmov {x}, {e}, {c}"),
            Instr::SpBarr => write!(f, "spbarr"),
            Instr::Call(name) => write!(f, "call {name}"),
            Instr::Ret => write!(f, "ret"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("call to unknown function `{name}` at address {addr}")]
    UnknownFunction { addr: u64, name: String },
    #[error("function `{name}` bound past the end of the program ({addr})")]
    FunctionOutOfRange { name: String, addr: u64 },
    #[error("instruction at address {addr} writes the reserved register `pc`")]
    WritesPc { addr: u64 },
}

/// A program: instructions at consecutive addresses starting at 0, and a
/// table of named entry points. Addresses past the end hold no instruction,
/// which the semantics treats as termination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    code: Vec<Instr>,
    functions: BTreeMap<String, u64>,
}

impl Program {
    pub fn new(code: Vec<Instr>, functions: BTreeMap<String, u64>) -> Result<Program, ProgramError> {
        for (name, &addr) in &functions {
            if addr > code.len() as u64 {
                return Err(ProgramError::FunctionOutOfRange { name: name.clone(), addr });
            }
        }
        for (addr, i) in code.iter().enumerate() {
            let addr = addr as u64;
            match i {
                Instr::Call(name) if !functions.contains_key(name) => {
                    return Err(ProgramError::UnknownFunction { addr, name: name.clone() });
                }
                Instr::Assign(x, _) | Instr::Load(x, _) | Instr::Cmov(x, _, _) if x.is_pc() => {
                    return Err(ProgramError::WritesPc { addr });
                }
                _ => {}
            }
        }
        Ok(Program { code, functions })
    }

    /// The instruction at `addr`, or `None` (the "no instruction" answer).
    pub fn fetch(&self, addr: u64) -> Option<&Instr> {
        usize::try_from(addr).ok().and_then(|a| self.code.get(a))
    }

    pub fn function(&self, name: &str) -> Option<u64> {
        self.functions.get(name).copied()
    }

    pub fn functions(&self) -> &BTreeMap<String, u64> {
        &self.functions
    }

    pub fn code(&self) -> &[Instr] {
        &self.code
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    /// Entry point: `Main` when defined, otherwise address 0.
    pub fn entry(&self) -> u64 {
        self.function("Main").unwrap_or(0)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut by_addr: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
        for (name, addr) in &self.functions {
            by_addr.entry(*addr).or_default().push(name);
        }
        for addr in 0..=self.code.len() as u64 {
            if let Some(names) = by_addr.get(&addr) {
                for n in names {
                    writeln!(f, "{n}:")?;
                }
            }
            if let Some(i) = self.fetch(addr) {
                writeln!(f, "    {i}")?;
            }
        }
        Ok(())
    }
}
