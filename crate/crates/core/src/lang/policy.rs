use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::expr::Reg;

/// Half-open address range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddrRange {
    pub lo: u64,
    pub hi: u64,
}

impl AddrRange {
    pub fn contains(&self, a: u64) -> bool {
        self.lo <= a && a < self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemInit {
    pub addr: u64,
    pub value: u64,
}

/// Which locations the attacker knows, plus declared initial values.
///
/// Everything not listed public is secret. `pc` and `sp` are always public.
/// A location with a declared initial value starts with that value in every
/// execution; other public locations start at 0 and other secret locations
/// are left for the analysis to vary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    #[serde(default)]
    pub public_registers: BTreeSet<String>,
    #[serde(default)]
    pub public_memory: Vec<AddrRange>,
    #[serde(default)]
    pub init_memory: Vec<MemInit>,
    #[serde(default)]
    pub init_registers: BTreeMap<String, u64>,
}

impl Policy {
    pub fn from_json(text: &str) -> Result<Policy, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    pub fn is_public_reg(&self, r: &Reg) -> bool {
        r.is_pc() || r.is_sp() || self.public_registers.contains(r.as_str())
    }

    pub fn is_public_addr(&self, a: u64) -> bool {
        self.public_memory.iter().any(|r| r.contains(a))
    }

    pub fn init_reg(&self, r: &Reg) -> Option<u64> {
        self.init_registers.get(r.as_str()).copied()
    }

    pub fn init_mem(&self, a: u64) -> Option<u64> {
        // Later entries win, matching a sequential initialisation.
        self.init_memory.iter().rev().find(|m| m.addr == a).map(|m| m.value)
    }
}
