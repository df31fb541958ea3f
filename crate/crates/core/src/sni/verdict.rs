use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::CheckConfig;
use crate::lang::{low_equivalent, Assignment, Configuration, Loc, Policy, Program};
use crate::nonspec::{ns_project, Observation, Trace};
use crate::specsem::{am_run, Descriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Secure,
    Insecure,
    Inconclusive,
}

impl VerdictStatus {
    pub fn symbol(self) -> &'static str {
        match self {
            VerdictStatus::Secure => "ok",
            VerdictStatus::Insecure => "LEAK",
            VerdictStatus::Inconclusive => "?",
        }
    }
}

/// Value of one secret location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretValue {
    pub loc: Loc,
    pub value: u64,
}

pub fn to_secret_values(a: &Assignment) -> Vec<SecretValue> {
    a.iter().map(|(loc, &value)| SecretValue { loc: loc.clone(), value }).collect()
}

pub fn from_secret_values(v: &[SecretValue]) -> Assignment {
    v.iter().map(|s| (s.loc.clone(), s.value)).collect()
}

/// Two low-equivalent initial states whose speculative traces differ while
/// their non-speculative projections agree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub secrets1: Vec<SecretValue>,
    pub secrets2: Vec<SecretValue>,
    pub trace1: Trace,
    pub trace2: Trace,
    /// First position where the traces differ.
    pub index: usize,
}

/// Position of the first difference, `None` for equal traces.
pub fn first_difference(a: &[Observation], b: &[Observation]) -> Option<usize> {
    if a == b {
        return None;
    }
    Some(a.iter().zip(b).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len())))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    /// Executions performed (concrete runs or symbolic paths).
    pub runs: u64,
    /// Delegated steps over all executions.
    pub steps: u64,
    pub solver_queries: u64,
    /// Secret locations the verdict ranged over.
    pub secrets: Vec<Loc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub stats: Stats,
}

impl Verdict {
    pub fn secure(stats: Stats) -> Verdict {
        Verdict { status: VerdictStatus::Secure, witness: None, reason: None, stats }
    }

    pub fn insecure(w: Witness, stats: Stats) -> Verdict {
        Verdict { status: VerdictStatus::Insecure, witness: Some(w), reason: None, stats }
    }

    pub fn inconclusive(reason: impl Into<String>, stats: Stats) -> Verdict {
        Verdict { status: VerdictStatus::Inconclusive, witness: None, reason: Some(reason.into()), stats }
    }
}

/// Re-runs both sides of `w` and re-checks it: low equivalence, equal
/// projections, different traces, and traces as recorded.
pub fn replay_witness(w: &Witness, p: &Program, policy: &Arc<Policy>, desc: &Descriptor, cfg: &CheckConfig) -> bool {
    let c1 = Configuration::initial(p, policy.clone(), from_secret_values(&w.secrets1));
    let c2 = Configuration::initial(p, policy.clone(), from_secret_values(&w.secrets2));
    if !low_equivalent(&c1, &c2, policy) {
        return false;
    }
    let r1 = am_run(desc, p, &c1, cfg.params, cfg.width, cfg.fuel);
    let r2 = am_run(desc, p, &c2, cfg.params, cfg.width, cfg.fuel);
    let (Ok(p1), Ok(p2)) = (ns_project(&r1.trace), ns_project(&r2.trace)) else {
        return false;
    };
    p1 == p2
        && r1.trace == w.trace1
        && r2.trace == w.trace2
        && first_difference(&r1.trace, &r2.trace) == Some(w.index)
}

pub(crate) fn display_assignment(a: &Assignment) -> String {
    let parts: Vec<String> = a.iter().map(|(l, v)| format!("{l}={v}")).collect();
    format!("{{{}}}", parts.join(", "))
}
