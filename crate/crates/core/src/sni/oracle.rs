use std::sync::Arc;

use serde::Serialize;

use super::concrete::{check_sni_concrete, check_sni_with};
use super::verdict::{VerdictStatus, Witness};
use super::CheckConfig;
use crate::lang::{Policy, Program};
use crate::nonspec::Source;
use crate::specsem::{oracle_run, Descriptor, Oracle};

/// An oracle under which the program leaks although the always-mispredict
/// semantics says it is secure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleCounterexample {
    pub oracle: String,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    /// Verdict of the always-mispredict semantics.
    pub am: VerdictStatus,
    /// Oracles checked; zero unless `am` is secure.
    pub oracles: usize,
    /// Oracles whose check was inconclusive.
    pub inconclusive: usize,
    pub counterexamples: Vec<OracleCounterexample>,
}

impl OracleReport {
    pub fn ok(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// When `src` alone is secure on `p`, checks that every oracle in `family`
/// is secure too.
pub fn check_oracle_overapprox(
    p: &Program,
    policy: &Arc<Policy>,
    src: Source,
    family: &[Oracle],
    cfg: &CheckConfig,
) -> OracleReport {
    let am = check_sni_concrete(p, policy, &Descriptor::single(src), cfg).status;
    let mut report = OracleReport { am, oracles: 0, inconclusive: 0, counterexamples: Vec::new() };
    if am != VerdictStatus::Secure {
        return report;
    }
    for o in family {
        report.oracles += 1;
        let v = check_sni_with(p, policy, cfg, |c0| oracle_run(src, o, p, c0, cfg.params, cfg.width, cfg.fuel));
        match v.status {
            VerdictStatus::Secure => {}
            VerdictStatus::Inconclusive => report.inconclusive += 1,
            VerdictStatus::Insecure => report.counterexamples.push(OracleCounterexample {
                oracle: format!("{o:?}"),
                witness: v.witness.expect("insecure verdicts carry a witness"),
            }),
        }
    }
    report
}
