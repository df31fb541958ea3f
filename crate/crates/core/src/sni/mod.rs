//! Speculative non-interference checking.

mod concrete;
mod oracle;
mod solver;
mod symbolic;
mod verdict;

use serde::{Deserialize, Serialize};

pub use concrete::{check_sni_concrete, check_sni_with};
pub use oracle::{check_oracle_overapprox, OracleReport};
pub use solver::{check_model, Answer, ExhaustiveSolver, Model, Query, Solver};
pub use symbolic::check_sni_symbolic;
pub use verdict::{
    first_difference, from_secret_values, replay_witness, to_secret_values, SecretValue, Stats, Verdict,
    VerdictStatus, Witness,
};

use crate::lang::Width;
use crate::specsem::SpecParams;

/// Knobs shared by the checkers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub params: SpecParams,
    pub width: Width,
    /// Secrets range over `0..2^domain_bits`.
    pub domain_bits: u32,
    /// Step budget per execution.
    pub fuel: u64,
    /// Most secret locations the concrete checker enumerates.
    pub max_secrets: usize,
    /// Most symbolic paths explored.
    pub max_paths: usize,
    /// Most symbols a concretized value may depend on.
    pub max_split_symbols: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            params: SpecParams::default(),
            width: Width::new(8).expect("valid width"),
            domain_bits: 2,
            fuel: 10_000,
            max_secrets: 6,
            max_paths: 20_000,
            max_split_symbols: 4,
        }
    }
}

impl CheckConfig {
    pub fn solver(&self) -> ExhaustiveSolver {
        ExhaustiveSolver::new(self.width, self.domain_bits)
    }
}

/// Which checker to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Concrete,
    Symbolic,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        match s {
            "concrete" => Ok(Mode::Concrete),
            "symbolic" => Ok(Mode::Symbolic),
            _ => Err(format!("unknown mode `{s}` (expected concrete or symbolic)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Concrete => "concrete",
            Mode::Symbolic => "symbolic",
        })
    }
}

/// Runs the checker selected by `mode`.
pub fn check_sni(
    p: &crate::lang::Program,
    policy: &std::sync::Arc<crate::lang::Policy>,
    desc: &crate::specsem::Descriptor,
    cfg: &CheckConfig,
    mode: Mode,
) -> Verdict {
    match mode {
        Mode::Concrete => check_sni_concrete(p, policy, desc, cfg),
        Mode::Symbolic => check_sni_symbolic(p, policy, desc, &cfg.solver(), cfg),
    }
}
