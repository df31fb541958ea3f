//! The bundled benchmark corpus: a manifest of programs, policies and
//! expected verdicts, and a runner over its cells.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::Selector;
use crate::lang::{parse_program, Policy, Program, Width};
use crate::sni::{check_sni, CheckConfig, Mode, Verdict, VerdictStatus};
use crate::specsem::SpecParams;

/// Directory of the corpus shipped with this crate.
pub const BUNDLED_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("no suite named `{0}`")]
    UnknownSuite(String),
    #[error("invalid knobs for suite `{suite}`: {message}")]
    Knobs { suite: String, message: String },
}

/// Analysis parameters of a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knobs {
    pub bits: u32,
    pub domain_bits: u32,
    pub window: u32,
    pub rsb_size: usize,
    pub fuel: u64,
}

impl Knobs {
    pub fn check_config(&self) -> Result<CheckConfig, String> {
        let width = Width::new(self.bits).ok_or_else(|| format!("unsupported width {}", self.bits))?;
        if self.domain_bits > self.bits {
            return Err(format!("domain bits {} exceed width {}", self.domain_bits, self.bits));
        }
        Ok(CheckConfig {
            params: SpecParams { window: self.window, rsb_size: self.rsb_size, ..SpecParams::default() },
            width,
            domain_bits: self.domain_bits,
            fuel: self.fuel,
            ..CheckConfig::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub name: String,
    /// Paths are relative to the corpus directory.
    pub program: PathBuf,
    pub policy: PathBuf,
    /// Selectors under which the case is expected insecure; secure under
    /// the suite's other selectors.
    pub insecure: Vec<Selector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Case {
    pub fn expected(&self, sel: Selector) -> VerdictStatus {
        if self.insecure.contains(&sel) {
            VerdictStatus::Insecure
        } else {
            VerdictStatus::Secure
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub name: String,
    pub knobs: Knobs,
    pub selectors: Vec<Selector>,
    pub cases: Vec<Case>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub suites: Vec<Suite>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Manifest, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads `manifest.json` from `dir`.
    pub fn load(dir: &Path) -> Result<Manifest, CorpusError> {
        let path = dir.join("manifest.json");
        let text = read(&path)?;
        Manifest::from_json(&text).map_err(|source| CorpusError::Json { path, source })
    }

    pub fn suite(&self, name: &str) -> Result<&Suite, CorpusError> {
        self.suites.iter().find(|s| s.name == name).ok_or_else(|| CorpusError::UnknownSuite(name.to_string()))
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

/// A case with its program and policy read from disk.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub case: Case,
    pub program: Program,
    pub policy: Arc<Policy>,
}

pub fn load_program(path: &Path) -> Result<Program, CorpusError> {
    let text = read(path)?;
    parse_program(&text).map_err(|e| CorpusError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

pub fn load_policy(path: &Path) -> Result<Policy, CorpusError> {
    let text = read(path)?;
    Policy::from_json(&text).map_err(|source| CorpusError::Json { path: path.to_path_buf(), source })
}

impl Suite {
    pub fn load_cases(&self, dir: &Path) -> Result<Vec<LoadedCase>, CorpusError> {
        self.cases
            .iter()
            .map(|c| {
                Ok(LoadedCase {
                    case: c.clone(),
                    program: load_program(&dir.join(&c.program))?,
                    policy: Arc::new(load_policy(&dir.join(&c.policy))?),
                })
            })
            .collect()
    }

    pub fn check_config(&self) -> Result<CheckConfig, CorpusError> {
        self.knobs.check_config().map_err(|message| CorpusError::Knobs { suite: self.name.clone(), message })
    }
}

/// One (case, selector) verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub case: String,
    pub selector: Selector,
    pub expected: VerdictStatus,
    pub verdict: Verdict,
}

impl Cell {
    pub fn matches(&self) -> bool {
        self.verdict.status == self.expected
    }
}

/// Checks every (case, selector) cell in parallel. Cells come back in
/// case-major, selector-minor order.
pub fn run_cells(cases: &[LoadedCase], selectors: &[Selector], cfg: &CheckConfig, mode: Mode) -> Vec<Cell> {
    let jobs: Vec<(&LoadedCase, Selector)> =
        cases.iter().flat_map(|c| selectors.iter().map(move |&s| (c, s))).collect();
    jobs.par_iter()
        .map(|(c, sel)| Cell {
            case: c.case.name.clone(),
            selector: *sel,
            expected: c.case.expected(*sel),
            verdict: check_sni(&c.program, &c.policy, &sel.descriptor(), cfg, mode),
        })
        .collect()
}
