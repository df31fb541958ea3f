//! Composition of speculation sources: selectors, state and trace
//! projections, and the well-formedness harnesses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{ClassSet, Configuration, Program, Width};
use crate::nonspec::{canonical_ids, display_trace, project_trace, Observation, Source, Status, Trace};
use crate::specsem::{
    am_run, relevant, AlwaysMispredict, ConcreteMachine, Descriptor, Engine, Frame, SpecParams, SpecRun, SpecState,
    SpecStep,
};

/// A set of speculation sources, written `b`, `s+r`, `b+s+r`, …
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selector {
    b: bool,
    s: bool,
    r: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid semantics selector `{0}` (expected e.g. b, s+r, b+s+r)")]
pub struct SelectorError(String);

impl Selector {
    /// The seven non-empty selectors, singles first.
    pub const ALL: [Selector; 7] = [
        Selector { b: true, s: false, r: false },
        Selector { b: false, s: true, r: false },
        Selector { b: false, s: false, r: true },
        Selector { b: true, s: true, r: false },
        Selector { b: false, s: true, r: true },
        Selector { b: true, s: false, r: true },
        Selector { b: true, s: true, r: true },
    ];

    pub fn of(sources: &[Source]) -> Selector {
        Selector {
            b: sources.contains(&Source::B),
            s: sources.contains(&Source::S),
            r: sources.contains(&Source::R),
        }
    }

    pub fn sources(self) -> Vec<Source> {
        Source::ALL.into_iter().filter(|&s| self.contains(s)).collect()
    }

    pub fn contains(self, s: Source) -> bool {
        match s {
            Source::B => self.b,
            Source::S => self.s,
            Source::R => self.r,
        }
    }

    /// Whether every source of `self` is in `other`.
    pub fn is_subset(self, other: Selector) -> bool {
        self.sources().into_iter().all(|s| other.contains(s))
    }

    /// The canonical composition of the selected sources.
    pub fn descriptor(self) -> Descriptor {
        Descriptor::canonical(&self.sources())
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sources().iter().map(|s| s.letter().to_string()).collect();
        write!(f, "{}", parts.join("+"))
    }
}

impl FromStr for Selector {
    type Err = SelectorError;

    fn from_str(text: &str) -> Result<Selector, SelectorError> {
        let err = || SelectorError(text.to_string());
        let mut sources = Vec::new();
        for part in text.split('+') {
            let s = match part.trim().to_ascii_lowercase().as_str() {
                "b" => Source::B,
                "s" => Source::S,
                "r" => Source::R,
                _ => return Err(err()),
            };
            if sources.contains(&s) {
                return Err(err());
            }
            sources.push(s);
        }
        Ok(Selector::of(&sources))
    }
}

impl Serialize for Selector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Composes two (already composed) semantics: every source of one side
/// additionally excludes the classes owned by the other side.
pub fn pair(left: &Descriptor, right: &Descriptor) -> Descriptor {
    let owned = |d: &Descriptor| d.participants().iter().fold(ClassSet::EMPTY, |acc, &s| acc.union(relevant(s)));
    let (lo, ro) = (owned(left), owned(right));
    let all: Vec<Source> = left.participants().iter().chain(right.participants()).copied().collect();
    Descriptor::new(&all, |s| {
        if left.has(s) {
            left.z(s).union(ro)
        } else {
            right.z(s).union(lo)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("source {0} does not participate")]
pub struct NotParticipant(pub Source);

/// Restricts an instance to the fields of `target`'s semantics.
pub fn project_instance<C: Clone>(
    desc: &Descriptor,
    f: &Frame<C>,
    target: Source,
) -> Result<Frame<C>, NotParticipant> {
    if !desc.has(target) {
        return Err(NotParticipant(target));
    }
    let mut g = f.clone();
    if target != Source::R {
        g.rsb = None;
    }
    Ok(g)
}

/// Pointwise [`project_instance`].
pub fn project_state<C: Clone>(
    desc: &Descriptor,
    s: &SpecState<C>,
    target: Source,
) -> Result<SpecState<C>, NotParticipant> {
    Ok(SpecState { frames: s.frames.iter().map(|f| project_instance(desc, f, target)).collect::<Result<_, _>>()? })
}

/// Re-attaches a return stack buffer dropped by a projection.
pub fn embed_instance<C: Clone>(f: &Frame<C>, rsb: Option<Vec<u64>>) -> Frame<C> {
    Frame { rsb, ..f.clone() }
}

/// Always-mispredict run under a composition.
pub fn combined_run(
    desc: &Descriptor,
    p: &Program,
    c0: &Configuration,
    params: SpecParams,
    width: Width,
    fuel: u64,
) -> SpecRun<Observation> {
    am_run(desc, p, c0, params, width, fuel)
}

/// A state where two eligible delegates disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub step: u64,
    pub pc: u64,
    pub sources: (Source, Source),
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConfluenceReport {
    /// States where more than one delegate was eligible.
    pub shared_states: u64,
    pub divergences: Vec<Divergence>,
}

impl ConfluenceReport {
    pub fn ok(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Replays the run of `p`; wherever several sources may execute the
/// current instruction, executes each and compares the outcomes.
pub fn check_confluence(
    desc: &Descriptor,
    p: &Program,
    c0: &Configuration,
    params: SpecParams,
    width: Width,
    fuel: u64,
) -> ConfluenceReport {
    let machine = ConcreteMachine { program: p, width };
    let engine = Engine { machine: &machine, desc, params, predictor: &AlwaysMispredict };
    let mut report = ConfluenceReport::default();
    let mut st = engine.initial(c0.clone());
    for step in 0..fuel {
        let top = st.top();
        let pc = top.cfg.pc();
        if let Some(instr) = p.fetch(pc) {
            let rollback_due = st.height() > 1 && top.window == Some(0);
            let eligible = desc.eligible(instr.class());
            if !rollback_due && eligible.len() > 1 {
                report.shared_states += 1;
                let first = engine.apply(eligible[0], &st, instr, &());
                for &other in &eligible[1..] {
                    let r = engine.apply(other, &st, instr, &());
                    if r != first {
                        let show = |r: &Result<Vec<(SpecState<Configuration>, Trace, ())>, _>| match r {
                            Ok(v) => v.iter().map(|(s, o, _)| format!("{} frames, {}", s.height(), display_trace(o))).collect::<Vec<_>>().join("; "),
                            Err(e) => format!("stuck: {e}"),
                        };
                        report.divergences.push(Divergence {
                            step,
                            pc,
                            sources: (eligible[0], other),
                            detail: format!("{}: {} / {}: {}", eligible[0], show(&first), other, show(&r)),
                        });
                    }
                }
            }
        }
        match engine.step(&st, &()) {
            SpecStep::Next(mut s) => st = s.pop().expect("one successor").0,
            SpecStep::Rollback(s, _) => st = s,
            SpecStep::Terminated | SpecStep::Stuck(_) => break,
        }
    }
    report
}

/// A participant whose projected combined trace differs from its own trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProjectionMismatch {
    pub program: String,
    pub source: Source,
    pub projected: String,
    pub solo: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProjectionReport {
    pub comparisons: u64,
    pub mismatches: Vec<ProjectionMismatch>,
    /// Runs that did not terminate within the fuel and were skipped.
    pub skipped: u64,
}

impl ProjectionReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares, for each participant `x`, the combined trace projected on `x`
/// with the trace of `x` alone, ids renumbered by first appearance.
pub fn check_projection_preservation<'a>(
    desc: &Descriptor,
    cases: impl IntoIterator<Item = (&'a str, &'a Program, Configuration)>,
    params: SpecParams,
    width: Width,
    fuel: u64,
) -> ProjectionReport {
    let mut report = ProjectionReport::default();
    for (name, p, c0) in cases {
        let combined = combined_run(desc, p, &c0, params, width, fuel);
        if combined.status == Status::FuelExhausted {
            report.skipped += 1;
            continue;
        }
        for &x in desc.participants() {
            let solo = am_run(&Descriptor::single(x), p, &c0, params, width, fuel);
            let projected = project_trace(&combined.trace, &[x]).expect("engine traces are well-bracketed");
            report.comparisons += 1;
            let (a, b) = (canonical_ids(&projected), canonical_ids(&solo.trace));
            if a != b {
                report.mismatches.push(ProjectionMismatch {
                    program: name.to_string(),
                    source: x,
                    projected: display_trace(&a),
                    solo: display_trace(&b),
                });
            }
        }
    }
    report
}
