use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speculation source tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    /// Conditional branches.
    B,
    /// Store bypass.
    S,
    /// Returns predicted by the return stack buffer.
    R,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::B, Source::S, Source::R];

    pub fn letter(self) -> char {
        match self {
            Source::B => 'b',
            Source::S => 's',
            Source::R => 'r',
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// An attacker-visible event of a concrete execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Observation {
    Load { addr: u64 },
    Store { addr: u64 },
    Pc { target: u64 },
    Call { func: String },
    Ret { addr: u64 },
    Start { src: Source, id: u64 },
    Rollback { src: Source, id: u64 },
    /// The store at this program counter was bypassed.
    Skip { pc: u64 },
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::Load { addr } => write!(f, "load {addr}"),
            Observation::Store { addr } => write!(f, "store {addr}"),
            Observation::Pc { target } => write!(f, "pc {target}"),
            Observation::Call { func } => write!(f, "call {func}"),
            Observation::Ret { addr } => write!(f, "ret {addr}"),
            Observation::Start { src, id } => write!(f, "start_{src} {id}"),
            Observation::Rollback { src, id } => write!(f, "rollback_{src} {id}"),
            Observation::Skip { pc } => write!(f, "skip {pc}"),
        }
    }
}

pub type Trace = Vec<Observation>;

/// Renders a trace as `obs · obs · …`.
pub fn display_trace<O: fmt::Display>(t: &[O]) -> String {
    t.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(" · ")
}

/// Structural role of an event, as far as projections care.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Start(Source, u64),
    Rollback(Source, u64),
    Skip,
    /// A path constraint; never removed by projections.
    Constraint,
    Plain,
}

/// Events the speculative engine can emit.
pub trait TraceEvent: Clone + fmt::Debug + PartialEq + Send + Sync {
    fn start(src: Source, id: u64) -> Self;
    fn rollback(src: Source, id: u64) -> Self;
    fn skip(pc: u64) -> Self;
    fn pc(target: u64) -> Self;
    fn ret(addr: u64) -> Self;
    fn kind(&self) -> EventKind;
    fn with_id(&self, id: u64) -> Self;
}

impl TraceEvent for Observation {
    fn start(src: Source, id: u64) -> Self {
        Observation::Start { src, id }
    }
    fn rollback(src: Source, id: u64) -> Self {
        Observation::Rollback { src, id }
    }
    fn skip(pc: u64) -> Self {
        Observation::Skip { pc }
    }
    fn pc(target: u64) -> Self {
        Observation::Pc { target }
    }
    fn ret(addr: u64) -> Self {
        Observation::Ret { addr }
    }
    fn kind(&self) -> EventKind {
        match self {
            Observation::Start { src, id } => EventKind::Start(*src, *id),
            Observation::Rollback { src, id } => EventKind::Rollback(*src, *id),
            Observation::Skip { .. } => EventKind::Skip,
            _ => EventKind::Plain,
        }
    }
    fn with_id(&self, id: u64) -> Self {
        match self {
            Observation::Start { src, .. } => Observation::Start { src: *src, id },
            Observation::Rollback { src, .. } => Observation::Rollback { src: *src, id },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BracketError {
    #[error("rollback {src:?}/{id} at position {pos} has no matching start")]
    Unmatched { src: Source, id: u64, pos: usize },
}

/// For each position, whether it lies inside (or is a marker of) a balanced
/// transaction of a source selected by `remove`.
fn removal_mask<O: TraceEvent>(t: &[O], remove: impl Fn(Source) -> bool) -> Result<Vec<bool>, BracketError> {
    let mut open: Vec<(Source, u64, usize)> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (pos, o) in t.iter().enumerate() {
        match o.kind() {
            EventKind::Start(s, id) => open.push((s, id, pos)),
            EventKind::Rollback(s, id) => match open.pop() {
                Some((os, oid, start)) if os == s && oid == id => {
                    if remove(s) {
                        spans.push((start, pos));
                    }
                }
                _ => return Err(BracketError::Unmatched { src: s, id, pos }),
            },
            _ => {}
        }
    }
    let mut mask = vec![false; t.len()];
    for (a, b) in spans {
        for m in &mut mask[a..=b] {
            *m = true;
        }
    }
    Ok(mask)
}

/// Checks that start/rollback markers are well-bracketed.
pub fn check_brackets<O: TraceEvent>(t: &[O]) -> Result<(), BracketError> {
    removal_mask(t, |_| false).map(|_| ())
}

/// Non-speculative projection: drops every balanced transaction of every
/// source, then any remaining start/skip markers.
pub fn ns_project<O: TraceEvent>(t: &[O]) -> Result<Vec<O>, BracketError> {
    let mask = removal_mask(t, |_| true)?;
    Ok(t.iter()
        .zip(mask)
        .filter(|(o, m)| !m && matches!(o.kind(), EventKind::Plain | EventKind::Constraint))
        .map(|(o, _)| o.clone())
        .collect())
}

/// Removes every balanced transaction of a source not in `keep`, with its
/// contents. Everything else is preserved in order.
pub fn project_trace<O: TraceEvent>(t: &[O], keep: &[Source]) -> Result<Vec<O>, BracketError> {
    let mask = removal_mask(t, |s| !keep.contains(&s))?;
    Ok(t.iter().zip(mask).filter(|(_, m)| !m).map(|(o, _)| o.clone()).collect())
}

/// Renumbers transaction ids by order of first appearance.
pub fn canonical_ids<O: TraceEvent>(t: &[O]) -> Vec<O> {
    let mut map: BTreeMap<(Source, u64), u64> = BTreeMap::new();
    t.iter()
        .map(|o| match o.kind() {
            EventKind::Start(s, id) | EventKind::Rollback(s, id) => {
                let next = map.len() as u64;
                let new = *map.entry((s, id)).or_insert(next);
                o.with_id(new)
            }
            _ => o.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Observation::*;

    #[test]
    fn project_empty() {
        assert_eq!(ns_project::<Observation>(&[]).unwrap(), vec![]);
    }

    #[test]
    fn project_removes_transaction() {
        let t = vec![
            Store { addr: 3 },
            Start { src: Source::B, id: 0 },
            Load { addr: 5 },
            Rollback { src: Source::B, id: 0 },
            Pc { target: 9 },
        ];
        assert_eq!(ns_project(&t).unwrap(), vec![Store { addr: 3 }, Pc { target: 9 }]);
    }

    #[test]
    fn project_nested_fully_speculative() {
        let t = vec![
            Start { src: Source::S, id: 1 },
            Start { src: Source::B, id: 2 },
            Pc { target: 5 },
            Rollback { src: Source::B, id: 2 },
            Rollback { src: Source::S, id: 1 },
        ];
        assert_eq!(ns_project(&t).unwrap(), vec![]);
    }

    #[test]
    fn project_rejects_unmatched_rollback() {
        let t = vec![Rollback { src: Source::B, id: 0 }];
        assert!(ns_project(&t).is_err());
        let t = vec![Start { src: Source::S, id: 0 }, Rollback { src: Source::B, id: 0 }];
        assert!(ns_project(&t).is_err());
    }

    #[test]
    fn keep_projection_drops_other_sources() {
        let t = vec![
            Start { src: Source::S, id: 1 },
            Skip { pc: 1 },
            Rollback { src: Source::S, id: 1 },
            Pc { target: 9 },
        ];
        assert_eq!(project_trace(&t, &[Source::B]).unwrap(), vec![Pc { target: 9 }]);
        assert_eq!(project_trace(&t, &[Source::S]).unwrap(), t);
    }

    #[test]
    fn json_shape() {
        let t = vec![Load { addr: 5 }, Start { src: Source::B, id: 0 }];
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"[{"t":"load","addr":5},{"t":"start","src":"B","id":0}]"#
        );
    }

    #[test]
    fn canonical_ids_by_first_appearance() {
        let t = vec![
            Start { src: Source::S, id: 7 },
            Rollback { src: Source::S, id: 7 },
            Start { src: Source::B, id: 3 },
            Rollback { src: Source::B, id: 3 },
        ];
        let c = canonical_ids(&t);
        assert_eq!(c[0], Start { src: Source::S, id: 0 });
        assert_eq!(c[3], Rollback { src: Source::B, id: 1 });
    }
}
