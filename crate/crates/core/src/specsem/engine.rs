use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::machine::{Machine, Succ};
use crate::lang::{ClassSet, Instr, InstrClass};
use crate::nonspec::{Source, Status, Stuck, TraceEvent};

/// Instruction classes a source needs to own.
pub fn relevant(src: Source) -> ClassSet {
    match src {
        Source::B => ClassSet::of(&[InstrClass::Beqz]),
        Source::S => ClassSet::of(&[InstrClass::Store]),
        Source::R => ClassSet::of(&[InstrClass::Call, InstrClass::Ret]),
    }
}

fn idx(s: Source) -> usize {
    match s {
        Source::B => 0,
        Source::S => 1,
        Source::R => 2,
    }
}

/// Participating sources and, for each, the classes it must not execute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Descriptor {
    participants: Vec<Source>,
    z: [ClassSet; 3],
}

impl Descriptor {
    /// Sources in `participants` (deduplicated, ordered B, S, R) with the
    /// given exclusion sets.
    pub fn new(participants: &[Source], z: impl Fn(Source) -> ClassSet) -> Descriptor {
        let participants: Vec<Source> = Source::ALL.into_iter().filter(|s| participants.contains(s)).collect();
        let mut zs = [ClassSet::EMPTY; 3];
        for &s in &participants {
            zs[idx(s)] = z(s);
        }
        Descriptor { participants, z: zs }
    }

    /// One source on its own, excluding nothing.
    pub fn single(src: Source) -> Descriptor {
        Descriptor::new(&[src], |_| ClassSet::EMPTY)
    }

    /// The canonical composition: each source excludes the classes the
    /// other participants own.
    pub fn canonical(participants: &[Source]) -> Descriptor {
        Descriptor::new(participants, |s| {
            participants.iter().filter(|&&o| o != s).fold(ClassSet::EMPTY, |acc, &o| acc.union(relevant(o)))
        })
    }

    pub fn participants(&self) -> &[Source] {
        &self.participants
    }

    pub fn has(&self, s: Source) -> bool {
        self.participants.contains(&s)
    }

    pub fn z(&self, s: Source) -> ClassSet {
        self.z[idx(s)]
    }

    /// Sources allowed to execute `class`: the owner first (if eligible),
    /// then the rest in B, S, R order.
    pub fn eligible(&self, class: InstrClass) -> Vec<Source> {
        let mut out: Vec<Source> =
            self.participants.iter().copied().filter(|&s| !self.z(s).contains(class)).collect();
        if let Some(pos) = out.iter().position(|&s| relevant(s).contains(class)) {
            let owner = out.remove(pos);
            out.insert(0, owner);
        }
        out
    }
}

/// Speculation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecParams {
    /// Maximal speculation window.
    pub window: u32,
    pub rsb_size: usize,
    /// Length of the per-frame (pc, outcome) history given to predictors.
    pub history_len: usize,
}

impl Default for SpecParams {
    fn default() -> Self {
        SpecParams { window: 10, rsb_size: 4, history_len: 16 }
    }
}

pub type History = VecDeque<(u64, bool)>;

/// Decides where speculation happens and for how long.
pub trait Predictor: Sync {
    /// Window of a mispredicted-branch transaction at `pc`, or `None` when
    /// the prediction is correct. `taken` is the actual outcome.
    fn branch(&self, pc: u64, history: &History, taken: bool) -> Option<u32>;
    /// Window of a transaction bypassing the store at `pc`, or `None`.
    fn store(&self, pc: u64, history: &History) -> Option<u32>;
    /// Window of a return predicted from the RSB.
    fn ret(&self, history: &History) -> u32;
}

/// Every speculation source mispredicts whenever it can, for the full window.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysMispredict;

impl Predictor for AlwaysMispredict {
    fn branch(&self, _: u64, _: &History, _: bool) -> Option<u32> {
        Some(u32::MAX)
    }
    fn store(&self, _: u64, _: &History) -> Option<u32> {
        Some(u32::MAX)
    }
    fn ret(&self, _: &History) -> u32 {
        u32::MAX
    }
}

/// One speculation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<C> {
    pub ctr: u64,
    pub cfg: C,
    /// Remaining window; `None` for the non-speculative root.
    pub window: Option<u32>,
    /// Present iff R participates.
    pub rsb: Option<Vec<u64>>,
    /// Source and id of the transaction that pushed this frame.
    pub txn: Option<(Source, u64)>,
    pub history: History,
}

/// Stack of speculation instances; only the top one steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecState<C> {
    pub frames: Vec<Frame<C>>,
}

impl<C> SpecState<C> {
    pub fn initial(cfg: C, with_rsb: bool) -> SpecState<C> {
        SpecState {
            frames: vec![Frame {
                ctr: 0,
                cfg,
                window: None,
                rsb: with_rsb.then(Vec::new),
                txn: None,
                history: History::new(),
            }],
        }
    }

    pub fn top(&self) -> &Frame<C> {
        self.frames.last().expect("nonempty stack")
    }

    pub fn height(&self) -> usize {
        self.frames.len()
    }
}

/// Outcome of one engine step.
pub enum SpecStep<M: Machine> {
    /// Top transaction aborted.
    Rollback(SpecState<M::Cfg>, M::Obs),
    /// Successors of a delegated step.
    Next(Vec<(SpecState<M::Cfg>, Vec<M::Obs>, M::Path)>),
    Terminated,
    Stuck(Stuck),
}

/// A speculative semantics: a non-speculative machine, the participating
/// sources and a predictor.
pub struct Engine<'a, M: Machine> {
    pub machine: &'a M,
    pub desc: &'a Descriptor,
    pub params: SpecParams,
    pub predictor: &'a dyn Predictor,
}

fn push_history(h: &mut History, entry: (u64, bool), len: usize) {
    h.push_back(entry);
    while h.len() > len {
        h.pop_front();
    }
}

impl<M: Machine> Engine<'_, M> {
    pub fn initial(&self, cfg: M::Cfg) -> SpecState<M::Cfg> {
        SpecState::initial(cfg, self.desc.has(Source::R))
    }

    fn rollback(&self, st: &SpecState<M::Cfg>) -> SpecStep<M> {
        let mut frames = st.frames.clone();
        let popped = frames.pop().expect("speculative frame");
        let lower = frames.last_mut().expect("root frame");
        lower.ctr = popped.ctr;
        let (src, id) = popped.txn.expect("speculative frames record their transaction");
        SpecStep::Rollback(SpecState { frames }, M::Obs::rollback(src, id))
    }

    /// One step: rollback if the top transaction is over, else delegate the
    /// current instruction to its eligible source.
    pub fn step(&self, st: &SpecState<M::Cfg>, path: &M::Path) -> SpecStep<M> {
        let top = st.top();
        let pc = self.machine.pc(&top.cfg);
        let instr = self.machine.program().fetch(pc);
        let speculative = st.height() > 1;
        if speculative && (top.window == Some(0) || instr.is_none()) {
            return self.rollback(st);
        }
        let Some(instr) = instr else {
            return SpecStep::Terminated;
        };
        let Some(&src) = self.desc.eligible(instr.class()).first() else {
            return SpecStep::Stuck(Stuck::NoDelegate { class: instr.class().name().to_string() });
        };
        match self.apply(src, st, instr, path) {
            Ok(succs) => SpecStep::Next(succs),
            Err(s) if speculative && !s.is_analysis_limit() => self.rollback(st),
            Err(s) => SpecStep::Stuck(s),
        }
    }

    /// Executes the top frame's instruction with the rules of `src`.
    pub fn apply(
        &self,
        src: Source,
        st: &SpecState<M::Cfg>,
        instr: &Instr,
        path: &M::Path,
    ) -> Result<Vec<(SpecState<M::Cfg>, Vec<M::Obs>, M::Path)>, Stuck> {
        let m = self.machine;
        let w = m.width();
        let top = st.top();
        let pc = m.pc(&top.cfg);
        let next = w.wrap(pc.wrapping_add(1));
        let speculating = relevant(src).contains(instr.class());
        let succs: Vec<Succ<M>> = m.step(&top.cfg, path)?;
        let remaining = top.window.map(|n| n.saturating_sub(1));
        let cap = remaining.map_or(self.params.window, |n| n.min(self.params.window));
        let below = &st.frames[..st.frames.len() - 1];
        let hl = self.params.history_len;

        let mut out = Vec::with_capacity(succs.len());
        for (cfg, mut obs, path2) in succs {
            let mut lower = Frame { cfg, window: remaining, ..top.clone() };
            let mut spec: Option<Frame<M::Cfg>> = None;
            let new_pc = m.pc(&lower.cfg);
            let txn_frame = |cfg: M::Cfg, j: u32, kind: Source, rsb: Option<Vec<u64>>, history: History| Frame {
                ctr: top.ctr + 1,
                cfg,
                window: Some(j.min(cap)),
                rsb,
                txn: Some((kind, top.ctr)),
                history,
            };
            match instr {
                Instr::Beqz(_, l) if speculating => {
                    let taken = new_pc == *l;
                    let mispredicted = if new_pc == *l { next } else { *l };
                    push_history(&mut lower.history, (pc, taken), hl);
                    if let Some(j) = self.predictor.branch(pc, &top.history, taken) {
                        let mut h = top.history.clone();
                        push_history(&mut h, (pc, !taken), hl);
                        let mut c = lower.cfg.clone();
                        m.set_pc(&mut c, mispredicted);
                        let f = txn_frame(c, j, Source::B, lower.rsb.clone(), h);
                        obs.push(M::Obs::start(Source::B, top.ctr));
                        obs.push(M::Obs::pc(mispredicted));
                        spec = Some(f);
                    }
                }
                Instr::Store(..) if speculating => {
                    let bypass = self.predictor.store(pc, &top.history);
                    push_history(&mut lower.history, (pc, bypass.is_some()), hl);
                    if let Some(j) = bypass {
                        let mut c = top.cfg.clone();
                        m.set_pc(&mut c, next);
                        let f = txn_frame(c, j, Source::S, lower.rsb.clone(), lower.history.clone());
                        obs.push(M::Obs::start(Source::S, top.ctr));
                        obs.push(M::Obs::skip(pc));
                        spec = Some(f);
                    }
                }
                Instr::Call(_) if speculating => {
                    if let Some(rsb) = lower.rsb.as_mut() {
                        if rsb.len() < self.params.rsb_size {
                            rsb.push(next);
                        }
                    }
                }
                Instr::Ret if speculating => {
                    let predicted = lower.rsb.as_mut().and_then(|r| r.pop());
                    if let Some(l) = predicted {
                        let mispredicted = l != new_pc;
                        push_history(&mut lower.history, (pc, mispredicted), hl);
                        if mispredicted {
                            let j = self.predictor.ret(&top.history);
                            let mut c = lower.cfg.clone();
                            m.set_pc(&mut c, l);
                            let f = txn_frame(c, j, Source::R, lower.rsb.clone(), lower.history.clone());
                            obs.push(M::Obs::start(Source::R, top.ctr));
                            obs.push(M::Obs::ret(l));
                            spec = Some(f);
                        }
                    }
                }
                Instr::SpBarr if lower.window.is_some() => lower.window = Some(0),
                _ => {}
            }
            let mut frames = below.to_vec();
            frames.push(lower);
            frames.extend(spec);
            out.push((SpecState { frames }, obs, path2));
        }
        Ok(out)
    }
}

/// A finished (or abandoned) speculative run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecRun<O> {
    pub trace: Vec<O>,
    #[serde(flatten)]
    pub status: Status,
    pub steps: u64,
}

/// Exploration stopped because there were more paths than allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TooManyPaths;

impl<M: Machine> Engine<'_, M> {
    /// All runs from `init`, each with at most `fuel` delegated steps.
    pub fn explore(
        &self,
        init: M::Cfg,
        fuel: u64,
        max_paths: usize,
    ) -> Result<Vec<(SpecRun<M::Obs>, M::Path)>, TooManyPaths> {
        let mut done = Vec::new();
        let mut work: Vec<(SpecState<M::Cfg>, Vec<M::Obs>, M::Path, u64)> =
            vec![(self.initial(init), Vec::new(), M::Path::default(), 0)];
        while let Some((mut st, mut trace, mut path, mut steps)) = work.pop() {
            let status = loop {
                match self.step(&st, &path) {
                    SpecStep::Rollback(s, o) => {
                        st = s;
                        trace.push(o);
                    }
                    SpecStep::Terminated => break Status::Terminated,
                    SpecStep::Stuck(cause) => break Status::Stuck { cause },
                    SpecStep::Next(_) if steps == fuel => break Status::FuelExhausted,
                    SpecStep::Next(succs) => {
                        steps += 1;
                        let mut it = succs.into_iter();
                        let Some((s, o, p)) = it.next() else {
                            break Status::Terminated;
                        };
                        // Later successors are explored after this one.
                        let rest: Vec<_> = it.collect();
                        for (s2, o2, p2) in rest.into_iter().rev() {
                            let mut t2 = trace.clone();
                            t2.extend(o2);
                            work.push((s2, t2, p2, steps));
                            if work.len() + done.len() >= max_paths {
                                return Err(TooManyPaths);
                            }
                        }
                        st = s;
                        trace.extend(o);
                        path = p;
                    }
                }
            };
            done.push((SpecRun { trace, status, steps }, path));
        }
        Ok(done)
    }
}
