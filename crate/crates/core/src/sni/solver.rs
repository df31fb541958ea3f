use std::collections::{BTreeMap, BTreeSet};

use crate::lang::Width;
use crate::nonspec::{SymExpr, SymVar};

pub type Model = BTreeMap<SymVar, u64>;

/// A satisfiability question: every constraint must evaluate to nonzero and
/// at least one goal must too (an empty goal list is trivially true).
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub constraints: &'a [SymExpr],
    pub goal: &'a [SymExpr],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Sat(Model),
    Unsat,
    Unknown(String),
}

impl Answer {
    pub fn is_unsat(&self) -> bool {
        matches!(self, Answer::Unsat)
    }
}

/// Decision procedure for [`Query`]s over symbols ranging in a finite domain.
pub trait Solver: Send + Sync {
    fn solve(&self, q: Query<'_>) -> Answer;

    /// Values a symbol may take.
    fn domain(&self) -> u64;

    fn width(&self) -> Width;
}

/// Backtracking search over the domain `0..2^domain_bits`.
#[derive(Debug, Clone, Copy)]
pub struct ExhaustiveSolver {
    pub width: Width,
    pub domain_bits: u32,
}

impl ExhaustiveSolver {
    pub fn new(width: Width, domain_bits: u32) -> ExhaustiveSolver {
        assert!(domain_bits <= width.bits() && domain_bits < 32, "domain wider than values");
        ExhaustiveSolver { width, domain_bits }
    }

    /// Finds a model for the conjunction of `exprs`, restricted to their symbols.
    fn search(&self, exprs: &[&SymExpr]) -> Option<Model> {
        let mut order: Vec<SymVar> = Vec::new();
        let mut index: BTreeMap<SymVar, usize> = BTreeMap::new();
        let mut ready: Vec<Vec<usize>> = Vec::new();
        let mut closed: Vec<usize> = Vec::new();
        for (k, e) in exprs.iter().enumerate() {
            let mut last = None;
            for v in e.symbols() {
                let i = *index.entry(v.clone()).or_insert_with(|| {
                    order.push(v);
                    order.len() - 1
                });
                last = Some(last.map_or(i, |l: usize| l.max(i)));
            }
            match last {
                Some(l) => {
                    if ready.len() <= l {
                        ready.resize(l + 1, Vec::new());
                    }
                    ready[l].push(k);
                }
                None => closed.push(k),
            }
        }
        let w = self.width;
        if closed.iter().any(|&k| exprs[k].eval(&|_| 0, w) == 0) {
            return None;
        }
        if order.is_empty() {
            return Some(Model::new());
        }
        ready.resize(order.len(), Vec::new());
        let domain = 1u64 << self.domain_bits;
        let mut vals = vec![0u64; order.len()];
        let mut depth = 0usize;
        loop {
            let env = |v: &SymVar| vals[index[v]];
            let ok = ready[depth].iter().all(|&k| exprs[k].eval(&env, w) != 0);
            if ok {
                if depth + 1 == order.len() {
                    return Some(order.into_iter().zip(vals).collect());
                }
                depth += 1;
                vals[depth] = 0;
                continue;
            }
            // advance, backtracking over exhausted levels
            loop {
                vals[depth] += 1;
                if vals[depth] < domain {
                    break;
                }
                if depth == 0 {
                    return None;
                }
                depth -= 1;
            }
        }
    }
}

/// Groups expressions whose symbol sets overlap, transitively.
fn components<'a>(exprs: &[&'a SymExpr]) -> Vec<(BTreeSet<SymVar>, Vec<&'a SymExpr>)> {
    let mut comps: Vec<(BTreeSet<SymVar>, Vec<&SymExpr>)> = Vec::new();
    for e in exprs {
        let syms = e.symbols();
        let mut merged = (syms, vec![*e]);
        let mut i = 0;
        while i < comps.len() {
            if comps[i].0.is_disjoint(&merged.0) {
                i += 1;
            } else {
                let (s, es) = comps.swap_remove(i);
                merged.0.extend(s);
                merged.1.extend(es);
            }
        }
        comps.push(merged);
    }
    comps
}

impl Solver for ExhaustiveSolver {
    fn solve(&self, q: Query<'_>) -> Answer {
        let refs: Vec<&SymExpr> = q.constraints.iter().collect();
        let comps = components(&refs);
        let mut models = Vec::with_capacity(comps.len());
        for (_, es) in &comps {
            match self.search(es) {
                Some(m) => models.push(m),
                None => return Answer::Unsat,
            }
        }
        let merge = |skip: &BTreeSet<usize>, extra: Model| {
            let mut m = extra;
            for (i, mm) in models.iter().enumerate() {
                if !skip.contains(&i) {
                    m.extend(mm.clone());
                }
            }
            m
        };
        if q.goal.is_empty() {
            return Answer::Sat(merge(&BTreeSet::new(), Model::new()));
        }
        for g in q.goal {
            let gs = g.symbols();
            let touched: BTreeSet<usize> =
                comps.iter().enumerate().filter(|(_, (s, _))| !s.is_disjoint(&gs)).map(|(i, _)| i).collect();
            let mut es: Vec<&SymExpr> = vec![g];
            for &i in &touched {
                es.extend(comps[i].1.iter().copied());
            }
            if let Some(m) = self.search(&es) {
                return Answer::Sat(merge(&touched, m));
            }
        }
        Answer::Unsat
    }

    fn domain(&self) -> u64 {
        1u64 << self.domain_bits
    }

    fn width(&self) -> Width {
        self.width
    }
}

/// Whether `m` satisfies the query, with absent symbols read as 0.
pub fn check_model(q: Query<'_>, m: &Model, w: Width) -> bool {
    let env = |v: &SymVar| m.get(v).copied().unwrap_or(0);
    q.constraints.iter().all(|c| c.eval(&env, w) != 0)
        && (q.goal.is_empty() || q.goal.iter().any(|g| g.eval(&env, w) != 0))
}
