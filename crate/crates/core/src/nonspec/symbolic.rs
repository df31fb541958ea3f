use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::concrete::Stuck;
use super::symexpr::{SymExpr, SymVar};
use super::trace::{EventKind, Observation, Source, Trace, TraceEvent};
use crate::lang::{Expr, Instr, Loc, Policy, Program, Reg, Width};
use crate::sni::{Query, Solver};

/// Event of a symbolic trace. Addresses and targets are concretized by
/// case splits, so apart from path conditions every event is concrete.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymObservation {
    Obs(Observation),
    PathCond(SymExpr),
}

impl fmt::Display for SymObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymObservation::Obs(o) => write!(f, "{o}"),
            SymObservation::PathCond(e) => write!(f, "pathcond {e}"),
        }
    }
}

impl serde::Serialize for SymObservation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            SymObservation::Obs(o) => o.serialize(s),
            SymObservation::PathCond(e) => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("t", "pathcond")?;
                m.serialize_entry("cond", &e.to_string())?;
                m.end()
            }
        }
    }
}

impl TraceEvent for SymObservation {
    fn start(src: Source, id: u64) -> Self {
        SymObservation::Obs(Observation::start(src, id))
    }
    fn rollback(src: Source, id: u64) -> Self {
        SymObservation::Obs(Observation::rollback(src, id))
    }
    fn skip(pc: u64) -> Self {
        SymObservation::Obs(Observation::skip(pc))
    }
    fn pc(target: u64) -> Self {
        SymObservation::Obs(Observation::pc(target))
    }
    fn ret(addr: u64) -> Self {
        SymObservation::Obs(Observation::ret(addr))
    }
    fn kind(&self) -> EventKind {
        match self {
            SymObservation::Obs(o) => o.kind(),
            SymObservation::PathCond(_) => EventKind::Constraint,
        }
    }
    fn with_id(&self, id: u64) -> Self {
        match self {
            SymObservation::Obs(o) => SymObservation::Obs(o.with_id(id)),
            p => p.clone(),
        }
    }
}

pub type SymTrace = Vec<SymObservation>;

/// Splits a symbolic trace into its path condition and its observations.
pub fn split_trace(t: &[SymObservation]) -> (Vec<SymExpr>, Trace) {
    let mut pcs = Vec::new();
    let mut obs = Vec::new();
    for o in t {
        match o {
            SymObservation::Obs(o) => obs.push(o.clone()),
            SymObservation::PathCond(e) => pcs.push(e.clone()),
        }
    }
    (pcs, obs)
}

/// Initial values of a symbolic run: declared values and public locations
/// are concrete, every other location is a symbol tagged with the run.
pub struct SymInit {
    policy: Arc<Policy>,
    run: u8,
}

impl SymInit {
    pub fn new(policy: Arc<Policy>, run: u8) -> SymInit {
        SymInit { policy, run }
    }

    pub fn run(&self) -> u8 {
        self.run
    }

    pub fn policy(&self) -> &Arc<Policy> {
        &self.policy
    }

    pub fn value(&self, loc: &Loc) -> SymExpr {
        let (declared, public) = match loc {
            Loc::Reg { name } => (self.policy.init_reg(name), self.policy.is_public_reg(name)),
            Loc::Mem { addr } => (self.policy.init_mem(*addr), self.policy.is_public_addr(*addr)),
        };
        match declared {
            Some(v) => SymExpr::Const(v),
            None if public => SymExpr::Const(0),
            None => SymExpr::sym(SymVar { run: self.run, loc: loc.clone() }),
        }
    }
}

/// Symbolic configuration. The program counter is always concrete, and so
/// are memory addresses.
#[derive(Clone)]
pub struct SymConfig {
    pc: u64,
    regs: BTreeMap<Reg, SymExpr>,
    mem: BTreeMap<u64, SymExpr>,
    init: Arc<SymInit>,
}

impl SymConfig {
    pub fn initial(p: &Program, policy: Arc<Policy>, run: u8) -> SymConfig {
        let sp = policy.init_reg(&Reg::sp()).unwrap_or(0);
        let mut regs = BTreeMap::new();
        regs.insert(Reg::sp(), SymExpr::Const(sp));
        SymConfig { pc: p.entry(), regs, mem: BTreeMap::new(), init: Arc::new(SymInit::new(policy, run)) }
    }

    pub fn pc(&self) -> u64 {
        self.pc
    }

    pub fn set_pc(&mut self, v: u64) {
        self.pc = v;
    }

    pub fn init(&self) -> &Arc<SymInit> {
        &self.init
    }

    pub fn reg(&self, r: &Reg) -> SymExpr {
        if r.is_pc() {
            return SymExpr::Const(self.pc);
        }
        match self.regs.get(r) {
            Some(v) => v.clone(),
            None => self.init.value(&Loc::Reg { name: r.clone() }),
        }
    }

    pub fn mem(&self, a: u64) -> SymExpr {
        match self.mem.get(&a) {
            Some(v) => v.clone(),
            None => self.init.value(&Loc::Mem { addr: a }),
        }
    }

    pub fn set_reg(&mut self, r: Reg, v: SymExpr) {
        self.regs.insert(r, v);
    }

    pub fn set_mem(&mut self, a: u64, v: SymExpr) {
        self.mem.insert(a, v);
    }

    pub fn eval(&self, e: &Expr, w: Width) -> SymExpr {
        match e {
            Expr::Lit(n) => SymExpr::Const(w.wrap(*n)),
            Expr::Reg(r) => self.reg(r),
            Expr::Un(op, a) => SymExpr::un(*op, self.eval(a, w), w),
            Expr::Bin(op, a, b) => SymExpr::bin(*op, self.eval(a, w), self.eval(b, w), w),
        }
    }

    /// Written state, for comparisons.
    pub fn snapshot(&self) -> (u64, &BTreeMap<Reg, SymExpr>, &BTreeMap<u64, SymExpr>) {
        (self.pc, &self.regs, &self.mem)
    }
}

impl fmt::Debug for SymConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymConfig").field("pc", &self.pc).field("regs", &self.regs).field("mem", &self.mem).finish()
    }
}

impl PartialEq for SymConfig {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot() == other.snapshot() && self.init.run == other.init.run
    }
}

/// Knobs of the symbolic semantics.
#[derive(Clone, Copy)]
pub struct SymParams<'a> {
    pub width: Width,
    /// Maximum number of symbols a value may depend on before a case split
    /// over it is refused.
    pub max_split_symbols: usize,
    pub solver: &'a dyn Solver,
}

/// Path condition accumulated along one symbolic execution.
pub type PathCondition = Arc<Vec<SymExpr>>;

fn feasible(path: &[SymExpr], c: &SymExpr, params: &SymParams<'_>) -> bool {
    let mut cs: Vec<SymExpr> = path.to_vec();
    cs.push(c.clone());
    !params.solver.solve(Query { constraints: &cs, goal: &[] }).is_unsat()
}

/// Concrete values `e` can take on the current path, each with the
/// constraint selecting it (`None` when `e` has a single value).
pub fn split_value(
    e: &SymExpr,
    path: &[SymExpr],
    params: &SymParams<'_>,
) -> Result<Vec<(u64, Option<SymExpr>)>, Stuck> {
    if let Some(v) = e.as_const() {
        return Ok(vec![(v, None)]);
    }
    let syms: Vec<SymVar> = e.symbols().into_iter().collect();
    if syms.len() > params.max_split_symbols {
        return Err(Stuck::SymbolicTooWide { symbols: syms.len() });
    }
    let domain = params.solver.domain();
    let w = params.width;
    let mut values = BTreeSet::new();
    let mut vals = vec![0u64; syms.len()];
    loop {
        let env = |v: &SymVar| vals[syms.iter().position(|s| s == v).expect("collected symbol")];
        values.insert(e.eval(&env, w));
        let mut i = 0;
        while i < vals.len() {
            vals[i] += 1;
            if vals[i] < domain {
                break;
            }
            vals[i] = 0;
            i += 1;
        }
        if i == vals.len() {
            break;
        }
    }
    if values.len() == 1 {
        return Ok(vec![(values.into_iter().next().expect("one value"), None)]);
    }
    let mut out = Vec::new();
    for v in values {
        let c = SymExpr::eq(e.clone(), SymExpr::Const(v), w);
        if feasible(path, &c, params) {
            out.push((v, Some(c)));
        }
    }
    Ok(out)
}

/// A successor of a symbolic step.
#[derive(Debug, Clone)]
pub struct SymSucc {
    pub cfg: SymConfig,
    pub obs: SymTrace,
    pub path: PathCondition,
}

fn extend(path: &PathCondition, c: &Option<SymExpr>) -> PathCondition {
    match c {
        None => path.clone(),
        Some(c) => {
            let mut v = (**path).clone();
            v.push(c.clone());
            Arc::new(v)
        }
    }
}

/// One step of the symbolic non-speculative semantics. Returns an empty
/// set when the program has terminated.
pub fn sym_ns_step(
    p: &Program,
    c: &SymConfig,
    path: &PathCondition,
    params: &SymParams<'_>,
) -> Result<Vec<SymSucc>, Stuck> {
    let w = params.width;
    let Some(instr) = p.fetch(c.pc) else {
        return Ok(Vec::new());
    };
    let next = w.wrap(c.pc.wrapping_add(1));
    let single = |cfg: SymConfig, obs: Option<Observation>| {
        Ok(vec![SymSucc { cfg, obs: obs.into_iter().map(SymObservation::Obs).collect(), path: path.clone() }])
    };
    // For each concrete value of `e`: successor built by `f`.
    let by_value = |e: SymExpr, f: &dyn Fn(u64) -> (SymConfig, Observation)| -> Result<Vec<SymSucc>, Stuck> {
        let mut out = Vec::new();
        for (v, cond) in split_value(&e, path, params)? {
            let (cfg, o) = f(v);
            let mut obs: SymTrace = cond.iter().cloned().map(SymObservation::PathCond).collect();
            obs.push(SymObservation::Obs(o));
            out.push(SymSucc { cfg, obs, path: extend(path, &cond) });
        }
        Ok(out)
    };
    let mut c2 = c.clone();
    match instr {
        Instr::Skip | Instr::SpBarr => {
            c2.pc = next;
            single(c2, None)
        }
        Instr::Assign(x, e) => {
            c2.set_reg(x.clone(), c.eval(e, w));
            c2.pc = next;
            single(c2, None)
        }
        Instr::Cmov(x, e, cond) => {
            let v = SymExpr::ite(c.eval(cond, w), c.eval(e, w), c.reg(x));
            c2.set_reg(x.clone(), v);
            c2.pc = next;
            single(c2, None)
        }
        Instr::Load(x, e) => by_value(c.eval(e, w), &|addr| {
            let mut c3 = c.clone();
            c3.set_reg(x.clone(), c.mem(addr));
            c3.pc = next;
            (c3, Observation::Load { addr })
        }),
        Instr::Store(x, e) => by_value(c.eval(e, w), &|addr| {
            let mut c3 = c.clone();
            c3.set_mem(addr, c.reg(x));
            c3.pc = next;
            (c3, Observation::Store { addr })
        }),
        Instr::Jmp(e) => by_value(c.eval(e, w), &|target| {
            let mut c3 = c.clone();
            c3.pc = target;
            (c3, Observation::Pc { target })
        }),
        Instr::Beqz(x, l) => {
            let g = c.reg(x);
            if let Some(v) = g.as_const() {
                let target = if v == 0 { *l } else { next };
                c2.pc = target;
                return single(c2, Some(Observation::Pc { target }));
            }
            let zero = SymExpr::eq(g.clone(), SymExpr::Const(0), w);
            let nonzero = SymExpr::ne(g, SymExpr::Const(0), w);
            let branches = [(zero, *l), (nonzero, next)];
            let live: Vec<_> = branches.into_iter().filter(|(cond, _)| feasible(path, cond, params)).collect();
            let need_cond = live.len() > 1;
            Ok(live
                .into_iter()
                .map(|(cond, target)| {
                    let mut c3 = c.clone();
                    c3.pc = target;
                    let cond = need_cond.then_some(cond);
                    let mut obs: SymTrace = cond.iter().cloned().map(SymObservation::PathCond).collect();
                    obs.push(SymObservation::Obs(Observation::Pc { target }));
                    SymSucc { cfg: c3, obs, path: extend(path, &cond) }
                })
                .collect())
        }
        Instr::Call(f) => {
            let Some(target) = p.function(f) else {
                return Err(Stuck::UnknownFunction { name: f.clone() });
            };
            let func = f.clone();
            let sp = SymExpr::bin(crate::lang::BinOp::Sub, c.reg(&Reg::sp()), SymExpr::Const(8), w);
            by_value(sp, &|sp| {
                let mut c3 = c.clone();
                c3.set_reg(Reg::sp(), SymExpr::Const(sp));
                c3.set_mem(sp, SymExpr::Const(next));
                c3.pc = target;
                (c3, Observation::Call { func: func.clone() })
            })
        }
        Instr::Ret => {
            let mut out = Vec::new();
            for (sp, c_sp) in split_value(&c.reg(&Reg::sp()), path, params)? {
                let path_sp = extend(path, &c_sp);
                for (l, c_l) in split_value(&c.mem(sp), &path_sp, params)? {
                    let mut c3 = c.clone();
                    c3.set_reg(Reg::sp(), SymExpr::Const(w.wrap(sp.wrapping_add(8))));
                    c3.pc = l;
                    let mut obs: SymTrace =
                        c_sp.iter().chain(c_l.iter()).cloned().map(SymObservation::PathCond).collect();
                    obs.push(SymObservation::Obs(Observation::Ret { addr: l }));
                    out.push(SymSucc { cfg: c3, obs, path: extend(&path_sp, &c_l) });
                }
            }
            Ok(out)
        }
    }
}

/// Concrete traces described by a symbolic trace: assignments of its
/// symbols over `0..domain` that satisfy every path condition, each
/// instantiating the observations.
pub fn concretize(t: &[SymObservation], domain: u64, w: Width) -> BTreeSet<Trace> {
    let (pcs, obs) = split_trace(t);
    let syms: Vec<SymVar> = pcs.iter().flat_map(|e| e.symbols()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut vals = vec![0u64; syms.len()];
    loop {
        let env = |v: &SymVar| vals[syms.iter().position(|s| s == v).expect("collected symbol")];
        if pcs.iter().all(|e| e.eval(&env, w) != 0) {
            // Observations are concrete, so one satisfying assignment suffices.
            return BTreeSet::from([obs]);
        }
        let mut i = 0;
        while i < vals.len() {
            vals[i] += 1;
            if vals[i] < domain {
                break;
            }
            vals[i] = 0;
            i += 1;
        }
        if i == vals.len() {
            return BTreeSet::new();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, AddrRange};
    use crate::sni::ExhaustiveSolver;

    fn params(s: &ExhaustiveSolver) -> SymParams<'_> {
        SymParams { width: s.width, max_split_symbols: 4, solver: s }
    }

    #[test]
    fn symbolic_branch_splits() {
        let p = parse_program("beqz x, 7").unwrap();
        let s = ExhaustiveSolver::new(Width::new(4).unwrap(), 2);
        let c = SymConfig::initial(&p, Arc::new(Policy::default()), 1);
        let succ = sym_ns_step(&p, &c, &Arc::new(vec![]), &params(&s)).unwrap();
        assert_eq!(succ.len(), 2);
        assert!(matches!(succ[0].obs[0], SymObservation::PathCond(_)));
        assert_eq!(succ[0].obs[1], SymObservation::Obs(Observation::Pc { target: 7 }));
        assert_eq!(succ[1].obs[1], SymObservation::Obs(Observation::Pc { target: 1 }));
    }

    #[test]
    fn assign_constant() {
        let p = parse_program("x <- 5").unwrap();
        let s = ExhaustiveSolver::new(Width::new(4).unwrap(), 2);
        let c = SymConfig::initial(&p, Arc::new(Policy::default()), 1);
        let succ = sym_ns_step(&p, &c, &Arc::new(vec![]), &params(&s)).unwrap();
        assert_eq!(succ.len(), 1);
        assert_eq!(succ[0].cfg.reg(&Reg::new("x")), SymExpr::Const(5));
    }

    #[test]
    fn symbolic_load_matches_concrete_instances() {
        let p = parse_program("load y, x").unwrap();
        let s = ExhaustiveSolver::new(Width::new(4).unwrap(), 2);
        let policy = Policy { public_memory: vec![AddrRange { lo: 0, hi: 16 }], ..Policy::default() };
        let c = SymConfig::initial(&p, Arc::new(policy), 1);
        let succ = sym_ns_step(&p, &c, &Arc::new(vec![]), &params(&s)).unwrap();
        let got: BTreeSet<Trace> = succ.iter().flat_map(|s| concretize(&s.obs, 4, Width::new(4).unwrap())).collect();
        let want: BTreeSet<Trace> = (0..4).map(|a| vec![Observation::Load { addr: a }]).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn concretize_without_symbols() {
        let t = vec![SymObservation::Obs(Observation::Pc { target: 3 })];
        assert_eq!(concretize(&t, 4, Width::DEFAULT), BTreeSet::from([vec![Observation::Pc { target: 3 }]]));
    }

    #[test]
    fn concretize_respects_path() {
        let w = Width::new(4).unwrap();
        let x = SymExpr::sym(SymVar { run: 1, loc: Loc::reg("x") });
        let t = vec![
            SymObservation::PathCond(SymExpr::eq(x.clone(), SymExpr::Const(0), w)),
            SymObservation::Obs(Observation::Pc { target: 7 }),
        ];
        assert_eq!(concretize(&t, 4, w), BTreeSet::from([vec![Observation::Pc { target: 7 }]]));
        let t = vec![
            SymObservation::PathCond(SymExpr::eq(x.clone(), SymExpr::Const(0), w)),
            SymObservation::PathCond(SymExpr::ne(x, SymExpr::Const(0), w)),
        ];
        assert!(concretize(&t, 4, w).is_empty());
    }
}
