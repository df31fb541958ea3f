use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lang::{BinOp, Loc, UnOp, Width};

/// The unknown initial value of a secret location in one run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymVar {
    pub run: u8,
    pub loc: Loc,
}

impl fmt::Display for SymVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.loc, self.run)
    }
}

/// Expression over symbols and literals. Build through the constructors,
/// which fold constants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymExpr {
    Const(u64),
    Sym(SymVar),
    Un(UnOp, Arc<SymExpr>),
    Bin(BinOp, Arc<SymExpr>, Arc<SymExpr>),
    /// `if c != 0 then a else b`
    Ite(Arc<SymExpr>, Arc<SymExpr>, Arc<SymExpr>),
}

impl SymExpr {
    pub fn sym(v: SymVar) -> SymExpr {
        SymExpr::Sym(v)
    }

    pub fn un(op: UnOp, a: SymExpr, w: Width) -> SymExpr {
        match a {
            SymExpr::Const(v) => SymExpr::Const(op.apply(v, w)),
            a => SymExpr::Un(op, Arc::new(a)),
        }
    }

    pub fn bin(op: BinOp, a: SymExpr, b: SymExpr, w: Width) -> SymExpr {
        match (a, b) {
            (SymExpr::Const(x), SymExpr::Const(y)) => SymExpr::Const(op.apply(x, y, w)),
            (a, b) => SymExpr::Bin(op, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn ite(c: SymExpr, a: SymExpr, b: SymExpr) -> SymExpr {
        match c {
            SymExpr::Const(0) => b,
            SymExpr::Const(_) => a,
            _ if a == b => a,
            c => SymExpr::Ite(Arc::new(c), Arc::new(a), Arc::new(b)),
        }
    }

    /// `a == b` as a constraint.
    pub fn eq(a: SymExpr, b: SymExpr, w: Width) -> SymExpr {
        SymExpr::bin(BinOp::Eq, a, b, w)
    }

    /// `a != b` as a constraint.
    pub fn ne(a: SymExpr, b: SymExpr, w: Width) -> SymExpr {
        SymExpr::un(UnOp::Not, SymExpr::eq(a, b, w), w)
    }

    pub fn as_const(&self) -> Option<u64> {
        match self {
            SymExpr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn symbols(&self) -> BTreeSet<SymVar> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    pub fn collect_symbols(&self, out: &mut BTreeSet<SymVar>) {
        // Subterms are shared; visit each node once.
        fn go(e: &SymExpr, out: &mut BTreeSet<SymVar>, seen: &mut HashSet<*const SymExpr>) {
            let mut child = |a: &Arc<SymExpr>, out: &mut BTreeSet<SymVar>| {
                if seen.insert(Arc::as_ptr(a)) {
                    go(a, out, seen);
                }
            };
            match e {
                SymExpr::Const(_) => {}
                SymExpr::Sym(v) => {
                    out.insert(v.clone());
                }
                SymExpr::Un(_, a) => child(a, out),
                SymExpr::Bin(_, a, b) => {
                    child(a, out);
                    child(b, out);
                }
                SymExpr::Ite(c, a, b) => {
                    child(c, out);
                    child(a, out);
                    child(b, out);
                }
            }
        }
        go(self, out, &mut HashSet::new());
    }

    /// Evaluates under an assignment of the symbols.
    pub fn eval(&self, env: &dyn Fn(&SymVar) -> u64, w: Width) -> u64 {
        fn go(e: &SymExpr, env: &dyn Fn(&SymVar) -> u64, w: Width, memo: &mut HashMap<*const SymExpr, u64>) -> u64 {
            let mut child = |a: &Arc<SymExpr>| -> u64 {
                if let Some(v) = memo.get(&Arc::as_ptr(a)) {
                    return *v;
                }
                let v = go(a, env, w, memo);
                memo.insert(Arc::as_ptr(a), v);
                v
            };
            match e {
                SymExpr::Const(v) => *v,
                SymExpr::Sym(v) => w.wrap(env(v)),
                SymExpr::Un(op, a) => op.apply(child(a), w),
                SymExpr::Bin(op, a, b) => {
                    let x = child(a);
                    op.apply(x, child(b), w)
                }
                SymExpr::Ite(c, a, b) => {
                    if child(c) != 0 {
                        child(a)
                    } else {
                        child(b)
                    }
                }
            }
        }
        go(self, env, w, &mut HashMap::new())
    }

    /// Renames every symbol's run tag, keeping shared subterms shared.
    pub fn with_run(&self, run: u8) -> SymExpr {
        fn go(e: &SymExpr, run: u8, memo: &mut HashMap<*const SymExpr, Arc<SymExpr>>) -> SymExpr {
            let mut child = |a: &Arc<SymExpr>| -> Arc<SymExpr> {
                if let Some(r) = memo.get(&Arc::as_ptr(a)) {
                    return r.clone();
                }
                let r = Arc::new(go(a, run, memo));
                memo.insert(Arc::as_ptr(a), r.clone());
                r
            };
            match e {
                SymExpr::Const(v) => SymExpr::Const(*v),
                SymExpr::Sym(v) => SymExpr::Sym(SymVar { run, loc: v.loc.clone() }),
                SymExpr::Un(op, a) => SymExpr::Un(*op, child(a)),
                SymExpr::Bin(op, a, b) => {
                    let a = child(a);
                    SymExpr::Bin(*op, a, child(b))
                }
                SymExpr::Ite(c, a, b) => {
                    let c = child(c);
                    let a = child(a);
                    SymExpr::Ite(c, a, child(b))
                }
            }
        }
        go(self, run, &mut HashMap::new())
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Const(v) => write!(f, "{v}"),
            SymExpr::Sym(v) => write!(f, "{v}"),
            SymExpr::Un(op, a) => write!(f, "{}({a})", op.symbol()),
            SymExpr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            SymExpr::Ite(c, a, b) => write!(f, "({c} ? {a} : {b})"),
        }
    }
}
