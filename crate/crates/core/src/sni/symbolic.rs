use std::collections::BTreeMap;
use std::sync::Arc;

use super::solver::{Answer, Query, Solver};
use super::verdict::{first_difference, from_secret_values, replay_witness, SecretValue, Stats, Verdict, Witness};
use super::CheckConfig;
use crate::lang::{Configuration, Policy, Program};
use crate::nonspec::{ns_project, split_trace, Status, SymConfig, SymExpr, SymObservation, SymParams, Trace};
use crate::specsem::{am_run, sym_am_run, Descriptor};

struct Path {
    constraints: Vec<SymExpr>,
    trace: Trace,
    projection: Trace,
}

fn rename(t: &[SymObservation], run: u8) -> Vec<SymExpr> {
    split_trace(t).0.iter().map(|e| e.with_run(run)).collect()
}

/// Symbolic SNI check by self-composition: all symbolic paths of the
/// program are paired with a renamed copy, and the solver decides whether
/// two paths with the same non-speculative projection but different traces
/// can both be taken by low-equivalent initial states.
pub fn check_sni_symbolic(
    p: &Program,
    policy: &Arc<Policy>,
    desc: &Descriptor,
    solver: &dyn Solver,
    cfg: &CheckConfig,
) -> Verdict {
    let mut stats = Stats::default();
    let sym = SymParams { width: cfg.width, max_split_symbols: cfg.max_split_symbols, solver };
    let c0 = SymConfig::initial(p, policy.clone(), 1);
    let runs = match sym_am_run(desc, p, &c0, cfg.params, sym, cfg.fuel, cfg.max_paths) {
        Ok(r) => r,
        Err(_) => return Verdict::inconclusive(format!("more than {} symbolic paths", cfg.max_paths), stats),
    };
    stats.runs = runs.len() as u64;
    stats.steps = runs.iter().map(|r| r.steps).sum();
    let mut paths = Vec::with_capacity(runs.len());
    for r in &runs {
        match &r.status {
            Status::FuelExhausted => return Verdict::inconclusive("fuel exhausted on a symbolic path", stats),
            Status::Stuck { cause } if cause.is_analysis_limit() => {
                return Verdict::inconclusive(format!("symbolic execution stuck: {cause}"), stats)
            }
            _ => {}
        }
        let (_, trace) = split_trace(&r.trace);
        let projection = match ns_project(&trace) {
            Ok(t) => t,
            Err(e) => return Verdict::inconclusive(format!("malformed trace: {e}"), stats),
        };
        paths.push(Path { constraints: rename(&r.trace, 1), trace, projection });
    }
    let mut secrets = std::collections::BTreeSet::new();
    for r in &runs {
        for e in split_trace(&r.trace).0 {
            secrets.extend(e.symbols().into_iter().map(|v| v.loc));
        }
    }
    stats.secrets = secrets.into_iter().collect();

    // Paths can only be paired within a projection class.
    let mut classes: BTreeMap<&Trace, Vec<usize>> = BTreeMap::new();
    for (i, path) in paths.iter().enumerate() {
        classes.entry(&path.projection).or_default().push(i);
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for members in classes.values() {
        for &i in members {
            for &j in members {
                if paths[i].trace != paths[j].trace {
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs.sort();
    for (i, j) in pairs {
        let mut constraints = paths[i].constraints.clone();
        constraints.extend(rename(&runs[j].trace, 2));
        stats.solver_queries += 1;
        match solver.solve(Query { constraints: &constraints, goal: &[] }) {
            Answer::Unsat => {}
            Answer::Unknown(why) => return Verdict::inconclusive(format!("solver: {why}"), stats),
            Answer::Sat(model) => {
                let side = |run: u8| -> Vec<SecretValue> {
                    model
                        .iter()
                        .filter(|(v, _)| v.run == run)
                        .map(|(v, &value)| SecretValue { loc: v.loc.clone(), value })
                        .collect()
                };
                let (s1, s2) = (side(1), side(2));
                let replay = |s: &[SecretValue]| {
                    let c = Configuration::initial(p, policy.clone(), from_secret_values(s));
                    am_run(desc, p, &c, cfg.params, cfg.width, cfg.fuel).trace
                };
                let (t1, t2) = (replay(&s1), replay(&s2));
                let Some(index) = first_difference(&t1, &t2) else {
                    return Verdict::inconclusive("model does not replay to a violation", stats);
                };
                let w = Witness { secrets1: s1, secrets2: s2, trace1: t1, trace2: t2, index };
                if !replay_witness(&w, p, policy, desc, cfg) {
                    return Verdict::inconclusive("model does not replay to a violation", stats);
                }
                return Verdict::insecure(w, stats);
            }
        }
    }
    Verdict::secure(stats)
}
