use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;

use super::verdict::{first_difference, to_secret_values, Stats, Verdict, Witness};
use super::CheckConfig;
use crate::lang::{Assignment, Configuration, Loc, Policy, Program};
use crate::nonspec::{ns_project, Observation, Status, Trace};
use crate::specsem::{am_run, Descriptor, SpecRun};

/// All assignments of `locs` over `0..domain`, in lexicographic order
/// (first location most significant).
fn assignments(locs: &[Loc], domain: u64) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for loc in locs.iter().rev() {
        out = (0..domain)
            .flat_map(|v| {
                out.iter().map(move |a| {
                    let mut a = a.clone();
                    a.insert(loc.clone(), v);
                    a
                })
            })
            .collect();
    }
    out.sort();
    out
}

/// Concrete SNI check of an arbitrary deterministic semantics.
///
/// Secrets are discovered while running: a run that reads an unassigned
/// secret location adds it to the enumerated set and enumeration restarts.
pub fn check_sni_with<F>(p: &Program, policy: &Arc<Policy>, cfg: &CheckConfig, run: F) -> Verdict
where
    F: Fn(&Configuration) -> SpecRun<Observation> + Sync,
{
    let domain = 1u64 << cfg.domain_bits;
    let mut secrets: BTreeSet<Loc> = BTreeSet::new();
    let mut stats = Stats::default();
    let results: Vec<(Assignment, SpecRun<Observation>)> = loop {
        if secrets.len() > cfg.max_secrets {
            stats.secrets = secrets.into_iter().collect();
            return Verdict::inconclusive(
                format!("more than {} secret locations influence the program", cfg.max_secrets),
                stats,
            );
        }
        let locs: Vec<Loc> = secrets.iter().cloned().collect();
        let batch: Vec<(Assignment, SpecRun<Observation>, BTreeSet<Loc>)> = assignments(&locs, domain)
            .into_par_iter()
            .map(|a| {
                let c0 = Configuration::initial(p, policy.clone(), a.clone());
                let r = run(&c0);
                let misses = c0.init().misses();
                (a, r, misses)
            })
            .collect();
        stats.runs += batch.len() as u64;
        stats.steps += batch.iter().map(|(_, r, _)| r.steps).sum::<u64>();
        let before = secrets.len();
        for (_, _, m) in &batch {
            secrets.extend(m.iter().cloned());
        }
        if secrets.len() == before {
            break batch.into_iter().map(|(a, r, _)| (a, r)).collect();
        }
    };
    stats.secrets = secrets.into_iter().collect();
    if let Some((a, _)) = results.iter().find(|(_, r)| r.status == Status::FuelExhausted) {
        return Verdict::inconclusive(
            format!("fuel exhausted for secrets {}", crate::sni::verdict::display_assignment(a)),
            stats,
        );
    }
    let mut first_of: BTreeMap<Trace, usize> = BTreeMap::new();
    for (i, (a, r)) in results.iter().enumerate() {
        let proj = match ns_project(&r.trace) {
            Ok(t) => t,
            Err(e) => return Verdict::inconclusive(format!("malformed trace: {e}"), stats),
        };
        let j = *first_of.entry(proj).or_insert(i);
        let (b, first) = &results[j];
        if let Some(index) = first_difference(&first.trace, &r.trace) {
            let w = Witness {
                secrets1: to_secret_values(b),
                secrets2: to_secret_values(a),
                trace1: first.trace.clone(),
                trace2: r.trace.clone(),
                index,
            };
            return Verdict::insecure(w, stats);
        }
    }
    Verdict::secure(stats)
}

/// Concrete SNI check under the always-mispredict semantics of `desc`.
pub fn check_sni_concrete(p: &Program, policy: &Arc<Policy>, desc: &Descriptor, cfg: &CheckConfig) -> Verdict {
    check_sni_with(p, policy, cfg, |c0| am_run(desc, p, c0, cfg.params, cfg.width, cfg.fuel))
}
