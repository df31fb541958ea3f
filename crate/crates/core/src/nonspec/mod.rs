//! Non-speculative semantics, concrete and symbolic, and the trace model.

mod concrete;
mod symbolic;
mod symexpr;
mod trace;

pub use concrete::{ns_behavior, ns_step, NsStep, Run, Status, Stuck};
pub use symbolic::{
    concretize, split_trace, split_value, sym_ns_step, PathCondition, SymConfig, SymInit, SymObservation, SymParams,
    SymSucc, SymTrace,
};
pub use symexpr::{SymExpr, SymVar};
pub use trace::{
    canonical_ids, check_brackets, display_trace, ns_project, project_trace, BracketError, EventKind,
    Observation, Source, Trace, TraceEvent,
};
