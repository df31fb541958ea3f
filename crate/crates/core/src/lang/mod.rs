//! Abstract syntax, text format, configurations and policies.

mod config;
mod expr;
mod parse;
mod policy;
mod program;
mod value;

pub use config::{low_equivalent, Assignment, Configuration, InitialValues, Loc};
pub use expr::{eval_expr, eval_with, BinOp, EvalError, Expr, Reg, UnOp};
pub use parse::{parse_program, ParseError, ParseErrorKind, ParseErrors};
pub use policy::{AddrRange, MemInit, Policy};
pub use program::{ClassSet, Instr, InstrClass, Program, ProgramError};
pub use value::Width;
