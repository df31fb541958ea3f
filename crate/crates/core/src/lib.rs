//! Speculative non-interference checking for a small assembly language.

pub mod lang;
pub mod nonspec;
pub mod sni;
pub mod specsem;
pub mod compose;
pub mod corpus;
