//! Reasoning about queries, views, and existential rules: monotonic
//! determinacy verdicts, certain-answer rewritings, the tree-code/automaton
//! backward mapping, and undecidability-reduction corpora.

pub mod ast;
pub mod chase;
pub mod corpus;
pub mod datalog;
pub mod decomp;
pub mod error;
pub mod hom;
pub mod mondet;
pub mod query;
pub mod rewrite;
pub mod testkit;
pub mod tgd;
pub mod treecode;
pub mod unify;
pub mod views;

pub use ast::{Atom, Instance, PredTag, Schema, Substitution, Term};
pub use error::{Error, Result};
pub use query::{ConjunctiveQuery, UnionQuery};
pub use tgd::Tgd;
