//! Problem-file surface syntax: parser, pretty-printer, and compilation into
//! the core types. The `viewdet` binary is a thin dispatcher over these.

pub mod ast;
pub mod parser;
pub mod printer;
