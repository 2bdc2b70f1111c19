//! Surface syntax: lexer, parser, canonical pretty-printer, and the
//! command-line driver.

pub mod cli;
pub mod lexer;
pub mod parser;
pub mod pretty;

pub use parser::{parse_program, ParseSession};
pub use pretty::{pretty_qual, pretty_qualtype, pretty_term, pretty_type};

/// The bundled prelude: Church encodings and the combinator signatures
/// the evaluation corpus uses.
pub const BUNDLED_PRELUDE: &str = include_str!("../../corpus/prelude.rt");
