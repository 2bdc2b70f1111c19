//! An end-to-end type checker for a small polymorphic functional language
//! with mutable references and reachability qualifiers.
//!
//! Expressions carry qualifiers describing the variables and fresh
//! locations they may reach. The checker runs a bidirectional typing
//! algorithm that infers qualifiers through holes in the context,
//! converts types with a self-aware subtype checker, and rewrites
//! escaping variables into self-references by polarity-guided avoidance.
//! A bounded declarative derivation search and a big-step interpreter
//! with a dynamic reachability audit serve as independent ground truths.
//!
//! The `examples/` directory walks through each capability; the `reachck`
//! binary checks `.rt` source files.

pub mod avoid;
pub mod eval;
pub mod front;
pub mod infer;
pub mod oracle;
pub mod qual;
pub mod stats;
pub mod subtype;
pub mod syntax;
pub mod wf;
