//! Modular modelling and verification of multi-agent systems.
//!
//! A system is described as a *MAS graph*: a set of agent graphs with typed
//! finite-domain variables, guarded edges, update sequences, and 1-to-1
//! channel synchronization, plus a set of shared variables. The crate
//! provides:
//!
//! * the `.masg` text format ([`parse`], [`print`]),
//! * product composition of agents into a single combined graph ([`compose`]),
//! * explicit-state unwrapping into a serial labelled transition system
//!   ([`lts`]),
//! * per-location approximation of reachable variable values ([`domain`]),
//! * variable removal / merging / scoped-mapping abstractions ([`abstraction`]),
//! * checking of universal branching-time formulas and simulation preorders
//!   ([`formula`], [`check`], [`simulation`]).

pub mod abstraction;
pub mod ast;
pub mod check;
pub mod compose;
pub mod config;
pub mod domain;
pub mod error;
pub mod eval;
pub mod formula;
pub mod lts;
pub mod parse;
pub mod print;
pub mod raw;
pub mod resolve;
pub mod simulation;

pub use ast::{AgentGraph, Edge, Expr, MasGraph, Update, Value, VarDecl, VarId, VarSet, VarTable};
pub use error::{EvalError, MasgError};
