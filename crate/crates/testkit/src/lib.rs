//! Test support for the verification pipeline: random systems, random
//! abstractions and formulas, and independent oracles (a direct
//! product-semantics explorer, a lasso-enumeration formula evaluator, and a
//! from-the-definition simulation verifier).

pub mod explore;
pub mod gen;
pub mod lasso;
pub mod simvalid;

pub use explore::{explore, ExploredSystem};
pub use gen::{gen_formula_text, gen_mapping, gen_model, gen_system, GenConfig};
pub use lasso::brute_force_check;
pub use simvalid::verify_simulation;
