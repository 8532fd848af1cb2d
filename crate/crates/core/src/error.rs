//! Error types shared across the crate.

use thiserror::Error;

/// Runtime failure while evaluating an expression or update.
///
/// Callers that fire edges treat an eval error as "edge not enabled" and
/// record a diagnostic instead of aborting.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("modulo by zero")]
    ModuloByZero,
    #[error("array index {index} out of bounds for `{var}` ({lo}..{hi})")]
    IndexOutOfBounds {
        var: String,
        index: i64,
        lo: i32,
        hi: i32,
    },
    #[error("value {value} assigned to `{var}` is outside its domain {lo}..{hi}")]
    OutOfDomain {
        var: String,
        value: i64,
        lo: i32,
        hi: i32,
    },
    #[error("expected an integer expression, found a boolean")]
    ExpectedInt,
    #[error("expected a boolean expression, found an integer")]
    ExpectedBool,
}

/// Top-level error for parsing, validation, and the model-building pipeline.
#[derive(Debug, Error)]
pub enum MasgError {
    #[error("{file}:{line}:{col}: {msg}")]
    Syntax {
        file: String,
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("undeclared identifier `{0}`")]
    Undeclared(String),
    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),
    #[error("{0}")]
    Validation(String),
    #[error("non-unique initial evaluation: {0}")]
    NonUniqueInit(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("state budget exceeded: explored {explored} states (cap {cap}), {frontier} states in frontier")]
    StateBudget {
        explored: usize,
        cap: usize,
        frontier: usize,
    },
    #[error("enumeration budget exceeded: {0} evaluations required (cap {1})")]
    EnumBudget(u128, u64),
    #[error("formula error: {0}")]
    Formula(String),
    #[error("formula is outside the supported universal fragment: {0}")]
    OutOfFragment(String),
    #[error("atom `{0}` is not labelled in the model; request it when unwrapping")]
    MissingAtom(String),
    #[error("abstraction error: {0}")]
    Abstraction(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model dump error: {0}")]
    Dump(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, MasgError>;
