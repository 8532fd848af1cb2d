//! Unresolved, name-based system description as produced by the parser and
//! by abstraction transforms. [`crate::resolve`] turns it into a validated
//! [`crate::ast::MasGraph`].

use crate::ast::SyncDir;

#[derive(Debug, Clone, PartialEq)]
pub enum RawExpr {
    Int(i64),
    Bool(bool),
    /// Variable reference or select binder, possibly qualified (`Agent.x`).
    Ident(String),
    Index(String, Box<RawExpr>),
    /// Whole-array comparison sugar: `arr == [0,0,1]` / `arr != [..]`.
    ArrayCmp {
        name: String,
        negated: bool,
        values: Vec<i64>,
    },
    Neg(Box<RawExpr>),
    Arith(crate::ast::ArithOp, Box<RawExpr>, Box<RawExpr>),
    Cmp(crate::ast::CmpOp, Box<RawExpr>, Box<RawExpr>),
    Not(Box<RawExpr>),
    And(Box<RawExpr>, Box<RawExpr>),
    Or(Box<RawExpr>, Box<RawExpr>),
}

impl RawExpr {
    /// Replaces a select binder by a literal, textually.
    pub fn bind(&self, name: &str, value: i64) -> RawExpr {
        match self {
            RawExpr::Int(_) | RawExpr::Bool(_) => self.clone(),
            RawExpr::Ident(n) => {
                if n == name {
                    RawExpr::Int(value)
                } else {
                    self.clone()
                }
            }
            RawExpr::Index(n, ix) => RawExpr::Index(n.clone(), Box::new(ix.bind(name, value))),
            RawExpr::ArrayCmp { .. } => self.clone(),
            RawExpr::Neg(a) => RawExpr::Neg(Box::new(a.bind(name, value))),
            RawExpr::Arith(op, a, b) => RawExpr::Arith(
                *op,
                Box::new(a.bind(name, value)),
                Box::new(b.bind(name, value)),
            ),
            RawExpr::Cmp(op, a, b) => RawExpr::Cmp(
                *op,
                Box::new(a.bind(name, value)),
                Box::new(b.bind(name, value)),
            ),
            RawExpr::Not(a) => RawExpr::Not(Box::new(a.bind(name, value))),
            RawExpr::And(a, b) => RawExpr::And(
                Box::new(a.bind(name, value)),
                Box::new(b.bind(name, value)),
            ),
            RawExpr::Or(a, b) => RawExpr::Or(
                Box::new(a.bind(name, value)),
                Box::new(b.bind(name, value)),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAssign {
    pub target: String,
    pub index: Option<RawExpr>,
    pub rhs: RawExpr,
}

impl RawAssign {
    pub fn bind(&self, name: &str, value: i64) -> RawAssign {
        RawAssign {
            target: self.target.clone(),
            index: self.index.as_ref().map(|ix| ix.bind(name, value)),
            rhs: self.rhs.bind(name, value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEdge {
    pub src: String,
    pub dst: String,
    pub guard: Option<RawExpr>,
    pub sync: Option<(String, SyncDir)>,
    pub updates: Vec<RawAssign>,
    /// Select binders `(name, lo, hi)`, expanded at resolve time.
    pub selects: Vec<(String, i64, i64)>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawDomain {
    Scalar { lo: i64, hi: i64 },
    Array { ilo: i64, ihi: i64, lo: i64, hi: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawVarDecl {
    pub name: String,
    pub domain: RawDomain,
    /// Declared defaults: one value (broadcast over arrays) or one per cell.
    pub default: Vec<i64>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAgent {
    pub name: String,
    pub vars: Vec<RawVarDecl>,
    pub locations: Vec<String>,
    pub init: String,
    pub edges: Vec<RawEdge>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawSystem {
    pub shared: Vec<RawVarDecl>,
    pub channels: Vec<String>,
    pub g0: Option<RawExpr>,
    pub agents: Vec<RawAgent>,
}
