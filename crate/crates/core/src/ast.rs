//! Resolved data model: variables, expressions, updates, edges, agents,
//! and whole systems.
//!
//! All variables of a system live in one [`VarTable`]. Every variable gets a
//! fully-qualified name (`Agent.x` for locals, the bare name for shared
//! variables) and a contiguous range of *slots* in a flat value vector; an
//! array variable occupies one slot per cell. The table orders variables
//! lexicographically by qualified name, which fixes the vector layout used
//! everywhere (evaluations, domain tables, projections).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{MasgError, Result};

/// Runtime value of a single variable cell.
pub type Value = i32;

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: i32,
    pub hi: i32,
}

impl IntRange {
    pub fn new(lo: i32, hi: i32) -> Self {
        IntRange { lo, hi }
    }

    pub fn contains(&self, v: i64) -> bool {
        i64::from(self.lo) <= v && v <= i64::from(self.hi)
    }

    pub fn len(&self) -> u64 {
        (i64::from(self.hi) - i64::from(self.lo) + 1) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn iter(&self) -> impl Iterator<Item = Value> {
        self.lo..=self.hi
    }
}

impl std::fmt::Display for IntRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

/// Shape and value domain of a variable: a scalar interval, or a fixed-length
/// array of cells sharing one interval, indexed over an explicit range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarDomain {
    Scalar(IntRange),
    Array { index: IntRange, cell: IntRange },
}

impl VarDomain {
    pub fn cell_count(&self) -> usize {
        match self {
            VarDomain::Scalar(_) => 1,
            VarDomain::Array { index, .. } => index.len() as usize,
        }
    }

    pub fn cell_range(&self) -> IntRange {
        match self {
            VarDomain::Scalar(r) => *r,
            VarDomain::Array { cell, .. } => *cell,
        }
    }

    pub fn index_range(&self) -> Option<IntRange> {
        match self {
            VarDomain::Scalar(_) => None,
            VarDomain::Array { index, .. } => Some(*index),
        }
    }
}

/// A variable declaration before qualification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub domain: VarDomain,
    /// One default per cell (scalar: length 1).
    pub default: Vec<Value>,
    pub shared: bool,
}

impl VarDecl {
    pub fn validate(&self) -> Result<()> {
        let cell = self.domain.cell_range();
        if cell.is_empty() {
            return Err(MasgError::Validation(format!(
                "variable `{}` has empty domain {}",
                self.name, cell
            )));
        }
        if let VarDomain::Array { index, .. } = &self.domain {
            if index.is_empty() {
                return Err(MasgError::Validation(format!(
                    "array `{}` has empty index range {}",
                    self.name, index
                )));
            }
        }
        if self.default.len() != self.domain.cell_count() {
            return Err(MasgError::Validation(format!(
                "variable `{}` declares {} default(s) for {} cell(s)",
                self.name,
                self.default.len(),
                self.domain.cell_count()
            )));
        }
        for d in &self.default {
            if !cell.contains(i64::from(*d)) {
                return Err(MasgError::Validation(format!(
                    "default {} of `{}` is outside its domain {}",
                    d, self.name, cell
                )));
            }
        }
        Ok(())
    }
}

/// Index of a variable in a [`VarTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u32);

/// A resolved variable with its slot placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub decl: VarDecl,
    /// Fully-qualified name: `Agent.x` for locals, bare name for shared.
    pub qualified: String,
    /// Owning agent index, `None` for shared variables.
    pub owner: Option<usize>,
    pub first_slot: usize,
}

impl VarInfo {
    pub fn slots(&self) -> std::ops::Range<usize> {
        self.first_slot..self.first_slot + self.decl.domain.cell_count()
    }

    /// Slot of the cell at array index `idx`, if in bounds.
    pub fn slot_at(&self, idx: i64) -> Option<usize> {
        match &self.decl.domain {
            VarDomain::Scalar(_) => None,
            VarDomain::Array { index, .. } => {
                if index.contains(idx) {
                    Some(self.first_slot + (idx - i64::from(index.lo)) as usize)
                } else {
                    None
                }
            }
        }
    }
}

/// All variables of a system, in the fixed lexicographic-by-qualified-name
/// order that defines the flat slot layout.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VarTable {
    entries: Vec<VarInfo>,
    by_name: BTreeMap<String, VarId>,
    slot_count: usize,
    /// Cell range per slot, for fast domain checks.
    slot_ranges: Vec<IntRange>,
    slot_owner: Vec<VarId>,
}

impl VarTable {
    /// Builds the table from `(decl, qualified name, owner)` triples. Input
    /// order is irrelevant; entries are sorted by qualified name.
    pub fn build(mut vars: Vec<(VarDecl, String, Option<usize>)>) -> Result<Self> {
        vars.sort_by(|a, b| a.1.cmp(&b.1));
        let mut entries = Vec::with_capacity(vars.len());
        let mut by_name = BTreeMap::new();
        let mut slot = 0usize;
        let mut slot_ranges = Vec::new();
        let mut slot_owner = Vec::new();
        for (decl, qualified, owner) in vars {
            decl.validate()?;
            let id = VarId(entries.len() as u32);
            if by_name.insert(qualified.clone(), id).is_some() {
                return Err(MasgError::Duplicate(qualified));
            }
            let cells = decl.domain.cell_count();
            for _ in 0..cells {
                slot_ranges.push(decl.domain.cell_range());
                slot_owner.push(id);
            }
            entries.push(VarInfo {
                decl,
                qualified,
                owner,
                first_slot: slot,
            });
            slot += cells;
        }
        Ok(VarTable {
            entries,
            by_name,
            slot_count: slot,
            slot_ranges,
            slot_owner,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn info(&self, id: VarId) -> &VarInfo {
        &self.entries[id.0 as usize]
    }

    pub fn lookup(&self, qualified: &str) -> Option<VarId> {
        self.by_name.get(qualified).copied()
    }

    /// Resolves a possibly-unqualified name: exact qualified match first,
    /// then a unique `Agent.name` suffix match.
    pub fn resolve_name(&self, name: &str) -> Result<VarId> {
        if let Some(id) = self.lookup(name) {
            return Ok(id);
        }
        let suffix = format!(".{name}");
        let mut hits = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.qualified.ends_with(&suffix));
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Ok(VarId(i as u32)),
            (Some((i, _)), Some((j, _))) => Err(MasgError::Validation(format!(
                "ambiguous variable `{name}`: matches `{}` and `{}`",
                self.entries[i].qualified, self.entries[j].qualified
            ))),
            _ => Err(MasgError::Undeclared(name.to_string())),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &VarInfo)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (VarId(i as u32), e))
    }

    pub fn slot_range(&self, slot: usize) -> IntRange {
        self.slot_ranges[slot]
    }

    pub fn slot_var(&self, slot: usize) -> VarId {
        self.slot_owner[slot]
    }

    /// The unique all-defaults evaluation.
    pub fn defaults(&self) -> Box<[Value]> {
        let mut v = Vec::with_capacity(self.slot_count);
        for e in &self.entries {
            v.extend_from_slice(&e.decl.default);
        }
        v.into_boxed_slice()
    }
}

/// An ordered set of variables with the induced slot projection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct VarSet {
    vars: Vec<VarId>,
    slots: Vec<usize>,
}

impl VarSet {
    pub fn new(mut vars: Vec<VarId>, table: &VarTable) -> Self {
        vars.sort_unstable();
        vars.dedup();
        let slots = vars
            .iter()
            .flat_map(|v| table.info(*v).slots())
            .collect::<Vec<_>>();
        VarSet { vars, slots }
    }

    pub fn from_iter<I: IntoIterator<Item = VarId>>(it: I, table: &VarTable) -> Self {
        Self::new(it.into_iter().collect(), table)
    }

    pub fn empty() -> Self {
        VarSet {
            vars: Vec::new(),
            slots: Vec::new(),
        }
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.vars.binary_search(&v).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn is_subset_of(&self, other: &VarSet) -> bool {
        self.vars.iter().all(|v| other.contains(*v))
    }

    pub fn union(&self, other: &VarSet, table: &VarTable) -> VarSet {
        let mut vs = self.vars.clone();
        vs.extend_from_slice(&other.vars);
        VarSet::new(vs, table)
    }

    /// Projects a full evaluation onto this set's slots.
    pub fn project(&self, full: &[Value]) -> Box<[Value]> {
        self.slots.iter().map(|s| full[*s]).collect()
    }

    /// Number of value vectors over this set.
    pub fn domain_size(&self, table: &VarTable) -> u128 {
        self.slots
            .iter()
            .map(|s| u128::from(table.slot_range(*s).len()))
            .product()
    }

    /// Iterates every value vector over this set, in lexicographic slot order.
    pub fn enumerate<'a>(&'a self, table: &'a VarTable) -> VecEnumerator<'a> {
        VecEnumerator::new(&self.slots, table)
    }

    pub fn names(&self, table: &VarTable) -> Vec<String> {
        self.vars
            .iter()
            .map(|v| table.info(*v).qualified.clone())
            .collect()
    }
}

/// Iterator over all value vectors for a list of slots.
pub struct VecEnumerator<'a> {
    slots: &'a [usize],
    table: &'a VarTable,
    current: Option<Vec<Value>>,
    started: bool,
}

impl<'a> VecEnumerator<'a> {
    fn new(slots: &'a [usize], table: &'a VarTable) -> Self {
        let current = slots
            .iter()
            .map(|s| table.slot_range(*s).lo)
            .collect::<Vec<_>>();
        VecEnumerator {
            slots,
            table,
            current: Some(current),
            started: false,
        }
    }
}

impl<'a> Iterator for VecEnumerator<'a> {
    type Item = Box<[Value]>;

    fn next(&mut self) -> Option<Self::Item> {
        let cur = self.current.as_mut()?;
        if self.started {
            let mut i = cur.len();
            loop {
                if i == 0 {
                    self.current = None;
                    return None;
                }
                i -= 1;
                let r = self.table.slot_range(self.slots[i]);
                if cur[i] < r.hi {
                    cur[i] += 1;
                    break;
                }
                cur[i] = r.lo;
            }
        } else {
            self.started = true;
            if cur.is_empty() {
                // single empty vector
                self.current = Some(Vec::new());
                let out: Box<[Value]> = Box::from([]);
                self.current = None;
                return Some(out);
            }
        }
        Some(cur.clone().into_boxed_slice())
    }
}

/// Reference to a scalar variable or an array base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarRef {
    pub var: VarId,
    /// First slot of the variable (the slot itself for scalars).
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl ArithOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Rem => "%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn eval(&self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Resolved guard/update expression tree.
///
/// Integer-typed nodes: `Int`, `Var`, `Cell`, `Neg`, `Arith`.
/// Boolean-typed nodes: `Bool`, `Cmp`, `Not`, `And`, `Or`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(VarRef),
    Cell(VarRef, Box<Expr>),
    Neg(Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub const TRUE: Expr = Expr::Bool(true);
    pub const FALSE: Expr = Expr::Bool(false);

    pub fn var(id: VarId, table: &VarTable) -> Expr {
        Expr::Var(VarRef {
            var: id,
            slot: table.info(id).first_slot,
        })
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Bool(true), e) | (e, Expr::Bool(true)) => e,
            (Expr::Bool(false), _) | (_, Expr::Bool(false)) => Expr::FALSE,
            (a, b) => Expr::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Bool(false), e) | (e, Expr::Bool(false)) => e,
            (Expr::Bool(true), _) | (_, Expr::Bool(true)) => Expr::TRUE,
            (a, b) => Expr::Or(Box::new(a), Box::new(b)),
        }
    }

    pub fn eq_int(a: Expr, b: i64) -> Expr {
        Expr::Cmp(CmpOp::Eq, Box::new(a), Box::new(Expr::Int(b)))
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Expr::Bool(true))
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Expr::Bool(false))
    }

    /// Collects the variables occurring in this expression.
    pub fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var(r) => {
                out.insert(r.var);
            }
            Expr::Cell(r, idx) => {
                out.insert(r.var);
                idx.collect_vars(out);
            }
            Expr::Neg(e) | Expr::Not(e) => e.collect_vars(out),
            Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

/// One atomic assignment `lhs := rhs`, where the target is a scalar variable
/// or an array cell with a computed index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assign {
    pub target: VarRef,
    pub index: Option<Expr>,
    pub rhs: Expr,
}

/// An ordered sequence of atomic assignments; the empty sequence is the
/// do-nothing action.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Update(pub Vec<Assign>);

impl Update {
    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    /// Variables occurring anywhere in the update (targets, indexes, rhs).
    pub fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        for a in &self.0 {
            out.insert(a.target.var);
            if let Some(ix) = &a.index {
                ix.collect_vars(out);
            }
            a.rhs.collect_vars(out);
        }
    }

    /// Variables read by the update (indexes and right-hand sides only).
    pub fn collect_reads(&self, out: &mut BTreeSet<VarId>) {
        for a in &self.0 {
            if let Some(ix) = &a.index {
                ix.collect_vars(out);
            }
            a.rhs.collect_vars(out);
        }
    }

    /// Variables written by the update.
    pub fn collect_writes(&self, out: &mut BTreeSet<VarId>) {
        for a in &self.0 {
            out.insert(a.target.var);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SyncDir {
    Send,
    Recv,
}

/// Channel synchronization label on an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sync {
    pub chan: u32,
    pub dir: SyncDir,
}

/// Location index local to one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocId(pub u32);

/// A guarded edge of an agent graph. Select binders are desugared at resolve
/// time, so edges here are always plain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub src: LocId,
    pub dst: LocId,
    pub guard: Expr,
    pub sync: Option<Sync>,
    pub update: Update,
}

/// One agent: locations, an initial location, its local variables, and
/// guarded edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentGraph {
    pub name: String,
    pub locations: Vec<String>,
    pub init: LocId,
    /// Local variables, as ids into the system table.
    pub local_vars: Vec<VarId>,
    pub edges: Vec<Edge>,
}

impl AgentGraph {
    pub fn loc_id(&self, name: &str) -> Option<LocId> {
        self.locations
            .iter()
            .position(|l| l == name)
            .map(|i| LocId(i as u32))
    }

    pub fn loc_name(&self, id: LocId) -> &str {
        &self.locations[id.0 as usize]
    }

    pub fn edges_from(&self, l: LocId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.src == l)
    }
}

/// A validated system: shared variables, channels, agents, and the unique
/// initial evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasGraph {
    pub vtable: VarTable,
    pub channels: Vec<String>,
    pub shared_vars: Vec<VarId>,
    pub agents: Vec<AgentGraph>,
    /// Extra initial condition beyond "all variables at defaults", kept for
    /// printing; the initial evaluation is always `eta0`.
    pub g0_extra: Option<Expr>,
    /// The unique initial evaluation.
    pub eta0: Box<[Value]>,
}

impl MasGraph {
    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    pub fn channel_index(&self, name: &str) -> Option<u32> {
        self.channels.iter().position(|c| c == name).map(|i| i as u32)
    }

    /// All variables as a set.
    pub fn all_vars(&self) -> VarSet {
        VarSet::from_iter(self.vtable.iter().map(|(id, _)| id), &self.vtable)
    }

    /// The initial condition as an expression (conjunction of `v == default`
    /// for every cell, plus any explicit extra condition).
    pub fn g0_expr(&self) -> Expr {
        let mut g = Expr::TRUE;
        for (id, info) in self.vtable.iter() {
            match &info.decl.domain {
                VarDomain::Scalar(_) => {
                    g = Expr::and(
                        g,
                        Expr::eq_int(
                            Expr::Var(VarRef {
                                var: id,
                                slot: info.first_slot,
                            }),
                            i64::from(info.decl.default[0]),
                        ),
                    );
                }
                VarDomain::Array { index, .. } => {
                    for (k, d) in info.decl.default.iter().enumerate() {
                        let ix = i64::from(index.lo) + k as i64;
                        g = Expr::and(
                            g,
                            Expr::eq_int(
                                Expr::Cell(
                                    VarRef {
                                        var: id,
                                        slot: info.first_slot,
                                    },
                                    Box::new(Expr::Int(ix)),
                                ),
                                i64::from(*d),
                            ),
                        );
                    }
                }
            }
        }
        if let Some(extra) = &self.g0_extra {
            g = Expr::and(g, extra.clone());
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decl(name: &str, lo: i32, hi: i32, default: i32) -> VarDecl {
        VarDecl {
            name: name.into(),
            domain: VarDomain::Scalar(IntRange::new(lo, hi)),
            default: vec![default],
            shared: false,
        }
    }

    #[test]
    fn table_orders_by_qualified_name() {
        let t = VarTable::build(vec![
            (decl("b", 0, 1, 0), "Z.b".into(), Some(1)),
            (decl("a", 0, 2, 1), "A.a".into(), Some(0)),
        ])
        .unwrap();
        assert_eq!(t.info(VarId(0)).qualified, "A.a");
        assert_eq!(t.info(VarId(1)).qualified, "Z.b");
        assert_eq!(t.defaults().as_ref(), &[1, 0]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = VarTable::build(vec![
            (decl("a", 0, 1, 0), "A.a".into(), Some(0)),
            (decl("a", 0, 1, 0), "A.a".into(), Some(0)),
        ]);
        assert!(matches!(r, Err(MasgError::Duplicate(_))));
    }

    #[test]
    fn varset_enumerates_lexicographically() {
        let t = VarTable::build(vec![
            (decl("x", 0, 1, 0), "x".into(), None),
            (decl("y", 5, 6, 5), "y".into(), None),
        ])
        .unwrap();
        let vs = VarSet::from_iter([VarId(0), VarId(1)], &t);
        let all: Vec<_> = vs.enumerate(&t).map(|v| v.to_vec()).collect();
        assert_eq!(
            all,
            vec![vec![0, 5], vec![0, 6], vec![1, 5], vec![1, 6]]
        );
        let empty = VarSet::empty();
        assert_eq!(empty.enumerate(&t).count(), 1);
    }

    #[test]
    fn array_slots_and_bounds() {
        let d = VarDecl {
            name: "t".into(),
            domain: VarDomain::Array {
                index: IntRange::new(1, 3),
                cell: IntRange::new(0, 1),
            },
            default: vec![0, 0, 0],
            shared: true,
        };
        let t = VarTable::build(vec![(d, "t".into(), None)]).unwrap();
        let info = t.info(VarId(0));
        assert_eq!(info.slots(), 0..3);
        assert_eq!(info.slot_at(1), Some(0));
        assert_eq!(info.slot_at(3), Some(2));
        assert_eq!(info.slot_at(0), None);
        assert_eq!(info.slot_at(4), None);
    }
}
