//! Variable abstraction of agent graphs: global removal, merging of
//! variables through a mapping function, and scope-restricted mappings,
//! orchestrated over a whole system.
//!
//! All three transforms share one engine. For every edge touched by a
//! mapping and every value vector `c` the tracked variables may take at the
//! edge's source, one edge instance is emitted:
//!
//! * global mappings substitute `c` into the guard and update, drop writes
//!   to the removed variables, and track written values through the update
//!   stepwise so later reads substitute every possible intermediate value
//!   (a cartesian expansion, matching the over-approximating construction);
//! * scope-restricted mappings keep their source variables declared but pin
//!   them to reset values inside the scope: edges leaving or inside the
//!   scope materialize the assumed values (`X := c` prepended, guard
//!   substituted, the abstract variable reset on leaving), edges entering or
//!   inside the scope append the mapped value `z := f(...)` and the source
//!   reset.
//!
//! Beyond the base construction, every instance guard is strengthened with
//! consistency pins (`z == f(c)` where the mapping is live at the source,
//! `X == c` where the source variables are still concrete): the pins drop
//! only transitions no matching concrete step justifies, so the
//! over-approximation direction is preserved while the abstraction gets
//! strictly tighter.
//!
//! Under-approximating mode flags, per edge, the situations in which the
//! edge-local construction cannot be justified by witnesses alone:
//! an instance expansion that actually depends on the discarded context, or
//! an update whose intermediate values are not uniquely determined. Callers
//! treat flagged output as unsupported rather than silently trusting it.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{
    Edge, LocId, MasGraph, Update, Value, VarDecl, VarDomain, VarId, VarSet,
};
use crate::compose::combine_reachable;
use crate::domain::{
    approx_local_domain, narrow, template_domain, DomainMode, DomainOptions, DomainStatus,
    NarrowedDomain,
};
use crate::error::{MasgError, Result};
use crate::eval;
use crate::print::{expr_to_raw, raw_expr_to_string};
use crate::raw::{RawAgent, RawAssign, RawDomain, RawEdge, RawExpr, RawSystem, RawVarDecl};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstractionMode {
    /// Over-approximation: every concrete transition keeps a counterpart.
    May,
    /// Under-approximation: every abstract transition has a counterpart.
    Must,
}

impl AbstractionMode {
    pub fn domain_mode(&self) -> DomainMode {
        match self {
            AbstractionMode::May => DomainMode::Upper,
            AbstractionMode::Must => DomainMode::Lower,
        }
    }
}

/// Total mapping from source value vectors to one target value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingFn {
    table: BTreeMap<Box<[Value]>, Value>,
}

impl MappingFn {
    /// Builds from an explicit table; must be total over the sources' domain
    /// and stay within the target domain.
    pub fn from_table(
        rows: BTreeMap<Box<[Value]>, Value>,
        sources: &VarSet,
        target: &VarDecl,
        table: &crate::ast::VarTable,
    ) -> Result<Self> {
        let range = target.domain.cell_range();
        for vec in sources.enumerate(table) {
            match rows.get(&vec) {
                None => {
                    return Err(MasgError::Abstraction(format!(
                        "mapping to `{}` is not total: no row for {:?}",
                        target.name, vec
                    )))
                }
                Some(v) => {
                    if !range.contains(i64::from(*v)) {
                        return Err(MasgError::Abstraction(format!(
                            "mapping to `{}` yields {} outside its domain {}",
                            target.name, v, range
                        )));
                    }
                }
            }
        }
        Ok(MappingFn { table: rows })
    }

    /// Builds by applying a function over the enumerated source domain.
    pub fn from_fn(
        sources: &VarSet,
        target: &VarDecl,
        table: &crate::ast::VarTable,
        f: impl Fn(&[Value]) -> Value,
    ) -> Result<Self> {
        let rows = sources
            .enumerate(table)
            .map(|vec| {
                let v = f(&vec);
                (vec, v)
            })
            .collect();
        Self::from_table(rows, sources, target, table)
    }

    pub fn apply(&self, vec: &[Value]) -> Value {
        *self
            .table
            .get(vec)
            .expect("mapping is total over its source domain")
    }
}

/// A variable mapping: merges the owner agent's `sources` into the fresh
/// variable `target`; without a target the sources are simply removed.
#[derive(Debug, Clone)]
pub struct Mapping {
    pub owner: usize,
    pub sources: VarSet,
    pub target: Option<(VarDecl, MappingFn)>,
}

/// A mapping together with the locations it applies at. An all-location
/// scope degenerates to the global transform (sources removed from the
/// declarations); a proper sub-scope keeps them declared and pins them to
/// `reset` inside the scope.
#[derive(Debug, Clone)]
pub struct ScopedMapping {
    pub mapping: Mapping,
    pub scope: BTreeSet<LocId>,
    /// Value the abstract variable holds outside the scope.
    pub outside_default: Option<Value>,
    /// Values the sources are pinned to inside the scope (defaults when
    /// absent), aligned with the sources' slots.
    pub reset: Option<Box<[Value]>>,
}

impl ScopedMapping {
    /// A mapping applied at every location.
    pub fn global(mapping: Mapping, mas: &MasGraph) -> Self {
        let all = (0..mas.agents[mapping.owner].locations.len() as u32)
            .map(LocId)
            .collect();
        ScopedMapping {
            mapping,
            scope: all,
            outside_default: None,
            reset: None,
        }
    }

    fn is_global(&self, mas: &MasGraph) -> bool {
        self.scope.len() == mas.agents[self.mapping.owner].locations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SupportIssueKind {
    /// Several distinct instances of one edge survive although the edge
    /// reads abstracted variables: which instance matches depends on context
    /// the abstraction discarded.
    ContextDependentEdge,
    /// An update produced several candidate intermediate values; the
    /// cartesian expansion may combine values that never co-occur.
    ContextDependentUpdate,
    /// The lower domain could not be verified against witnesses.
    UnverifiedLowerDomain,
}

/// A reason the under-approximating construction is not justified for some
/// edge; carriers of issues are excluded from soundness claims.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportIssue {
    pub agent: String,
    pub kind: SupportIssueKind,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Abstracted {
    pub mas: MasGraph,
    pub issues: Vec<SupportIssue>,
    pub domain_status: DomainStatus,
}

#[derive(Debug, Clone, Default)]
pub struct AbstractOptions {
    pub domain: DomainOptions,
    /// Approximate domains per agent template (synchronization discarded)
    /// instead of on the combined graph; coarser but far cheaper.
    pub use_template: bool,
}

// ---------------------------------------------------------------------------
// validation

fn validate_maps(mas: &MasGraph, maps: &[ScopedMapping]) -> Result<()> {
    let mut seen_sources: BTreeSet<VarId> = BTreeSet::new();
    let mut new_names: BTreeSet<String> = BTreeSet::new();
    for sm in maps {
        let m = &sm.mapping;
        let agent = mas.agents.get(m.owner).ok_or_else(|| {
            MasgError::Abstraction(format!("mapping owner #{} does not exist", m.owner))
        })?;
        if m.sources.is_empty() {
            return Err(MasgError::Abstraction(
                "mapping with no source variables".into(),
            ));
        }
        for v in m.sources.vars() {
            let info = mas.vtable.info(*v);
            if info.owner != Some(m.owner) {
                return Err(MasgError::Abstraction(format!(
                    "source `{}` is not a local variable of agent `{}`",
                    info.qualified, agent.name
                )));
            }
            if !seen_sources.insert(*v) {
                return Err(MasgError::Abstraction(format!(
                    "source `{}` appears in more than one mapping",
                    info.qualified
                )));
            }
        }
        if let Some((decl, _)) = &m.target {
            let qualified = format!("{}.{}", agent.name, decl.name);
            if mas.vtable.lookup(&qualified).is_some()
                || mas.vtable.lookup(&decl.name).is_some()
                || !new_names.insert(qualified)
            {
                return Err(MasgError::Abstraction(format!(
                    "target variable `{}` is not fresh",
                    decl.name
                )));
            }
            decl.validate()?;
        }
        for l in &sm.scope {
            if l.0 as usize >= agent.locations.len() {
                return Err(MasgError::Abstraction(format!(
                    "scope location #{} is not a location of agent `{}`",
                    l.0, agent.name
                )));
            }
        }
        if let Some(r) = &sm.reset {
            if r.len() != m.sources.slots().len() {
                return Err(MasgError::Abstraction(
                    "reset vector length does not match the source slots".into(),
                ));
            }
        }
        // a removed array read through a computed index cannot be substituted
        for v in m.sources.vars() {
            let info = mas.vtable.info(*v);
            if !matches!(info.decl.domain, VarDomain::Array { .. }) {
                continue;
            }
            if sm.is_global(mas) {
                for e in &agent.edges {
                    let mut dynamic = eval::reads_array_dynamically(&e.guard, *v);
                    for a in &e.update.0 {
                        if let Some(ix) = &a.index {
                            dynamic |= eval::reads_array_dynamically(ix, *v)
                                || (a.target.var == *v && !matches!(ix, crate::ast::Expr::Int(_)));
                        }
                        dynamic |= eval::reads_array_dynamically(&a.rhs, *v);
                    }
                    if dynamic {
                        return Err(MasgError::Abstraction(format!(
                            "array `{}` is accessed through a computed index and cannot be removed",
                            info.qualified
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// lowering of an untouched agent back to raw form

fn decl_to_raw(decl: &VarDecl) -> RawVarDecl {
    let domain = match &decl.domain {
        VarDomain::Scalar(r) => RawDomain::Scalar {
            lo: r.lo.into(),
            hi: r.hi.into(),
        },
        VarDomain::Array { index, cell } => RawDomain::Array {
            ilo: index.lo.into(),
            ihi: index.hi.into(),
            lo: cell.lo.into(),
            hi: cell.hi.into(),
        },
    };
    RawVarDecl {
        name: decl.name.clone(),
        domain,
        default: decl.default.iter().map(|v| i64::from(*v)).collect(),
        line: 0,
    }
}

fn edge_to_raw(mas: &MasGraph, agent: usize, e: &Edge) -> RawEdge {
    let a = &mas.agents[agent];
    RawEdge {
        src: a.loc_name(e.src).to_string(),
        dst: a.loc_name(e.dst).to_string(),
        guard: if e.guard.is_true() {
            None
        } else {
            Some(expr_to_raw(&e.guard, &mas.vtable, Some(&a.name)))
        },
        sync: e
            .sync
            .map(|s| (mas.channels[s.chan as usize].clone(), s.dir)),
        updates: crate::print::update_to_raw(&e.update, &mas.vtable, Some(&a.name)),
        selects: Vec::new(),
        line: 0,
    }
}

fn agent_to_raw(mas: &MasGraph, agent: usize) -> RawAgent {
    let a = &mas.agents[agent];
    RawAgent {
        name: a.name.clone(),
        vars: a
            .local_vars
            .iter()
            .map(|v| decl_to_raw(&mas.vtable.info(*v).decl))
            .collect(),
        locations: a.locations.clone(),
        init: a.loc_name(a.init).to_string(),
        edges: a.edges.iter().map(|e| edge_to_raw(mas, agent, e)).collect(),
    }
}

// ---------------------------------------------------------------------------
// the per-agent engine

struct EdgeInstanceCtx<'a> {
    mas: &'a MasGraph,
    agent: usize,
    maps: &'a [ScopedMapping],
    global: Vec<bool>,
    /// Union of all source variables of the agent's mappings.
    all_sources: VarSet,
    /// Positions of each mapping's source slots within `all_sources`.
    source_pos: Vec<Vec<usize>>,
    mode: AbstractionMode,
    support_cap: u64,
}

impl<'a> EdgeInstanceCtx<'a> {
    fn reset_values(&self, mi: usize) -> Box<[Value]> {
        let sm = &self.maps[mi];
        match &sm.reset {
            Some(r) => r.clone(),
            None => sm
                .mapping
                .sources
                .slots()
                .iter()
                .map(|s| self.mas.eta0[*s])
                .collect(),
        }
    }

    fn outside_default(&self, mi: usize) -> Value {
        let sm = &self.maps[mi];
        match sm.outside_default {
            Some(v) => v,
            None => {
                let (_, f) = sm.mapping.target.as_ref().expect("target present");
                let init: Box<[Value]> = sm
                    .mapping
                    .sources
                    .slots()
                    .iter()
                    .map(|s| self.mas.eta0[*s])
                    .collect();
                f.apply(&init)
            }
        }
    }

    /// Initial value of a mapping's abstract variable.
    fn target_default(&self, mi: usize) -> Value {
        let sm = &self.maps[mi];
        let init_loc = self.mas.agents[self.agent].init;
        if sm.scope.contains(&init_loc) {
            let (_, f) = sm.mapping.target.as_ref().expect("target present");
            let init: Box<[Value]> = sm
                .mapping
                .sources
                .slots()
                .iter()
                .map(|s| self.mas.eta0[*s])
                .collect();
            f.apply(&init)
        } else {
            self.outside_default(mi)
        }
    }

    fn project(&self, mi: usize, c: &[Value]) -> Box<[Value]> {
        self.source_pos[mi].iter().map(|p| c[*p]).collect()
    }
}

/// Per-slot literal assignments `name := v` / `name[i] := v` for a source
/// variable set.
fn literal_assigns(
    mas: &MasGraph,
    agent: usize,
    sources: &VarSet,
    values: &[Value],
) -> Vec<RawAssign> {
    let a = &mas.agents[agent];
    let mut out = Vec::new();
    for (slot, v) in sources.slots().iter().zip(values.iter()) {
        let var = mas.vtable.slot_var(*slot);
        let info = mas.vtable.info(var);
        let bare = info
            .qualified
            .strip_prefix(&format!("{}.", a.name))
            .unwrap_or(&info.qualified)
            .to_string();
        let index = match &info.decl.domain {
            VarDomain::Scalar(_) => None,
            VarDomain::Array { index, .. } => Some(RawExpr::Int(
                i64::from(index.lo) + (*slot - info.first_slot) as i64,
            )),
        };
        out.push(RawAssign {
            target: bare,
            index,
            rhs: RawExpr::Int(i64::from(*v)),
        });
    }
    out
}

/// Tracks the possible evaluations over an edge's support while its update
/// runs; used to substitute intermediate values of abstracted variables.
struct DeltaTracker<'a> {
    mas: &'a MasGraph,
    support: VarSet,
    /// Current possible support vectors (full-length scratch evaluations).
    current: Vec<Box<[Value]>>,
}

impl<'a> DeltaTracker<'a> {
    /// Evaluations satisfying the guard whose tracked projection equals `c`.
    fn new(
        mas: &'a MasGraph,
        edge: &Edge,
        tracked: &VarSet,
        c: &[Value],
        cap: u64,
    ) -> Result<Option<Self>> {
        let table = &mas.vtable;
        let support = eval::vars_of_expr(&edge.guard, table)
            .union(&eval::vars_of_update(&edge.update, table), table)
            .union(tracked, table);
        let size = support.domain_size(table);
        if size > u128::from(cap) {
            return Err(MasgError::EnumBudget(size, cap));
        }
        let track_pos: Vec<usize> = tracked
            .slots()
            .iter()
            .map(|s| {
                support
                    .slots()
                    .iter()
                    .position(|t| t == s)
                    .expect("tracked variables are in the support")
            })
            .collect();
        let mut current = Vec::new();
        for vec in support.enumerate(table) {
            if track_pos.iter().zip(c.iter()).any(|(p, v)| vec[*p] != *v) {
                continue;
            }
            let mut scratch = table.defaults();
            for (slot, v) in support.slots().iter().zip(vec.iter()) {
                scratch[*slot] = *v;
            }
            match eval::eval_guard(&edge.guard, &scratch, table) {
                Ok(true) => current.push(scratch),
                _ => continue,
            }
        }
        if current.is_empty() {
            return Ok(None);
        }
        Ok(Some(DeltaTracker {
            mas,
            support,
            current,
        }))
    }

    /// Possible value vectors of `vars` right now.
    fn values_of(&self, vars: &VarSet) -> BTreeSet<Box<[Value]>> {
        self.current.iter().map(|full| vars.project(full)).collect()
    }

    /// Advances past one original update atom; evaluations on which the atom
    /// errors are discarded.
    fn step(&mut self, atom: &crate::ast::Assign) {
        let table = &self.mas.vtable;
        let mut next: Vec<Box<[Value]>> = Vec::with_capacity(self.current.len());
        for full in &self.current {
            let mut out = full.clone();
            if eval::apply_assign(atom, &mut out, table).is_ok() {
                next.push(out);
            }
        }
        next.sort();
        next.dedup();
        self.current = next;
        let _ = &self.support;
    }
}

/// All transformed instances of one edge. Returns raw edges plus the
/// support issues discovered.
#[allow(clippy::too_many_arguments)]
fn transform_edge(
    ctx: &EdgeInstanceCtx,
    edge: &Edge,
    d: &NarrowedDomain,
    issues: &mut Vec<SupportIssue>,
) -> Result<Vec<RawEdge>> {
    let mas = ctx.mas;
    let table = &mas.vtable;
    let agent = &mas.agents[ctx.agent];
    let agent_name = agent.name.clone();

    // which mappings act on this edge, and in which role
    let mut any_active = false;
    let mut src_in = vec![false; ctx.maps.len()];
    let mut dst_in = vec![false; ctx.maps.len()];
    for (mi, sm) in ctx.maps.iter().enumerate() {
        let g = ctx.global[mi];
        src_in[mi] = g || sm.scope.contains(&edge.src);
        dst_in[mi] = g || sm.scope.contains(&edge.dst);
        any_active |= src_in[mi] || dst_in[mi];
    }
    if !any_active {
        return Ok(vec![edge_to_raw(mas, ctx.agent, edge)]);
    }

    // variables substituted in the guard: sources of global mappings and of
    // scoped mappings whose source endpoint lies in scope
    let mut subst_sets: Vec<usize> = Vec::new();
    for (mi, _) in ctx.maps.iter().enumerate() {
        if ctx.global[mi] || src_in[mi] {
            subst_sets.push(mi);
        }
    }

    // does the edge read any abstracted variable at all?
    let mut reads = BTreeSet::new();
    edge.guard.collect_vars(&mut reads);
    edge.update.collect_reads(&mut reads);
    let edge_reads_sources = ctx
        .all_sources
        .vars()
        .iter()
        .any(|v| reads.contains(v));

    let candidates: BTreeSet<Box<[Value]>> = d.table[edge.src.0 as usize]
        .iter()
        .map(|v| {
            // narrowed domain may track a superset of this agent's sources
            let pos: Vec<usize> = ctx
                .all_sources
                .slots()
                .iter()
                .map(|s| {
                    d.vars
                        .slots()
                        .iter()
                        .position(|t| t == s)
                        .expect("agent sources are tracked by the domain")
                })
                .collect();
            pos.iter().map(|p| v[*p]).collect()
        })
        .collect();

    let mut out: Vec<(String, RawEdge)> = Vec::new();
    for c in &candidates {
        // guard: substitute, then pin consistency
        let mut subst_vars: Vec<VarId> = Vec::new();
        for mi in &subst_sets {
            subst_vars.extend_from_slice(ctx.maps[*mi].mapping.sources.vars());
        }
        let subst_set = VarSet::from_iter(subst_vars, table);
        let subst_vals: Box<[Value]> = subst_set
            .slots()
            .iter()
            .map(|s| {
                let p = ctx
                    .all_sources
                    .slots()
                    .iter()
                    .position(|t| t == s)
                    .expect("substituted variables are sources");
                c[p]
            })
            .collect();
        let guard = eval::substitute(&edge.guard, &subst_set, &subst_vals, table);
        if guard.is_false() {
            continue;
        }
        let mut pins: Vec<RawExpr> = Vec::new();
        for (mi, sm) in ctx.maps.iter().enumerate() {
            let cm = ctx.project(mi, c);
            if let Some((decl, f)) = &sm.mapping.target {
                if src_in[mi] {
                    // the abstract variable currently tracks f of the value
                    // this instance assumes
                    pins.push(RawExpr::Cmp(
                        crate::ast::CmpOp::Eq,
                        Box::new(RawExpr::Ident(decl.name.clone())),
                        Box::new(RawExpr::Int(i64::from(f.apply(&cm)))),
                    ));
                }
            }
            if dst_in[mi] && !src_in[mi] && !ctx.global[mi] {
                // entering the scope: the sources are still concrete, so the
                // instance applies exactly at states matching its assumption
                for (slot, v) in sm.mapping.sources.slots().iter().zip(cm.iter()) {
                    let var = table.slot_var(*slot);
                    let info = table.info(var);
                    let bare = info
                        .qualified
                        .strip_prefix(&format!("{agent_name}."))
                        .unwrap_or(&info.qualified)
                        .to_string();
                    let lhs = match &info.decl.domain {
                        VarDomain::Scalar(_) => RawExpr::Ident(bare),
                        VarDomain::Array { index, .. } => RawExpr::Index(
                            bare,
                            Box::new(RawExpr::Int(
                                i64::from(index.lo) + (*slot - info.first_slot) as i64,
                            )),
                        ),
                    };
                    pins.push(RawExpr::Cmp(
                        crate::ast::CmpOp::Eq,
                        Box::new(lhs),
                        Box::new(RawExpr::Int(i64::from(*v))),
                    ));
                }
            }
        }

        // track update effects over the support restricted to this instance
        let tracked = &ctx.all_sources;
        let delta = DeltaTracker::new(mas, edge, tracked, c, ctx.support_cap)?;
        let mut delta = match delta {
            Some(d) => d,
            None => continue, // no evaluation matches: instance unsatisfiable
        };

        // prepends for mappings whose source endpoint is in scope
        let mut prefix: Vec<RawAssign> = Vec::new();
        for (mi, sm) in ctx.maps.iter().enumerate() {
            if ctx.global[mi] || !src_in[mi] {
                continue;
            }
            let cm = ctx.project(mi, c);
            prefix.extend(literal_assigns(mas, ctx.agent, &sm.mapping.sources, &cm));
            if let Some((decl, _)) = &sm.mapping.target {
                prefix.push(RawAssign {
                    target: decl.name.clone(),
                    index: None,
                    rhs: RawExpr::Int(i64::from(ctx.outside_default(mi))),
                });
            }
        }

        // the core: original atoms, transformed
        // each entry is the set of alternatives for one emitted atom
        let mut alt_sets: Vec<Vec<RawAssign>> = Vec::new();
        let mut expansion_flagged = false;
        for atom in &edge.update.0 {
            let wvar = atom.target.var;
            let owning_global = ctx
                .maps
                .iter()
                .enumerate()
                .find(|(mi, sm)| ctx.global[*mi] && sm.mapping.sources.contains(wvar))
                .map(|(mi, _)| mi);
            if let Some(mi) = owning_global {
                // write to a globally removed/merged variable
                delta.step(atom);
                if let Some((decl, f)) = &ctx.maps[mi].mapping.target {
                    let post = delta.values_of(&ctx.maps[mi].mapping.sources);
                    let alts: BTreeSet<RawAssignKey> = post
                        .iter()
                        .map(|vals| {
                            RawAssignKey(RawAssign {
                                target: decl.name.clone(),
                                index: None,
                                rhs: RawExpr::Int(i64::from(f.apply(vals))),
                            })
                        })
                        .collect();
                    if alts.len() > 1 {
                        expansion_flagged = true;
                    }
                    alt_sets.push(alts.into_iter().map(|k| k.0).collect());
                }
                // pure removal: the atom is dropped
                continue;
            }
            // kept atom: substitute the globally removed variables it reads
            let mut global_sources: Vec<VarId> = Vec::new();
            for (mi, sm) in ctx.maps.iter().enumerate() {
                if ctx.global[mi] {
                    global_sources.extend_from_slice(sm.mapping.sources.vars());
                }
            }
            let gset = VarSet::from_iter(global_sources, table);
            let pre_vals = delta.values_of(&gset);
            let alts: BTreeSet<RawAssignKey> = pre_vals
                .iter()
                .map(|vals| {
                    let index = atom
                        .index
                        .as_ref()
                        .map(|ix| eval::substitute(ix, &gset, vals, table));
                    let rhs = eval::substitute(&atom.rhs, &gset, vals, table);
                    let info = table.info(atom.target.var);
                    let bare = info
                        .qualified
                        .strip_prefix(&format!("{agent_name}."))
                        .unwrap_or(&info.qualified)
                        .to_string();
                    RawAssignKey(RawAssign {
                        target: bare,
                        index: index.map(|e| expr_to_raw(&e, table, Some(&agent_name))),
                        rhs: expr_to_raw(&rhs, table, Some(&agent_name)),
                    })
                })
                .collect();
            if alts.len() > 1 {
                expansion_flagged = true;
            }
            alt_sets.push(alts.into_iter().map(|k| k.0).collect());
            delta.step(atom);
        }

        // appends for mappings whose target endpoint is in scope
        let mut suffix_alts: Vec<Vec<RawAssign>> = Vec::new();
        let mut suffix_fixed: Vec<RawAssign> = Vec::new();
        for (mi, sm) in ctx.maps.iter().enumerate() {
            if ctx.global[mi] || !dst_in[mi] {
                continue;
            }
            if let Some((decl, f)) = &sm.mapping.target {
                let post = delta.values_of(&sm.mapping.sources);
                let alts: BTreeSet<RawAssignKey> = post
                    .iter()
                    .map(|vals| {
                        RawAssignKey(RawAssign {
                            target: decl.name.clone(),
                            index: None,
                            rhs: RawExpr::Int(i64::from(f.apply(vals))),
                        })
                    })
                    .collect();
                if alts.len() > 1 {
                    expansion_flagged = true;
                }
                suffix_alts.push(alts.into_iter().map(|k| k.0).collect());
            }
            let reset = ctx.reset_values(mi);
            suffix_fixed.extend(literal_assigns(mas, ctx.agent, &sm.mapping.sources, &reset));
        }

        if expansion_flagged && ctx.mode == AbstractionMode::Must {
            issues.push(SupportIssue {
                agent: agent_name.clone(),
                kind: SupportIssueKind::ContextDependentUpdate,
                detail: format!(
                    "edge {} -> {}: an update reads abstracted state with several possible values",
                    agent.loc_name(edge.src),
                    agent.loc_name(edge.dst)
                ),
            });
        }

        // cartesian product over the alternative sets
        let mut sequences: Vec<Vec<RawAssign>> = vec![prefix.clone()];
        for alts in alt_sets.iter().chain(suffix_alts.iter()) {
            let mut next = Vec::with_capacity(sequences.len() * alts.len());
            for seq in &sequences {
                for alt in alts {
                    let mut s = seq.clone();
                    s.push(alt.clone());
                    next.push(s);
                }
            }
            sequences = next;
        }
        for seq in &mut sequences {
            seq.extend(suffix_fixed.iter().cloned());
        }

        let mut guard_raw: Option<RawExpr> = if guard.is_true() {
            None
        } else {
            Some(expr_to_raw(&guard, table, Some(&agent_name)))
        };
        for pin in pins {
            guard_raw = Some(match guard_raw {
                None => pin,
                Some(g) => RawExpr::And(Box::new(g), Box::new(pin)),
            });
        }

        for seq in sequences {
            let raw = RawEdge {
                src: agent.loc_name(edge.src).to_string(),
                dst: agent.loc_name(edge.dst).to_string(),
                guard: guard_raw.clone(),
                sync: edge
                    .sync
                    .map(|s| (mas.channels[s.chan as usize].clone(), s.dir)),
                updates: seq,
                selects: Vec::new(),
                line: 0,
            };
            let key = raw_edge_key(&raw);
            out.push((key, raw));
        }
    }

    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0);
    if ctx.mode == AbstractionMode::Must && out.len() > 1 && edge_reads_sources {
        issues.push(SupportIssue {
            agent: agent_name.clone(),
            kind: SupportIssueKind::ContextDependentEdge,
            detail: format!(
                "edge {} -> {} expands into {} instances while reading abstracted variables",
                agent.loc_name(edge.src),
                agent.loc_name(edge.dst),
                out.len()
            ),
        });
    }
    // an edge whose guard depends on abstracted variables may be weaker in
    // some instances than the concrete guard at unmatched contexts
    if ctx.mode == AbstractionMode::Must && candidates.len() > 1 {
        let mut gvars = BTreeSet::new();
        edge.guard.collect_vars(&mut gvars);
        if ctx.all_sources.vars().iter().any(|v| gvars.contains(v)) {
            issues.push(SupportIssue {
                agent: agent_name.clone(),
                kind: SupportIssueKind::ContextDependentEdge,
                detail: format!(
                    "edge {} -> {} is guarded by abstracted variables with several possible values",
                    agent.loc_name(edge.src),
                    agent.loc_name(edge.dst)
                ),
            });
        }
    }
    Ok(out.into_iter().map(|(_, e)| e).collect())
}

/// Wrapper ordering raw assigns by their printed form.
struct RawAssignKey(RawAssign);

impl PartialEq for RawAssignKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key() == other.cmp_key()
    }
}
impl Eq for RawAssignKey {}
impl PartialOrd for RawAssignKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for RawAssignKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cmp_key().cmp(&other.cmp_key())
    }
}
impl RawAssignKey {
    fn cmp_key(&self) -> (String, String, String) {
        (
            self.0.target.clone(),
            self.0
                .index
                .as_ref()
                .map(raw_expr_to_string)
                .unwrap_or_default(),
            raw_expr_to_string(&self.0.rhs),
        )
    }
}

fn raw_edge_key(e: &RawEdge) -> String {
    let guard = e.guard.as_ref().map(raw_expr_to_string).unwrap_or_default();
    let sync = e
        .sync
        .as_ref()
        .map(|(c, d)| format!("{c}{d:?}"))
        .unwrap_or_default();
    let upd = e
        .updates
        .iter()
        .map(|a| {
            format!(
                "{}[{}]:={}",
                a.target,
                a.index.as_ref().map(raw_expr_to_string).unwrap_or_default(),
                raw_expr_to_string(&a.rhs)
            )
        })
        .collect::<Vec<_>>()
        .join(";");
    format!("{}>{}|{guard}|{sync}|{upd}", e.src, e.dst)
}

/// Transforms one agent under its mappings.
fn transform_agent(
    mas: &MasGraph,
    agent: usize,
    maps: &[ScopedMapping],
    d: &NarrowedDomain,
    mode: AbstractionMode,
    support_cap: u64,
    issues: &mut Vec<SupportIssue>,
) -> Result<RawAgent> {
    let a = &mas.agents[agent];
    let global: Vec<bool> = maps.iter().map(|m| m.is_global(mas)).collect();
    let mut all_sources: Vec<VarId> = Vec::new();
    for m in maps {
        all_sources.extend_from_slice(m.mapping.sources.vars());
    }
    let all_sources = VarSet::from_iter(all_sources, &mas.vtable);
    let source_pos = maps
        .iter()
        .map(|m| {
            m.mapping
                .sources
                .slots()
                .iter()
                .map(|s| {
                    all_sources
                        .slots()
                        .iter()
                        .position(|t| t == s)
                        .expect("sources are within the union")
                })
                .collect()
        })
        .collect();
    let ctx = EdgeInstanceCtx {
        mas,
        agent,
        maps,
        global,
        all_sources,
        source_pos,
        mode,
        support_cap,
    };

    let mut edges = Vec::new();
    for e in &a.edges {
        edges.extend(transform_edge(&ctx, e, d, issues)?);
    }

    // declarations: drop globally removed sources, add abstract targets
    let removed: BTreeSet<VarId> = maps
        .iter()
        .enumerate()
        .filter(|(mi, _)| ctx.global[*mi])
        .flat_map(|(_, m)| m.mapping.sources.vars().iter().copied())
        .collect();
    let mut vars: Vec<RawVarDecl> = a
        .local_vars
        .iter()
        .filter(|v| !removed.contains(v))
        .map(|v| decl_to_raw(&mas.vtable.info(*v).decl))
        .collect();
    for (mi, sm) in maps.iter().enumerate() {
        if let Some((decl, _)) = &sm.mapping.target {
            let mut raw = decl_to_raw(decl);
            raw.default = vec![i64::from(ctx.target_default(mi))];
            vars.push(raw);
        }
    }

    Ok(RawAgent {
        name: a.name.clone(),
        vars,
        locations: a.locations.clone(),
        init: a.loc_name(a.init).to_string(),
        edges,
    })
}

/// Removes the named local variables of one agent, using a previously
/// computed narrowed domain.
pub fn remove_variables(
    mas: &MasGraph,
    agent: usize,
    vars: &[&str],
    d: &NarrowedDomain,
    mode: AbstractionMode,
) -> Result<Abstracted> {
    let maps = removal_maps(mas, agent, vars)?;
    apply_per_agent(mas, agent, &maps, d, mode)
}

/// Merges variables of one agent through the given mappings.
pub fn merge_variables(
    mas: &MasGraph,
    agent: usize,
    maps: Vec<Mapping>,
    d: &NarrowedDomain,
    mode: AbstractionMode,
) -> Result<Abstracted> {
    let maps: Vec<ScopedMapping> = maps
        .into_iter()
        .map(|m| ScopedMapping::global(m, mas))
        .collect();
    apply_per_agent(mas, agent, &maps, d, mode)
}

/// Applies scope-restricted mappings to one agent.
pub fn scoped_abstraction(
    mas: &MasGraph,
    agent: usize,
    maps: &[ScopedMapping],
    d: &NarrowedDomain,
    mode: AbstractionMode,
) -> Result<Abstracted> {
    apply_per_agent(mas, agent, maps, d, mode)
}

pub fn removal_maps(mas: &MasGraph, agent: usize, vars: &[&str]) -> Result<Vec<ScopedMapping>> {
    let mut ids = Vec::new();
    for v in vars {
        let q = format!("{}.{}", mas.agents[agent].name, v);
        let id = mas
            .vtable
            .lookup(&q)
            .or_else(|| mas.vtable.lookup(v))
            .ok_or_else(|| MasgError::Undeclared((*v).to_string()))?;
        ids.push(id);
    }
    Ok(vec![ScopedMapping::global(
        Mapping {
            owner: agent,
            sources: VarSet::from_iter(ids, &mas.vtable),
            target: None,
        },
        mas,
    )])
}

fn apply_per_agent(
    mas: &MasGraph,
    agent: usize,
    maps: &[ScopedMapping],
    d: &NarrowedDomain,
    mode: AbstractionMode,
) -> Result<Abstracted> {
    validate_maps(mas, maps)?;
    let mut issues = Vec::new();
    if matches!(d.status, DomainStatus::LowerUnverified { .. }) {
        issues.push(SupportIssue {
            agent: mas.agents[agent].name.clone(),
            kind: SupportIssueKind::UnverifiedLowerDomain,
            detail: format!("{:?}", d.status),
        });
    }
    let raw_agent = transform_agent(
        mas,
        agent,
        maps,
        d,
        mode,
        DomainOptions::default().support_cap,
        &mut issues,
    )?;
    let mut agents = Vec::new();
    for (i, _) in mas.agents.iter().enumerate() {
        if i == agent {
            agents.push(raw_agent.clone());
        } else {
            agents.push(agent_to_raw(mas, i));
        }
    }
    let raw = RawSystem {
        shared: mas
            .shared_vars
            .iter()
            .map(|v| decl_to_raw(&mas.vtable.info(*v).decl))
            .collect(),
        channels: mas.channels.clone(),
        g0: mas
            .g0_extra
            .as_ref()
            .map(|g| expr_to_raw(g, &mas.vtable, None)),
        agents,
    };
    let out = crate::resolve::resolve(raw)?;
    Ok(Abstracted {
        mas: out,
        issues,
        domain_status: d.status.clone(),
    })
}

/// Full pipeline: computes the domain for the union of all mapped variables
/// on the (reachable) combined graph, narrows it per agent, and transforms
/// every agent owning a mapping. Untouched agents are copied.
pub fn abstract_mas(
    mas: &MasGraph,
    maps: &[ScopedMapping],
    mode: AbstractionMode,
    opts: &AbstractOptions,
) -> Result<Abstracted> {
    if maps.is_empty() {
        return Ok(Abstracted {
            mas: mas.clone(),
            issues: Vec::new(),
            domain_status: DomainStatus::UpperSound,
        });
    }
    validate_maps(mas, maps)?;

    // drop empty-scope mappings: they change nothing
    let maps: Vec<ScopedMapping> = maps
        .iter()
        .filter(|m| {
            if m.scope.is_empty() {
                log::warn!("mapping with empty scope ignored");
                false
            } else {
                true
            }
        })
        .cloned()
        .collect();
    if maps.is_empty() {
        return Ok(Abstracted {
            mas: mas.clone(),
            issues: Vec::new(),
            domain_status: DomainStatus::UpperSound,
        });
    }

    let mut all_sources: Vec<VarId> = Vec::new();
    for m in &maps {
        all_sources.extend_from_slice(m.mapping.sources.vars());
    }
    let all_sources = VarSet::from_iter(all_sources, &mas.vtable);
    if let Some(g) = &mas.g0_extra {
        let gv = eval::vars_of_expr(g, &mas.vtable);
        if gv.vars().iter().any(|v| all_sources.contains(*v)) {
            return Err(MasgError::Abstraction(
                "the explicit initial condition mentions an abstracted variable".into(),
            ));
        }
    }

    let mut owners: Vec<usize> = maps.iter().map(|m| m.mapping.owner).collect();
    owners.sort_unstable();
    owners.dedup();

    let mut issues = Vec::new();
    let mut per_owner_domain: BTreeMap<usize, NarrowedDomain> = BTreeMap::new();
    let mut status = match mode {
        AbstractionMode::May => DomainStatus::UpperSound,
        AbstractionMode::Must => DomainStatus::LowerVerified,
    };
    if opts.use_template {
        for owner in &owners {
            let nd = template_domain(
                mas,
                *owner,
                &all_sources,
                mode.domain_mode(),
                &opts.domain,
            )?;
            if matches!(nd.status, DomainStatus::LowerUnverified { .. }) {
                status = nd.status.clone();
            }
            per_owner_domain.insert(*owner, nd);
        }
    } else {
        let combined = combine_reachable(mas)?;
        let d = approx_local_domain(&combined, &all_sources, mode.domain_mode(), &opts.domain)?;
        status = d.status.clone();
        for owner in &owners {
            per_owner_domain.insert(*owner, narrow(&d, &combined, *owner));
        }
    }
    if let DomainStatus::LowerUnverified { reason } = &status {
        issues.push(SupportIssue {
            agent: "<system>".into(),
            kind: SupportIssueKind::UnverifiedLowerDomain,
            detail: reason.clone(),
        });
    }

    let mut raw_agents = Vec::new();
    for (i, _) in mas.agents.iter().enumerate() {
        if owners.contains(&i) {
            let agent_maps: Vec<ScopedMapping> = maps
                .iter()
                .filter(|m| m.mapping.owner == i)
                .cloned()
                .collect();
            raw_agents.push(transform_agent(
                mas,
                i,
                &agent_maps,
                &per_owner_domain[&i],
                mode,
                opts.domain.support_cap,
                &mut issues,
            )?);
        } else {
            raw_agents.push(agent_to_raw(mas, i));
        }
    }
    let raw = RawSystem {
        shared: mas
            .shared_vars
            .iter()
            .map(|v| decl_to_raw(&mas.vtable.info(*v).decl))
            .collect(),
        channels: mas.channels.clone(),
        g0: mas
            .g0_extra
            .as_ref()
            .map(|g| expr_to_raw(g, &mas.vtable, None)),
        agents: raw_agents,
    };
    let out = crate::resolve::resolve(raw)?;
    Ok(Abstracted {
        mas: out,
        issues,
        domain_status: status,
    })
}
