//! Turns a raw system into a validated [`MasGraph`]: name resolution with
//! agent-local scoping, select-binder expansion, static type checking, and
//! initial-evaluation validation.

use std::collections::BTreeSet;

use crate::ast::{
    AgentGraph, Assign, Edge, Expr, IntRange, LocId, MasGraph, Sync, Update, Value, VarDecl,
    VarDomain, VarId, VarRef, VarSet, VarTable,
};
use crate::error::{MasgError, Result};
use crate::eval::{self, sat};
use crate::raw::{RawAgent, RawDomain, RawEdge, RawExpr, RawSystem, RawVarDecl};

const G0_ENUM_CAP: u64 = 1_000_000;

fn int32(v: i64, what: &str) -> Result<i32> {
    i32::try_from(v)
        .map_err(|_| MasgError::Validation(format!("{what}: value {v} does not fit in 32 bits")))
}

fn convert_decl(raw: &RawVarDecl, shared: bool) -> Result<VarDecl> {
    let domain = match raw.domain {
        RawDomain::Scalar { lo, hi } => VarDomain::Scalar(IntRange::new(
            int32(lo, &raw.name)?,
            int32(hi, &raw.name)?,
        )),
        RawDomain::Array { ilo, ihi, lo, hi } => VarDomain::Array {
            index: IntRange::new(int32(ilo, &raw.name)?, int32(ihi, &raw.name)?),
            cell: IntRange::new(int32(lo, &raw.name)?, int32(hi, &raw.name)?),
        },
    };
    let cells = domain.cell_count();
    let mut default: Vec<Value> = raw
        .default
        .iter()
        .map(|v| int32(*v, &raw.name))
        .collect::<Result<_>>()?;
    if default.len() == 1 && cells > 1 {
        default = vec![default[0]; cells];
    }
    if let (VarDomain::Scalar(r), true) = (&domain, r_empty(&domain)) {
        let _ = r; // unreachable; emptiness is caught by VarDecl::validate
    }
    Ok(VarDecl {
        name: raw.name.clone(),
        domain,
        default,
        shared,
    })
}

fn r_empty(d: &VarDomain) -> bool {
    d.cell_range().is_empty()
}

/// Name scope used when resolving expressions.
pub(crate) enum Scope<'a> {
    /// Inside an agent body: bare names mean the agent's local first, then a
    /// shared variable.
    Agent { agent: &'a str },
    /// System-level (g0, formulas, configs): qualified names or bare names
    /// that are unique across the system.
    Global,
}

pub(crate) fn resolve_var(table: &VarTable, scope: &Scope, name: &str) -> Result<VarId> {
    match scope {
        Scope::Agent { agent } => {
            if name.contains('.') {
                return table
                    .lookup(name)
                    .ok_or_else(|| MasgError::Undeclared(name.to_string()));
            }
            let local = format!("{agent}.{name}");
            if let Some(id) = table.lookup(&local) {
                return Ok(id);
            }
            table
                .lookup(name)
                .ok_or_else(|| MasgError::Undeclared(name.to_string()))
        }
        Scope::Global => table.resolve_name(name),
    }
}

pub(crate) fn resolve_expr(table: &VarTable, scope: &Scope, raw: &RawExpr) -> Result<Expr> {
    Ok(match raw {
        RawExpr::Int(v) => Expr::Int(*v),
        RawExpr::Bool(b) => Expr::Bool(*b),
        RawExpr::Ident(name) => {
            let id = resolve_var(table, scope, name)?;
            let info = table.info(id);
            if matches!(info.decl.domain, VarDomain::Array { .. }) {
                return Err(MasgError::Type(format!(
                    "array `{}` used without an index",
                    info.qualified
                )));
            }
            Expr::Var(VarRef {
                var: id,
                slot: info.first_slot,
            })
        }
        RawExpr::Index(name, ix) => {
            let id = resolve_var(table, scope, name)?;
            let info = table.info(id);
            if !matches!(info.decl.domain, VarDomain::Array { .. }) {
                return Err(MasgError::Type(format!(
                    "`{}` is not an array",
                    info.qualified
                )));
            }
            let ix = resolve_expr(table, scope, ix)?;
            expect_int(&ix, table)?;
            Expr::Cell(
                VarRef {
                    var: id,
                    slot: info.first_slot,
                },
                Box::new(ix),
            )
        }
        RawExpr::ArrayCmp {
            name,
            negated,
            values,
        } => {
            let id = resolve_var(table, scope, name)?;
            let info = table.info(id).clone();
            let index = match info.decl.domain.index_range() {
                Some(r) => r,
                None => {
                    return Err(MasgError::Type(format!(
                        "`{}` is not an array; vector comparison needs an array",
                        info.qualified
                    )))
                }
            };
            if values.len() != info.decl.domain.cell_count() {
                return Err(MasgError::Type(format!(
                    "vector literal has {} entries but `{}` has {} cells",
                    values.len(),
                    info.qualified,
                    info.decl.domain.cell_count()
                )));
            }
            let mut conj = Expr::TRUE;
            for (k, v) in values.iter().enumerate() {
                let ix = i64::from(index.lo) + k as i64;
                conj = Expr::and(
                    conj,
                    Expr::eq_int(
                        Expr::Cell(
                            VarRef {
                                var: id,
                                slot: info.first_slot,
                            },
                            Box::new(Expr::Int(ix)),
                        ),
                        *v,
                    ),
                );
            }
            if *negated {
                Expr::Not(Box::new(conj))
            } else {
                conj
            }
        }
        RawExpr::Neg(a) => {
            let a = resolve_expr(table, scope, a)?;
            expect_int(&a, table)?;
            Expr::Neg(Box::new(a))
        }
        RawExpr::Arith(op, a, b) => {
            let a = resolve_expr(table, scope, a)?;
            let b = resolve_expr(table, scope, b)?;
            expect_int(&a, table)?;
            expect_int(&b, table)?;
            Expr::Arith(*op, Box::new(a), Box::new(b))
        }
        RawExpr::Cmp(op, a, b) => {
            let a = resolve_expr(table, scope, a)?;
            let b = resolve_expr(table, scope, b)?;
            expect_int(&a, table)?;
            expect_int(&b, table)?;
            Expr::Cmp(*op, Box::new(a), Box::new(b))
        }
        RawExpr::Not(a) => {
            let a = resolve_expr(table, scope, a)?;
            expect_bool(&a, table)?;
            Expr::Not(Box::new(a))
        }
        RawExpr::And(a, b) => {
            let a = resolve_expr(table, scope, a)?;
            let b = resolve_expr(table, scope, b)?;
            expect_bool(&a, table)?;
            expect_bool(&b, table)?;
            Expr::And(Box::new(a), Box::new(b))
        }
        RawExpr::Or(a, b) => {
            let a = resolve_expr(table, scope, a)?;
            let b = resolve_expr(table, scope, b)?;
            expect_bool(&a, table)?;
            expect_bool(&b, table)?;
            Expr::Or(Box::new(a), Box::new(b))
        }
    })
}

#[derive(PartialEq, Eq, Debug, Clone, Copy)]
pub(crate) enum ExprType {
    Int,
    Bool,
}

pub(crate) fn type_of(e: &Expr) -> ExprType {
    match e {
        Expr::Int(_) | Expr::Var(_) | Expr::Cell(..) | Expr::Neg(_) | Expr::Arith(..) => {
            ExprType::Int
        }
        Expr::Bool(_) | Expr::Cmp(..) | Expr::Not(_) | Expr::And(..) | Expr::Or(..) => {
            ExprType::Bool
        }
    }
}

fn expect_int(e: &Expr, _table: &VarTable) -> Result<()> {
    if type_of(e) != ExprType::Int {
        return Err(MasgError::Type(
            "expected an integer expression, found a boolean".into(),
        ));
    }
    Ok(())
}

fn expect_bool(e: &Expr, _table: &VarTable) -> Result<()> {
    if type_of(e) != ExprType::Bool {
        return Err(MasgError::Type(
            "expected a boolean expression, found an integer".into(),
        ));
    }
    Ok(())
}

/// Expands an edge's select binders into plain edge copies. Binders must not
/// shadow any declared variable and are only visible in this edge.
fn expand_selects(edge: &RawEdge, declared: &BTreeSet<String>) -> Result<Vec<RawEdge>> {
    if edge.selects.is_empty() {
        return Ok(vec![edge.clone()]);
    }
    let mut binder_names = BTreeSet::new();
    for (name, lo, hi) in &edge.selects {
        if declared.contains(name) {
            return Err(MasgError::Validation(format!(
                "select binder `{name}` shadows a declared variable"
            )));
        }
        if !binder_names.insert(name.clone()) {
            return Err(MasgError::Duplicate(format!("select binder `{name}`")));
        }
        if lo > hi {
            return Err(MasgError::Validation(format!(
                "select binder `{name}` has empty range {lo}..{hi}"
            )));
        }
    }
    let mut expanded = vec![RawEdge {
        selects: Vec::new(),
        ..edge.clone()
    }];
    for (name, lo, hi) in &edge.selects {
        let mut next = Vec::with_capacity(expanded.len() * (hi - lo + 1) as usize);
        for e in &expanded {
            for v in *lo..=*hi {
                next.push(RawEdge {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    guard: e.guard.as_ref().map(|g| g.bind(name, v)),
                    sync: e.sync.clone(),
                    updates: e.updates.iter().map(|u| u.bind(name, v)).collect(),
                    selects: Vec::new(),
                    line: e.line,
                });
            }
        }
        expanded = next;
    }
    Ok(expanded)
}

fn resolve_agent(
    table: &VarTable,
    channels: &[String],
    raw: &RawAgent,
    agent_index: usize,
    declared: &BTreeSet<String>,
) -> Result<AgentGraph> {
    let mut locations = Vec::new();
    let mut seen = BTreeSet::new();
    for l in &raw.locations {
        if !seen.insert(l.clone()) {
            return Err(MasgError::Duplicate(format!(
                "location `{l}` in agent `{}`",
                raw.name
            )));
        }
        locations.push(l.clone());
    }
    if locations.is_empty() {
        return Err(MasgError::Validation(format!(
            "agent `{}` declares no locations",
            raw.name
        )));
    }
    let init = locations
        .iter()
        .position(|l| *l == raw.init)
        .map(|i| LocId(i as u32))
        .ok_or_else(|| {
            MasgError::Validation(format!(
                "initial location `{}` of agent `{}` is not declared",
                raw.init, raw.name
            ))
        })?;

    let scope = Scope::Agent { agent: &raw.name };
    let mut edges = Vec::new();
    for raw_edge in &raw.edges {
        for e in expand_selects(raw_edge, declared)? {
            let src = locations
                .iter()
                .position(|l| *l == e.src)
                .ok_or_else(|| MasgError::Undeclared(format!("location `{}`", e.src)))?;
            let dst = locations
                .iter()
                .position(|l| *l == e.dst)
                .ok_or_else(|| MasgError::Undeclared(format!("location `{}`", e.dst)))?;
            let guard = match &e.guard {
                None => Expr::TRUE,
                Some(g) => {
                    let g = resolve_expr(table, &scope, g)?;
                    expect_bool(&g, table)?;
                    g
                }
            };
            let sync = match &e.sync {
                None => None,
                Some((chan, dir)) => {
                    let idx = channels
                        .iter()
                        .position(|c| c == chan)
                        .ok_or_else(|| MasgError::Undeclared(format!("channel `{chan}`")))?;
                    Some(Sync {
                        chan: idx as u32,
                        dir: *dir,
                    })
                }
            };
            let mut update = Update::default();
            for u in &e.updates {
                let id = resolve_var(table, &scope, &u.target)?;
                let info = table.info(id);
                let is_array = matches!(info.decl.domain, VarDomain::Array { .. });
                if is_array != u.index.is_some() {
                    return Err(MasgError::Type(if is_array {
                        format!("array `{}` assigned without an index", info.qualified)
                    } else {
                        format!("`{}` is not an array", info.qualified)
                    }));
                }
                let index = match &u.index {
                    None => None,
                    Some(ix) => {
                        let ix = resolve_expr(table, &scope, ix)?;
                        expect_int(&ix, table)?;
                        Some(ix)
                    }
                };
                let rhs = resolve_expr(table, &scope, &u.rhs)?;
                expect_int(&rhs, table)?;
                update.0.push(Assign {
                    target: VarRef {
                        var: id,
                        slot: info.first_slot,
                    },
                    index,
                    rhs,
                });
            }
            edges.push(Edge {
                src: LocId(src as u32),
                dst: LocId(dst as u32),
                guard,
                sync,
                update,
            });
        }
    }

    let local_vars = table
        .iter()
        .filter(|(_, info)| info.owner == Some(agent_index))
        .map(|(id, _)| id)
        .collect();

    Ok(AgentGraph {
        name: raw.name.clone(),
        locations,
        init,
        local_vars,
        edges,
    })
}

/// Resolves and validates a raw system.
pub fn resolve(raw: RawSystem) -> Result<MasGraph> {
    // agent and channel name uniqueness
    let mut agent_names = BTreeSet::new();
    for a in &raw.agents {
        if !agent_names.insert(a.name.clone()) {
            return Err(MasgError::Duplicate(format!("agent `{}`", a.name)));
        }
    }
    let mut chan_names = BTreeSet::new();
    for c in &raw.channels {
        if !chan_names.insert(c.clone()) {
            return Err(MasgError::Duplicate(format!("channel `{c}`")));
        }
    }

    // variable table: shared first (bare names), then per-agent locals
    let shared_names: BTreeSet<String> = raw.shared.iter().map(|v| v.name.clone()).collect();
    let mut decls = Vec::new();
    for v in &raw.shared {
        decls.push((convert_decl(v, true)?, v.name.clone(), None));
    }
    for (i, a) in raw.agents.iter().enumerate() {
        for v in &a.vars {
            if shared_names.contains(&v.name) {
                return Err(MasgError::Validation(format!(
                    "local variable `{}` of agent `{}` shadows a shared variable",
                    v.name, a.name
                )));
            }
            decls.push((convert_decl(v, false)?, format!("{}.{}", a.name, v.name), Some(i)));
        }
    }
    let table = VarTable::build(decls)?;

    // bare names visible inside each agent, for select-shadow checks
    let mut agents = Vec::new();
    for (i, a) in raw.agents.iter().enumerate() {
        let mut declared = shared_names.clone();
        declared.extend(a.vars.iter().map(|v| v.name.clone()));
        agents.push(resolve_agent(&table, &raw.channels, a, i, &declared)?);
    }

    let g0_extra = match &raw.g0 {
        None => None,
        Some(g) => {
            let e = resolve_expr(&table, &Scope::Global, g)?;
            expect_bool(&e, &table)?;
            Some(e)
        }
    };

    let eta0 = table.defaults();
    if let Some(g) = &g0_extra {
        // The initial evaluation is the all-defaults one; an explicit g0 must
        // pin exactly that evaluation over the variables it mentions.
        let over = eval::vars_of_expr(g, &table);
        let solutions = sat(g, &over, &table, G0_ENUM_CAP)?;
        match solutions.vectors.len() {
            0 => {
                return Err(MasgError::NonUniqueInit(
                    "g0 has no satisfying evaluation".into(),
                ))
            }
            1 => {
                let sol = &solutions.vectors[0];
                let defaults = over.project(&eta0);
                if *sol != defaults {
                    return Err(MasgError::NonUniqueInit(format!(
                        "g0 pins {:?} to {:?}, which contradicts the declared defaults {:?}",
                        over.names(&table),
                        sol,
                        defaults
                    )));
                }
            }
            n => {
                return Err(MasgError::NonUniqueInit(format!(
                    "g0 is satisfied by {n} evaluations over {:?}",
                    over.names(&table)
                )))
            }
        }
    }

    let shared_vars = table
        .iter()
        .filter(|(_, info)| info.owner.is_none())
        .map(|(id, _)| id)
        .collect();

    Ok(MasGraph {
        vtable: table,
        channels: raw.channels,
        shared_vars,
        agents,
        g0_extra,
        eta0,
    })
}

/// Convenience: the variable set of a whole agent.
pub fn agent_var_set(mas: &MasGraph, agent: usize) -> VarSet {
    VarSet::from_iter(mas.agents[agent].local_vars.iter().copied(), &mas.vtable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_mas;

    #[test]
    fn non_unique_g0_rejected() {
        let src = "
            system { var x: 0..3 = 0; g0 x == 1 || x == 2; }
            agent A { loc a; init a; }
        ";
        let err = parse_mas(src, "<t>").unwrap_err();
        assert!(matches!(err, MasgError::NonUniqueInit(_)), "{err:?}");
    }

    #[test]
    fn g0_matching_defaults_accepted() {
        let src = "
            system { var x: 0..3 = 2; g0 x == 2; }
            agent A { loc a; init a; }
        ";
        let g = parse_mas(src, "<t>").unwrap();
        assert_eq!(g.eta0.as_ref(), &[2]);
    }

    #[test]
    fn g0_contradicting_defaults_rejected() {
        let src = "
            system { var x: 0..3 = 0; g0 x == 1; }
            agent A { loc a; init a; }
        ";
        assert!(parse_mas(src, "<t>").is_err());
    }

    #[test]
    fn local_shadowing_shared_rejected() {
        let src = "
            system { var x: 0..1 = 0; }
            agent A { var x: 0..1 = 0; loc a; init a; }
        ";
        assert!(parse_mas(src, "<t>").is_err());
    }

    #[test]
    fn select_binder_shadowing_rejected() {
        let src = "
            agent A {
              var i: 0..1 = 0;
              loc a; init a;
              edge a -> a do i := j select j: 0..1
              edge a -> a do i := i select i: 0..1
            }
        ";
        assert!(parse_mas(src, "<t>").is_err());
    }

    #[test]
    fn guards_must_be_boolean() {
        let src = "
            agent A { var x: 0..1 = 0; loc a; init a; edge a -> a [x + 1] }
        ";
        assert!(matches!(
            parse_mas(src, "<t>").unwrap_err(),
            MasgError::Type(_)
        ));
    }

    #[test]
    fn undeclared_identifier_reported() {
        let src = "agent A { loc a; init a; edge a -> a [y == 0] }";
        assert!(matches!(
            parse_mas(src, "<t>").unwrap_err(),
            MasgError::Undeclared(_)
        ));
    }
}
