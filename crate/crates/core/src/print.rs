//! Printing of systems and expressions back to `.masg` text, and the
//! resolved-to-raw lowering used when rebuilding transformed systems.

use std::fmt::Write as _;

use crate::ast::{AgentGraph, Expr, MasGraph, Update, VarDomain, VarTable};
use crate::raw::{RawAssign, RawExpr};

/// Lowers a resolved expression back to the name-based form. Names are
/// chosen for the given context: locals of `agent` and shared variables
/// print bare, everything else fully qualified.
pub fn expr_to_raw(e: &Expr, table: &VarTable, agent: Option<&str>) -> RawExpr {
    let name_of = |id: crate::ast::VarId| -> String {
        let info = table.info(id);
        match agent {
            Some(a) => {
                let prefix = format!("{a}.");
                match info.qualified.strip_prefix(&prefix) {
                    Some(bare) => bare.to_string(),
                    None => info.qualified.clone(),
                }
            }
            None => info.qualified.clone(),
        }
    };
    match e {
        Expr::Int(v) => RawExpr::Int(*v),
        Expr::Bool(b) => RawExpr::Bool(*b),
        Expr::Var(r) => RawExpr::Ident(name_of(r.var)),
        Expr::Cell(r, ix) => RawExpr::Index(name_of(r.var), Box::new(expr_to_raw(ix, table, agent))),
        Expr::Neg(a) => RawExpr::Neg(Box::new(expr_to_raw(a, table, agent))),
        Expr::Arith(op, a, b) => RawExpr::Arith(
            *op,
            Box::new(expr_to_raw(a, table, agent)),
            Box::new(expr_to_raw(b, table, agent)),
        ),
        Expr::Cmp(op, a, b) => RawExpr::Cmp(
            *op,
            Box::new(expr_to_raw(a, table, agent)),
            Box::new(expr_to_raw(b, table, agent)),
        ),
        Expr::Not(a) => RawExpr::Not(Box::new(expr_to_raw(a, table, agent))),
        Expr::And(a, b) => RawExpr::And(
            Box::new(expr_to_raw(a, table, agent)),
            Box::new(expr_to_raw(b, table, agent)),
        ),
        Expr::Or(a, b) => RawExpr::Or(
            Box::new(expr_to_raw(a, table, agent)),
            Box::new(expr_to_raw(b, table, agent)),
        ),
    }
}

fn prec(e: &RawExpr) -> u8 {
    match e {
        RawExpr::Or(..) => 1,
        RawExpr::And(..) => 2,
        RawExpr::Cmp(..) | RawExpr::ArrayCmp { .. } => 3,
        RawExpr::Arith(op, ..) => match op {
            crate::ast::ArithOp::Add | crate::ast::ArithOp::Sub => 4,
            _ => 5,
        },
        RawExpr::Neg(_) | RawExpr::Not(_) => 6,
        _ => 7,
    }
}

fn write_child(out: &mut String, child: &RawExpr, min: u8) {
    if prec(child) < min {
        out.push('(');
        write_raw(out, child);
        out.push(')');
    } else {
        write_raw(out, child);
    }
}

fn write_raw(out: &mut String, e: &RawExpr) {
    match e {
        RawExpr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        RawExpr::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        RawExpr::Ident(n) => out.push_str(n),
        RawExpr::Index(n, ix) => {
            out.push_str(n);
            out.push('[');
            write_raw(out, ix);
            out.push(']');
        }
        RawExpr::ArrayCmp {
            name,
            negated,
            values,
        } => {
            let _ = write!(
                out,
                "{name} {} [{}]",
                if *negated { "!=" } else { "==" },
                values
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        RawExpr::Neg(a) => {
            out.push('-');
            write_child(out, a, 6);
        }
        RawExpr::Not(a) => {
            out.push('!');
            write_child(out, a, 6);
        }
        RawExpr::Arith(op, a, b) => {
            let p = prec(e);
            write_child(out, a, p);
            let _ = write!(out, " {} ", op.symbol());
            // right operand needs strictly higher precedence for - / %
            write_child(out, b, p + 1);
        }
        RawExpr::Cmp(op, a, b) => {
            write_child(out, a, 4);
            let _ = write!(out, " {} ", op.symbol());
            write_child(out, b, 4);
        }
        RawExpr::And(a, b) => {
            write_child(out, a, 2);
            out.push_str(" && ");
            write_child(out, b, 3);
        }
        RawExpr::Or(a, b) => {
            write_child(out, a, 1);
            out.push_str(" || ");
            write_child(out, b, 2);
        }
    }
}

pub fn raw_expr_to_string(e: &RawExpr) -> String {
    let mut s = String::new();
    write_raw(&mut s, e);
    s
}

/// Canonical textual form of an expression with fully-qualified names; used
/// as the proposition name for guard atoms.
pub fn canonical_expr(e: &Expr, table: &VarTable) -> String {
    raw_expr_to_string(&expr_to_raw(e, table, None))
}

/// Expression printed for display inside an agent context.
pub fn agent_expr(e: &Expr, table: &VarTable, agent: &str) -> String {
    raw_expr_to_string(&expr_to_raw(e, table, Some(agent)))
}

pub fn update_to_raw(u: &Update, table: &VarTable, agent: Option<&str>) -> Vec<RawAssign> {
    u.0.iter()
        .map(|a| {
            let info = table.info(a.target.var);
            let name = match agent {
                Some(ag) => {
                    let prefix = format!("{ag}.");
                    info.qualified
                        .strip_prefix(&prefix)
                        .map(|s| s.to_string())
                        .unwrap_or_else(|| info.qualified.clone())
                }
                None => info.qualified.clone(),
            };
            RawAssign {
                target: name,
                index: a.index.as_ref().map(|ix| expr_to_raw(ix, table, agent)),
                rhs: expr_to_raw(&a.rhs, table, agent),
            }
        })
        .collect()
}

pub fn update_to_string(u: &Update, table: &VarTable, agent: Option<&str>) -> String {
    update_to_raw(u, table, agent)
        .iter()
        .map(|a| {
            let ix = a
                .index
                .as_ref()
                .map(|e| format!("[{}]", raw_expr_to_string(e)))
                .unwrap_or_default();
            format!("{}{} := {}", a.target, ix, raw_expr_to_string(&a.rhs))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn write_var_decl(out: &mut String, decl: &crate::ast::VarDecl, indent: &str) {
    match &decl.domain {
        VarDomain::Scalar(r) => {
            let _ = writeln!(
                out,
                "{indent}var {}: {}..{} = {};",
                decl.name, r.lo, r.hi, decl.default[0]
            );
        }
        VarDomain::Array { index, cell } => {
            let defaults = decl
                .default
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            let _ = writeln!(
                out,
                "{indent}var {}: [{}..{}] of {}..{} = [{}];",
                decl.name, index.lo, index.hi, cell.lo, cell.hi, defaults
            );
        }
    }
}

fn write_agent(out: &mut String, mas: &MasGraph, agent: &AgentGraph) {
    let _ = writeln!(out, "agent {} {{", agent.name);
    for id in &agent.local_vars {
        write_var_decl(out, &mas.vtable.info(*id).decl, "  ");
    }
    let _ = writeln!(out, "  loc {};", agent.locations.join(", "));
    let _ = writeln!(out, "  init {};", agent.loc_name(agent.init));
    for e in &agent.edges {
        let mut line = format!(
            "  edge {} -> {}",
            agent.loc_name(e.src),
            agent.loc_name(e.dst)
        );
        if !e.guard.is_true() {
            let _ = write!(
                line,
                " [{}]",
                agent_expr(&e.guard, &mas.vtable, &agent.name)
            );
        }
        if let Some(s) = &e.sync {
            let dir = match s.dir {
                crate::ast::SyncDir::Send => "!",
                crate::ast::SyncDir::Recv => "?",
            };
            let _ = write!(line, " sync({}{})", mas.channels[s.chan as usize], dir);
        }
        if !e.update.is_identity() {
            let _ = write!(
                line,
                " do {}",
                update_to_string(&e.update, &mas.vtable, Some(&agent.name))
            );
        }
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "}}");
}

/// Prints a system as `.masg` text that parses back to an equal system.
pub fn print_mas(mas: &MasGraph) -> String {
    let mut out = String::new();
    let has_system_block =
        !mas.shared_vars.is_empty() || !mas.channels.is_empty() || mas.g0_extra.is_some();
    if has_system_block {
        out.push_str("system {\n");
        for id in &mas.shared_vars {
            write_var_decl(&mut out, &mas.vtable.info(*id).decl, "  ");
        }
        if !mas.channels.is_empty() {
            let _ = writeln!(out, "  chan {};", mas.channels.join(", "));
        }
        if let Some(g) = &mas.g0_extra {
            let _ = writeln!(out, "  g0 {};", canonical_expr(g, &mas.vtable));
        }
        out.push_str("}\n");
    }
    for agent in &mas.agents {
        write_agent(&mut out, mas, agent);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_mas;

    #[test]
    fn print_parse_round_trip() {
        let src = "
            system {
              var sh: 0..3 = 0;
              var K: [1..3] of 0..1 = [0, 0, 0];
              chan pr, rf;
            }
            agent Voter {
              var x: 0..3 = 0;
              loc idle, voted;
              init idle;
              edge idle -> voted [x == 0] do x := i select i: 1..3
              edge voted -> idle sync(pr!) do sh := x; K[x] := 1
            }
            agent Coercer {
              loc w;
              init w;
              edge w -> w sync(pr?)
            }
        ";
        let g1 = parse_mas(src, "<t>").unwrap();
        let text = print_mas(&g1);
        let g2 = parse_mas(&text, "<printed>").unwrap();
        assert_eq!(g1, g2, "printed text:\n{text}");
    }

    #[test]
    fn canonical_names_are_qualified() {
        let src = "
            system { var sh: 0..1 = 0; }
            agent A { var x: 0..1 = 0; loc a; init a; edge a -> a [x == 0 && sh == 0] }
        ";
        let g = parse_mas(src, "<t>").unwrap();
        let guard = &g.agents[0].edges[0].guard;
        assert_eq!(canonical_expr(guard, &g.vtable), "A.x == 0 && sh == 0");
    }
}
