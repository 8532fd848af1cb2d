//! Expression and update evaluation over flat value vectors, plus
//! substitution, constant folding, and satisfying-set enumeration.
//!
//! Arithmetic is computed in `i64`; division truncates toward zero and `%`
//! takes the sign of the dividend (Rust semantics). Division or modulo by
//! zero, out-of-bounds array access, and out-of-domain assignment all yield
//! an [`EvalError`] rather than panicking; edge-firing code treats such an
//! error as "edge not enabled".

use std::collections::BTreeSet;

use crate::ast::{Assign, Expr, Update, Value, VarDomain, VarSet, VarTable};
use crate::error::{EvalError, MasgError, Result};

/// Result of evaluating an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalValue {
    Int(i64),
    Bool(bool),
}

impl EvalValue {
    pub fn as_int(self) -> std::result::Result<i64, EvalError> {
        match self {
            EvalValue::Int(v) => Ok(v),
            EvalValue::Bool(_) => Err(EvalError::ExpectedInt),
        }
    }

    pub fn as_bool(self) -> std::result::Result<bool, EvalError> {
        match self {
            EvalValue::Bool(v) => Ok(v),
            EvalValue::Int(_) => Err(EvalError::ExpectedBool),
        }
    }
}

fn cell_slot(table: &VarTable, r: crate::ast::VarRef, idx: i64) -> std::result::Result<usize, EvalError> {
    let info = table.info(r.var);
    info.slot_at(idx).ok_or_else(|| {
        let range = info
            .decl
            .domain
            .index_range()
            .unwrap_or(crate::ast::IntRange::new(0, -1));
        EvalError::IndexOutOfBounds {
            var: info.qualified.clone(),
            index: idx,
            lo: range.lo,
            hi: range.hi,
        }
    })
}

/// Evaluates an expression over a full evaluation vector.
pub fn eval_expr(
    e: &Expr,
    vals: &[Value],
    table: &VarTable,
) -> std::result::Result<EvalValue, EvalError> {
    match e {
        Expr::Int(v) => Ok(EvalValue::Int(*v)),
        Expr::Bool(b) => Ok(EvalValue::Bool(*b)),
        Expr::Var(r) => Ok(EvalValue::Int(i64::from(vals[r.slot]))),
        Expr::Cell(r, idx) => {
            let i = eval_expr(idx, vals, table)?.as_int()?;
            let slot = cell_slot(table, *r, i)?;
            Ok(EvalValue::Int(i64::from(vals[slot])))
        }
        Expr::Neg(a) => Ok(EvalValue::Int(-eval_expr(a, vals, table)?.as_int()?)),
        Expr::Arith(op, a, b) => {
            let x = eval_expr(a, vals, table)?.as_int()?;
            let y = eval_expr(b, vals, table)?.as_int()?;
            let v = match op {
                crate::ast::ArithOp::Add => x.wrapping_add(y),
                crate::ast::ArithOp::Sub => x.wrapping_sub(y),
                crate::ast::ArithOp::Mul => x.wrapping_mul(y),
                crate::ast::ArithOp::Div => {
                    if y == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    x.wrapping_div(y)
                }
                crate::ast::ArithOp::Rem => {
                    if y == 0 {
                        return Err(EvalError::ModuloByZero);
                    }
                    x.wrapping_rem(y)
                }
            };
            Ok(EvalValue::Int(v))
        }
        Expr::Cmp(op, a, b) => {
            let x = eval_expr(a, vals, table)?.as_int()?;
            let y = eval_expr(b, vals, table)?.as_int()?;
            Ok(EvalValue::Bool(op.eval(x, y)))
        }
        Expr::Not(a) => Ok(EvalValue::Bool(!eval_expr(a, vals, table)?.as_bool()?)),
        Expr::And(a, b) => {
            let x = eval_expr(a, vals, table)?.as_bool()?;
            if !x {
                return Ok(EvalValue::Bool(false));
            }
            Ok(EvalValue::Bool(eval_expr(b, vals, table)?.as_bool()?))
        }
        Expr::Or(a, b) => {
            let x = eval_expr(a, vals, table)?.as_bool()?;
            if x {
                return Ok(EvalValue::Bool(true));
            }
            Ok(EvalValue::Bool(eval_expr(b, vals, table)?.as_bool()?))
        }
    }
}

/// Evaluates a boolean guard.
pub fn eval_guard(
    g: &Expr,
    vals: &[Value],
    table: &VarTable,
) -> std::result::Result<bool, EvalError> {
    eval_expr(g, vals, table)?.as_bool()
}

/// Applies one assignment in place, checking the target's domain.
pub fn apply_assign(
    a: &Assign,
    vals: &mut [Value],
    table: &VarTable,
) -> std::result::Result<(), EvalError> {
    let rhs = eval_expr(&a.rhs, vals, table)?.as_int()?;
    let slot = match &a.index {
        None => a.target.slot,
        Some(ix) => {
            let i = eval_expr(ix, vals, table)?.as_int()?;
            cell_slot(table, a.target, i)?
        }
    };
    let range = table.slot_range(slot);
    if !range.contains(rhs) {
        return Err(EvalError::OutOfDomain {
            var: table.info(a.target.var).qualified.clone(),
            value: rhs,
            lo: range.lo,
            hi: range.hi,
        });
    }
    vals[slot] = rhs as Value;
    Ok(())
}

/// Applies an update sequence left to right, each assignment seeing the
/// previous ones' results. The empty update is the identity.
pub fn effect(
    u: &Update,
    vals: &[Value],
    table: &VarTable,
) -> std::result::Result<Box<[Value]>, EvalError> {
    let mut out: Box<[Value]> = vals.into();
    for a in &u.0 {
        apply_assign(a, &mut out, table)?;
    }
    Ok(out)
}

/// Free variables of an expression.
pub fn vars_of_expr(e: &Expr, table: &VarTable) -> VarSet {
    let mut s = BTreeSet::new();
    e.collect_vars(&mut s);
    VarSet::from_iter(s, table)
}

/// Variables occurring in an update (targets, indexes, right-hand sides).
pub fn vars_of_update(u: &Update, table: &VarTable) -> VarSet {
    let mut s = BTreeSet::new();
    u.collect_vars(&mut s);
    VarSet::from_iter(s, table)
}

/// Enumerates the evaluations over `over` that satisfy the guard, with all
/// other slots held at their defaults. `over` must cover the guard's
/// variables. Evaluations on which the guard errors are skipped and counted.
pub struct SatResult {
    pub vectors: Vec<Box<[Value]>>,
    pub eval_errors: u64,
}

pub fn sat(g: &Expr, over: &VarSet, table: &VarTable, cap: u64) -> Result<SatResult> {
    let needed = vars_of_expr(g, table);
    if !needed.is_subset_of(over) {
        return Err(MasgError::Validation(format!(
            "guard reads variables outside the enumerated set: {:?}",
            needed
                .vars()
                .iter()
                .filter(|v| !over.contains(**v))
                .map(|v| table.info(*v).qualified.clone())
                .collect::<Vec<_>>()
        )));
    }
    let size = over.domain_size(table);
    if size > u128::from(cap) {
        return Err(MasgError::EnumBudget(size, cap));
    }
    let mut scratch = table.defaults();
    let mut vectors = Vec::new();
    let mut eval_errors = 0u64;
    for vec in over.enumerate(table) {
        for (slot, v) in over.slots().iter().zip(vec.iter()) {
            scratch[*slot] = *v;
        }
        match eval_guard(g, &scratch, table) {
            Ok(true) => vectors.push(vec),
            Ok(false) => {}
            Err(_) => eval_errors += 1,
        }
    }
    Ok(SatResult {
        vectors,
        eval_errors,
    })
}

/// Substitutes every occurrence of the variables in `set` by the literal
/// values of `vals` (aligned with `set`'s slot order), then constant-folds.
///
/// Array cells are substituted when the (folded) index is a literal; an
/// out-of-range literal index is left in place so evaluation still reports
/// the error. Non-literal indexes into a substituted array are left
/// unresolved; callers that must eliminate a variable completely check for
/// this case up front via [`reads_array_dynamically`].
pub fn substitute(e: &Expr, set: &VarSet, vals: &[Value], table: &VarTable) -> Expr {
    let out = subst_rec(e, set, vals, table);
    fold(out, table)
}

fn slot_value(set: &VarSet, vals: &[Value], slot: usize) -> Option<i64> {
    set.slots()
        .iter()
        .position(|s| *s == slot)
        .map(|i| i64::from(vals[i]))
}

fn subst_rec(e: &Expr, set: &VarSet, vals: &[Value], table: &VarTable) -> Expr {
    match e {
        Expr::Int(_) | Expr::Bool(_) => e.clone(),
        Expr::Var(r) => {
            if set.contains(r.var) {
                match slot_value(set, vals, r.slot) {
                    Some(v) => Expr::Int(v),
                    None => e.clone(),
                }
            } else {
                e.clone()
            }
        }
        Expr::Cell(r, idx) => {
            let idx2 = fold(subst_rec(idx, set, vals, table), table);
            if set.contains(r.var) {
                if let Expr::Int(i) = idx2 {
                    if let Some(slot) = table.info(r.var).slot_at(i) {
                        if let Some(v) = slot_value(set, vals, slot) {
                            return Expr::Int(v);
                        }
                    }
                }
            }
            Expr::Cell(*r, Box::new(idx2))
        }
        Expr::Neg(a) => Expr::Neg(Box::new(subst_rec(a, set, vals, table))),
        Expr::Arith(op, a, b) => Expr::Arith(
            *op,
            Box::new(subst_rec(a, set, vals, table)),
            Box::new(subst_rec(b, set, vals, table)),
        ),
        Expr::Cmp(op, a, b) => Expr::Cmp(
            *op,
            Box::new(subst_rec(a, set, vals, table)),
            Box::new(subst_rec(b, set, vals, table)),
        ),
        Expr::Not(a) => Expr::Not(Box::new(subst_rec(a, set, vals, table))),
        Expr::And(a, b) => Expr::And(
            Box::new(subst_rec(a, set, vals, table)),
            Box::new(subst_rec(b, set, vals, table)),
        ),
        Expr::Or(a, b) => Expr::Or(
            Box::new(subst_rec(a, set, vals, table)),
            Box::new(subst_rec(b, set, vals, table)),
        ),
    }
}

/// Substitutes set variables within an update's read positions (indexes and
/// right-hand sides). Write targets are never substituted.
pub fn substitute_update(u: &Update, set: &VarSet, vals: &[Value], table: &VarTable) -> Update {
    Update(
        u.0.iter()
            .map(|a| Assign {
                target: a.target,
                index: a
                    .index
                    .as_ref()
                    .map(|ix| substitute(ix, set, vals, table)),
                rhs: substitute(&a.rhs, set, vals, table),
            })
            .collect(),
    )
}

/// True if the expression reads a cell of `var` through a non-literal index.
pub fn reads_array_dynamically(e: &Expr, var: crate::ast::VarId) -> bool {
    match e {
        Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => false,
        Expr::Cell(r, idx) => {
            (r.var == var && !matches!(**idx, Expr::Int(_))) || reads_array_dynamically(idx, var)
        }
        Expr::Neg(a) | Expr::Not(a) => reads_array_dynamically(a, var),
        Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
            reads_array_dynamically(a, var) || reads_array_dynamically(b, var)
        }
    }
}

/// Constant folding. Only operations that cannot fail at runtime are folded:
/// division and modulo fold only for a non-zero literal divisor, and array
/// indexes fold to cell reads only when in bounds.
pub fn fold(e: Expr, table: &VarTable) -> Expr {
    match e {
        Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => e,
        Expr::Cell(r, idx) => {
            let idx = fold(*idx, table);
            Expr::Cell(r, Box::new(idx))
        }
        Expr::Neg(a) => match fold(*a, table) {
            Expr::Int(v) => Expr::Int(v.wrapping_neg()),
            a => Expr::Neg(Box::new(a)),
        },
        Expr::Arith(op, a, b) => {
            let a = fold(*a, table);
            let b = fold(*b, table);
            if let (Expr::Int(x), Expr::Int(y)) = (&a, &b) {
                let v = match op {
                    crate::ast::ArithOp::Add => Some(x.wrapping_add(*y)),
                    crate::ast::ArithOp::Sub => Some(x.wrapping_sub(*y)),
                    crate::ast::ArithOp::Mul => Some(x.wrapping_mul(*y)),
                    crate::ast::ArithOp::Div => (*y != 0).then(|| x.wrapping_div(*y)),
                    crate::ast::ArithOp::Rem => (*y != 0).then(|| x.wrapping_rem(*y)),
                };
                if let Some(v) = v {
                    return Expr::Int(v);
                }
            }
            Expr::Arith(op, Box::new(a), Box::new(b))
        }
        Expr::Cmp(op, a, b) => {
            let a = fold(*a, table);
            let b = fold(*b, table);
            if let (Expr::Int(x), Expr::Int(y)) = (&a, &b) {
                return Expr::Bool(op.eval(*x, *y));
            }
            Expr::Cmp(op, Box::new(a), Box::new(b))
        }
        Expr::Not(a) => match fold(*a, table) {
            Expr::Bool(b) => Expr::Bool(!b),
            a => Expr::Not(Box::new(a)),
        },
        Expr::And(a, b) => Expr::and(fold(*a, table), fold(*b, table)),
        Expr::Or(a, b) => Expr::or(fold(*a, table), fold(*b, table)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{ArithOp, IntRange, VarDecl, VarId, VarRef};

    fn table() -> VarTable {
        let mk = |name: &str, lo, hi, d| VarDecl {
            name: name.into(),
            domain: VarDomain::Scalar(IntRange::new(lo, hi)),
            default: vec![d],
            shared: true,
        };
        let arr = VarDecl {
            name: "a".into(),
            domain: VarDomain::Array {
                index: IntRange::new(1, 3),
                cell: IntRange::new(0, 9),
            },
            default: vec![0, 0, 0],
            shared: true,
        };
        VarTable::build(vec![
            (arr, "a".into(), None),
            (mk("x", 0, 9, 0), "x".into(), None),
            (mk("y", 0, 9, 0), "y".into(), None),
        ])
        .unwrap()
    }

    fn vref(t: &VarTable, name: &str) -> VarRef {
        let id = t.lookup(name).unwrap();
        VarRef {
            var: id,
            slot: t.info(id).first_slot,
        }
    }

    #[test]
    fn arithmetic_identity() {
        let t = table();
        // 7 % 3 + 1 == 2
        let e = Expr::Arith(
            ArithOp::Add,
            Box::new(Expr::Arith(
                ArithOp::Rem,
                Box::new(Expr::Int(7)),
                Box::new(Expr::Int(3)),
            )),
            Box::new(Expr::Int(1)),
        );
        let vals = t.defaults();
        assert_eq!(eval_expr(&e, &vals, &t).unwrap(), EvalValue::Int(2));
        assert_eq!(fold(e, &t), Expr::Int(2));
    }

    #[test]
    fn division_truncates_toward_zero() {
        let t = table();
        let div = |a: i64, b: i64| {
            let e = Expr::Arith(ArithOp::Div, Box::new(Expr::Int(a)), Box::new(Expr::Int(b)));
            eval_expr(&e, &t.defaults(), &t).unwrap().as_int().unwrap()
        };
        assert_eq!(div(7, 2), 3);
        assert_eq!(div(-7, 2), -3);
        let rem = |a: i64, b: i64| {
            let e = Expr::Arith(ArithOp::Rem, Box::new(Expr::Int(a)), Box::new(Expr::Int(b)));
            eval_expr(&e, &t.defaults(), &t).unwrap().as_int().unwrap()
        };
        assert_eq!(rem(-7, 2), -1);
        assert_eq!(rem(7, -2), 1);
    }

    #[test]
    fn division_by_zero_is_eval_error() {
        let t = table();
        let e = Expr::Arith(ArithOp::Div, Box::new(Expr::Int(1)), Box::new(Expr::Int(0)));
        assert_eq!(
            eval_expr(&e, &t.defaults(), &t),
            Err(EvalError::DivisionByZero)
        );
        // not folded away either
        assert!(matches!(fold(e, &t), Expr::Arith(..)));
    }

    #[test]
    fn index_out_of_bounds_is_eval_error() {
        let t = table();
        let e = Expr::Cell(vref(&t, "a"), Box::new(Expr::Int(4)));
        assert!(matches!(
            eval_expr(&e, &t.defaults(), &t),
            Err(EvalError::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn guard_eval_basic() {
        let t = table();
        let mut vals = t.defaults();
        let x = vref(&t, "x");
        vals[x.slot] = 1;
        let g = Expr::eq_int(Expr::Var(x), 1);
        assert!(eval_guard(&g, &vals, &t).unwrap());
    }

    #[test]
    fn effect_sequences_left_to_right() {
        let t = table();
        let x = vref(&t, "x");
        let y = vref(&t, "y");
        // x := x + 1; y := x  starting from x=0 gives x=1, y=1
        let u = Update(vec![
            Assign {
                target: x,
                index: None,
                rhs: Expr::Arith(
                    ArithOp::Add,
                    Box::new(Expr::Var(x)),
                    Box::new(Expr::Int(1)),
                ),
            },
            Assign {
                target: y,
                index: None,
                rhs: Expr::Var(x),
            },
        ]);
        let out = effect(&u, &t.defaults(), &t).unwrap();
        assert_eq!(out[x.slot], 1);
        assert_eq!(out[y.slot], 1);

        // x := 2; x := x * x  from x=5 gives 4
        let u2 = Update(vec![
            Assign {
                target: x,
                index: None,
                rhs: Expr::Int(2),
            },
            Assign {
                target: x,
                index: None,
                rhs: Expr::Arith(
                    ArithOp::Mul,
                    Box::new(Expr::Var(x)),
                    Box::new(Expr::Var(x)),
                ),
            },
        ]);
        let mut start = t.defaults();
        start[x.slot] = 5;
        let out2 = effect(&u2, &start, &t).unwrap();
        assert_eq!(out2[x.slot], 4);
    }

    #[test]
    fn identity_update_is_identity() {
        let t = table();
        let mut start = t.defaults();
        start[vref(&t, "x").slot] = 7;
        let out = effect(&Update::default(), &start, &t).unwrap();
        assert_eq!(out, start);
    }

    #[test]
    fn out_of_domain_assignment_is_eval_error() {
        let t = table();
        let x = vref(&t, "x");
        let u = Update(vec![Assign {
            target: x,
            index: None,
            rhs: Expr::Int(10),
        }]);
        assert!(matches!(
            effect(&u, &t.defaults(), &t),
            Err(EvalError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn sat_enumerates_projection() {
        let t = table();
        let x = vref(&t, "x");
        let over = VarSet::from_iter([x.var], &t);
        // x==1 || x==2 over x:0..9
        let g = Expr::or(
            Expr::eq_int(Expr::Var(x), 1),
            Expr::eq_int(Expr::Var(x), 2),
        );
        let r = sat(&g, &over, &t, 10_000).unwrap();
        assert_eq!(
            r.vectors.iter().map(|v| v[0]).collect::<Vec<_>>(),
            vec![1, 2]
        );
        let top = sat(&Expr::TRUE, &over, &t, 10_000).unwrap();
        assert_eq!(top.vectors.len(), 10);
    }

    #[test]
    fn substitute_folds_to_bool() {
        let t = table();
        let x = vref(&t, "x");
        let set = VarSet::from_iter([x.var], &t);
        let g = Expr::eq_int(Expr::Var(x), 1);
        assert_eq!(substitute(&g, &set, &[1], &t), Expr::TRUE);
        assert_eq!(substitute(&g, &set, &[2], &t), Expr::FALSE);
    }

    #[test]
    fn substitute_array_index() {
        let t = table();
        let a = vref(&t, "a");
        let x = vref(&t, "x");
        let set = VarSet::from_iter([x.var], &t);
        // a[x] with x=2 becomes a[2]
        let e = Expr::Cell(a, Box::new(Expr::Var(x)));
        assert_eq!(
            substitute(&e, &set, &[2], &t),
            Expr::Cell(a, Box::new(Expr::Int(2)))
        );
        // update target index substituted, target itself untouched
        let u = Update(vec![Assign {
            target: a,
            index: Some(Expr::Var(x)),
            rhs: Expr::Int(1),
        }]);
        let u2 = substitute_update(&u, &set, &[2], &t);
        assert_eq!(u2.0[0].index, Some(Expr::Int(2)));
    }

    #[test]
    fn vars_of_update_includes_lhs_and_rhs() {
        let t = table();
        let a = vref(&t, "a");
        let x = vref(&t, "x");
        let y = vref(&t, "y");
        // a[x] := y + 1
        let u = Update(vec![Assign {
            target: a,
            index: Some(Expr::Var(x)),
            rhs: Expr::Arith(
                ArithOp::Add,
                Box::new(Expr::Var(y)),
                Box::new(Expr::Int(1)),
            ),
        }]);
        let vs = vars_of_update(&u, &t);
        assert_eq!(vs.vars(), &[a.var, x.var, y.var]);
        assert!(vars_of_update(&Update::default(), &t).is_empty());
    }
}
