//! Universal branching-time formulas: text grammar, resolution against a
//! system, and normalization into a checkable form.
//!
//! Grammar (see `docs/formulas.md`): state formulas are boolean combinations
//! of atoms with `A[] φ` (always on every path), `A<> φ` (eventually on
//! every path), `AX φ`, and `A(φ U ψ)`. Negation and implication are
//! admitted anywhere propositional and eliminated by normalization; negating
//! a path quantifier is rejected, as is nesting a temporal operator under
//! another without an interposed `A`. Inside `A(...)`, conjunction
//! distributes over the quantifier, and a disjunction may carry at most one
//! temporal disjunct (the state-formula disjuncts factor out).

use crate::ast::{Expr, MasGraph};
use crate::error::{MasgError, Result};
use crate::parse::{Lexer, Tok, TokenStream};
use crate::print::canonical_expr;
use crate::resolve::{resolve_expr, type_of, ExprType, Scope};

/// Atomic proposition of a formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom {
    /// A location name, as labelled by the model (`idle`, `Voter.idle`,
    /// `(voted,idle)`).
    Location(String),
    /// A boolean expression over system variables; `name` is its canonical
    /// form, which is also the proposition name models label states with.
    Guard { name: String, expr: Expr },
}

impl Atom {
    /// The proposition name this atom refers to in a model's labelling.
    pub fn prop_name(&self) -> &str {
        match self {
            Atom::Location(n) => n,
            Atom::Guard { name, .. } => name,
        }
    }
}

/// Normal form: every temporal operator sits directly under the universal
/// path quantifier. `Next`, `Until`, and `Globally` here mean `AX`,
/// `A(· U ·)`, and `A[] ·`; `A<> φ` is the sugar `Until(True, φ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateF {
    True,
    False,
    Atom(u32),
    NegAtom(u32),
    And(Vec<StateF>),
    Or(Vec<StateF>),
    Next(Box<StateF>),
    Until(Box<StateF>, Box<StateF>),
    Globally(Box<StateF>),
}

/// A resolved, normalized formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub root: StateF,
    pub atoms: Vec<Atom>,
}

impl Formula {
    /// Guard expressions that must be requested when unwrapping a model this
    /// formula will be checked on.
    pub fn guard_exprs(&self) -> Vec<Expr> {
        self.atoms
            .iter()
            .filter_map(|a| match a {
                Atom::Guard { expr, .. } => Some(expr.clone()),
                Atom::Location(_) => None,
            })
            .collect()
    }

    /// Names of the variables the formula's guard atoms read.
    pub fn guard_var_names(&self, mas: &MasGraph) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for a in &self.atoms {
            if let Atom::Guard { expr: e, .. } = a {
                for v in crate::eval::vars_of_expr(e, &mas.vtable).vars() {
                    let name = mas.vtable.info(*v).qualified.clone();
                    if !out.contains(&name) {
                        out.push(name);
                    }
                }
            }
        }
        out
    }
}

/// Parsed tree before fragment normalization.
#[derive(Debug, Clone, PartialEq)]
enum Pf {
    True,
    False,
    Atom(Atom),
    Not(Box<Pf>),
    And(Box<Pf>, Box<Pf>),
    Or(Box<Pf>, Box<Pf>),
    Implies(Box<Pf>, Box<Pf>),
    All(Box<Pf>),
    Next(Box<Pf>),
    Until(Box<Pf>, Box<Pf>),
    Finally(Box<Pf>),
    Globally(Box<Pf>),
}

struct FormulaParser<'a> {
    ts: TokenStream<'a>,
    mas: &'a MasGraph,
}

impl<'a> FormulaParser<'a> {
    fn parse_state(&mut self) -> Result<Pf> {
        let lhs = self.parse_or()?;
        if self.ts.eat(Tok::ImpliesArrow) {
            let rhs = self.parse_state()?;
            return Ok(Pf::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn parse_or(&mut self) -> Result<Pf> {
        let mut e = self.parse_and()?;
        while self.ts.eat(Tok::OrOr) {
            let r = self.parse_and()?;
            e = Pf::Or(Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn parse_and(&mut self) -> Result<Pf> {
        let mut e = self.parse_unary()?;
        while self.ts.eat(Tok::AndAnd) {
            let r = self.parse_unary()?;
            e = Pf::And(Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn parse_unary(&mut self) -> Result<Pf> {
        if self.ts.eat(Tok::Bang) {
            return Ok(Pf::Not(Box::new(self.parse_unary()?)));
        }
        self.parse_primary()
    }

    /// `A[] φ`, `A<> φ`, `AX φ`, `A( path )`, parenthesized state formula,
    /// or an atom.
    fn parse_primary(&mut self) -> Result<Pf> {
        match self.ts.peek().clone() {
            Tok::Ident(k) if k == "A" => {
                self.ts.next();
                if self.ts.eat(Tok::LBracket) {
                    self.ts.expect(Tok::RBracket)?;
                    return Ok(Pf::All(Box::new(Pf::Globally(Box::new(
                        self.parse_unary()?,
                    )))));
                }
                if self.ts.eat(Tok::Lt) {
                    self.ts.expect(Tok::Gt)?;
                    return Ok(Pf::All(Box::new(Pf::Finally(Box::new(
                        self.parse_unary()?,
                    )))));
                }
                if self.ts.eat(Tok::LParen) {
                    let p = self.parse_path()?;
                    self.ts.expect(Tok::RParen)?;
                    return Ok(Pf::All(Box::new(p)));
                }
                Err(self.ts.error("expected `[]`, `<>`, or `(` after `A`"))
            }
            Tok::Ident(k) if k == "AX" => {
                self.ts.next();
                Ok(Pf::All(Box::new(Pf::Next(Box::new(self.parse_unary()?)))))
            }
            Tok::LParen => {
                // may be a parenthesized state formula or an atom like (x + 1 > 2)
                self.parse_atom_or_paren()
            }
            _ => self.parse_atom(),
        }
    }

    /// Path formula inside `A( ... )`.
    fn parse_path(&mut self) -> Result<Pf> {
        let mut e = self.parse_path_and()?;
        while self.ts.eat(Tok::OrOr) {
            let r = self.parse_path_and()?;
            e = Pf::Or(Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn parse_path_and(&mut self) -> Result<Pf> {
        let mut e = self.parse_path_term()?;
        while self.ts.eat(Tok::AndAnd) {
            let r = self.parse_path_term()?;
            e = Pf::And(Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn parse_path_term(&mut self) -> Result<Pf> {
        let lhs = match self.ts.peek().clone() {
            Tok::Ident(k) if k == "X" => {
                self.ts.next();
                Pf::Next(Box::new(self.parse_unary()?))
            }
            Tok::LBracket => {
                self.ts.next();
                self.ts.expect(Tok::RBracket)?;
                Pf::Globally(Box::new(self.parse_unary()?))
            }
            Tok::Lt => {
                self.ts.next();
                self.ts.expect(Tok::Gt)?;
                Pf::Finally(Box::new(self.parse_unary()?))
            }
            Tok::LParen => {
                self.ts.next();
                let inner = self.parse_path()?;
                self.ts.expect(Tok::RParen)?;
                inner
            }
            _ => self.parse_state_nopath()?,
        };
        if let Tok::Ident(k) = self.ts.peek() {
            if k == "U" {
                self.ts.next();
                let rhs = self.parse_path_term()?;
                return Ok(Pf::Until(Box::new(lhs), Box::new(rhs)));
            }
        }
        Ok(lhs)
    }

    /// A state sub-formula in path position (no bare temporal operators).
    fn parse_state_nopath(&mut self) -> Result<Pf> {
        if self.ts.eat(Tok::Bang) {
            return Ok(Pf::Not(Box::new(self.parse_state_nopath()?)));
        }
        match self.ts.peek().clone() {
            Tok::Ident(k) if k == "A" || k == "AX" => self.parse_primary(),
            _ => self.parse_atom(),
        }
    }

    fn parse_atom_or_paren(&mut self) -> Result<Pf> {
        // Try a full state formula first; fall back to an expression atom.
        let save = self.ts_pos();
        self.ts.expect(Tok::LParen)?;
        match self.parse_state() {
            Ok(inner) => {
                if self.ts.eat(Tok::RParen) {
                    return Ok(inner);
                }
                self.set_pos(save);
                self.parse_atom()
            }
            Err(_) => {
                self.set_pos(save);
                self.parse_atom()
            }
        }
    }

    fn ts_pos(&self) -> usize {
        self.ts.position()
    }

    fn set_pos(&mut self, p: usize) {
        self.ts.set_position(p);
    }

    /// A bare identifier naming a location, or a relational expression over
    /// variables. Boolean structure stays at the formula level.
    fn parse_atom(&mut self) -> Result<Pf> {
        let raw = crate::parse::parse_rel_expr(&mut self.ts)?;
        if let crate::raw::RawExpr::Bool(b) = raw {
            return Ok(if b { Pf::True } else { Pf::False });
        }
        if let crate::raw::RawExpr::Ident(name) = &raw {
            if let Some(loc) = self.resolve_location(name)? {
                return Ok(Pf::Atom(Atom::Location(loc)));
            }
        }
        let e = resolve_expr(&self.mas.vtable, &Scope::Global, &raw)?;
        if type_of(&e) != ExprType::Bool {
            return Err(MasgError::Formula(format!(
                "atom `{}` is not boolean",
                canonical_expr(&e, &self.mas.vtable)
            )));
        }
        Ok(Pf::Atom(Atom::Guard {
            name: canonical_expr(&e, &self.mas.vtable),
            expr: e,
        }))
    }

    /// Resolves a (possibly qualified) location name to its proposition
    /// name; `Ok(None)` when the identifier is not a location at all.
    fn resolve_location(&self, name: &str) -> Result<Option<String>> {
        if let Some((agent, loc)) = name.split_once('.') {
            let a = self
                .mas
                .agent_index(agent)
                .ok_or_else(|| MasgError::Undeclared(format!("agent `{agent}`")))?;
            if self.mas.agents[a].loc_id(loc).is_some() {
                return Ok(Some(name.to_string()));
            }
            return Ok(None);
        }
        let owners: Vec<&str> = self
            .mas
            .agents
            .iter()
            .filter(|a| a.loc_id(name).is_some())
            .map(|a| a.name.as_str())
            .collect();
        match owners.len() {
            0 => Ok(None),
            1 => Ok(Some(name.to_string())),
            _ => Err(MasgError::Formula(format!(
                "location `{name}` is ambiguous (agents {}); qualify it",
                owners.join(", ")
            ))),
        }
    }
}

struct Normalizer {
    atoms: Vec<Atom>,
}

impl Normalizer {
    fn atom_id(&mut self, a: Atom) -> u32 {
        if let Some(i) = self.atoms.iter().position(|x| *x == a) {
            return i as u32;
        }
        self.atoms.push(a);
        (self.atoms.len() - 1) as u32
    }

    /// Negation-normal-form state normalization. `negated` pushes an outer
    /// negation inwards.
    fn state(&mut self, f: &Pf, negated: bool) -> Result<StateF> {
        Ok(match f {
            Pf::True => {
                if negated {
                    StateF::False
                } else {
                    StateF::True
                }
            }
            Pf::False => {
                if negated {
                    StateF::True
                } else {
                    StateF::False
                }
            }
            Pf::Atom(a) => {
                let id = self.atom_id(a.clone());
                if negated {
                    StateF::NegAtom(id)
                } else {
                    StateF::Atom(id)
                }
            }
            Pf::Not(g) => self.state(g, !negated)?,
            Pf::Implies(a, b) => {
                // a -> b == !a || b
                let d = Pf::Or(Box::new(Pf::Not(a.clone())), b.clone());
                self.state(&d, negated)?
            }
            Pf::And(a, b) => {
                let xs = vec![self.state(a, negated)?, self.state(b, negated)?];
                if negated {
                    StateF::Or(xs)
                } else {
                    StateF::And(xs)
                }
            }
            Pf::Or(a, b) => {
                let xs = vec![self.state(a, negated)?, self.state(b, negated)?];
                if negated {
                    StateF::And(xs)
                } else {
                    StateF::Or(xs)
                }
            }
            Pf::All(p) => {
                if negated {
                    return Err(MasgError::OutOfFragment(
                        "negation over a path quantifier would require an existential quantifier"
                            .into(),
                    ));
                }
                self.path(p)?
            }
            Pf::Next(_) | Pf::Until(..) | Pf::Finally(_) | Pf::Globally(_) => {
                return Err(MasgError::OutOfFragment(
                    "temporal operator outside a path quantifier".into(),
                ));
            }
        })
    }

    /// Normalizes a path formula under `A`, producing a state formula.
    /// Conjunctions distribute over `A`; a disjunction may contain at most
    /// one temporal disjunct.
    fn path(&mut self, p: &Pf) -> Result<StateF> {
        match p {
            Pf::And(a, b) => Ok(StateF::And(vec![self.path(a)?, self.path(b)?])),
            Pf::Or(..) => {
                let mut disjuncts = Vec::new();
                flatten_or(p, &mut disjuncts);
                let mut state_parts = Vec::new();
                let mut temporal = Vec::new();
                for d in disjuncts {
                    if is_temporal(&d) {
                        temporal.push(d);
                    } else {
                        state_parts.push(self.state(&d, false)?);
                    }
                }
                match temporal.len() {
                    0 => Ok(StateF::Or(state_parts)),
                    1 => {
                        let t = self.path(&temporal[0])?;
                        state_parts.push(t);
                        Ok(StateF::Or(state_parts))
                    }
                    n => Err(MasgError::OutOfFragment(format!(
                        "a disjunction under one path quantifier carries {n} temporal members; at most one is supported"
                    ))),
                }
            }
            Pf::Next(f) => Ok(StateF::Next(Box::new(self.state(f, false)?))),
            Pf::Until(a, b) => Ok(StateF::Until(
                Box::new(self.state(a, false)?),
                Box::new(self.state(b, false)?),
            )),
            Pf::Finally(f) => Ok(StateF::Until(
                Box::new(StateF::True),
                Box::new(self.state(f, false)?),
            )),
            Pf::Globally(f) => Ok(StateF::Globally(Box::new(self.state(f, false)?))),
            // a pure state formula under A evaluates at the path's first state
            other => self.state(other, false),
        }
    }
}

fn flatten_or(p: &Pf, out: &mut Vec<Pf>) {
    match p {
        Pf::Or(a, b) => {
            flatten_or(a, out);
            flatten_or(b, out);
        }
        other => out.push(other.clone()),
    }
}

fn is_temporal(p: &Pf) -> bool {
    match p {
        Pf::Next(_) | Pf::Until(..) | Pf::Finally(_) | Pf::Globally(_) => true,
        Pf::And(a, b) | Pf::Or(a, b) => is_temporal(a) || is_temporal(b),
        Pf::Implies(a, b) => is_temporal(a) || is_temporal(b),
        Pf::Not(a) => is_temporal(a),
        _ => false,
    }
}

/// Parses a formula against a system.
pub fn parse_formula(text: &str, mas: &MasGraph) -> Result<Formula> {
    let toks = Lexer::tokenize(text, "<formula>", true)?;
    let mut p = FormulaParser {
        ts: TokenStream::new(toks, "<formula>"),
        mas,
    };
    let pf = p.parse_state()?;
    if !p.ts.at_eof() {
        return Err(p.ts.error("trailing input after formula"));
    }
    let mut n = Normalizer { atoms: Vec::new() };
    let root = n.state(&pf, false)?;
    Ok(Formula {
        root,
        atoms: n.atoms,
    })
}

/// Parses a bare boolean expression (used for guard propositions on the
/// command line and in config files).
pub fn parse_guard_expr(text: &str, table: &crate::ast::VarTable) -> Result<Expr> {
    let toks = Lexer::tokenize(text, "<expr>", false)?;
    let mut ts = TokenStream::new(toks, "<expr>");
    let raw = crate::parse::parse_expr(&mut ts)?;
    if !ts.at_eof() {
        return Err(ts.error("trailing input after expression"));
    }
    let e = resolve_expr(table, &Scope::Global, &raw)?;
    if type_of(&e) != ExprType::Bool {
        return Err(MasgError::Type("expression is not boolean".into()));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_mas;

    fn sys() -> MasGraph {
        parse_mas(
            "
            system { var K: [1..3] of 0..1 = 0; var r: 0..1 = 0; }
            agent V { var x: 0..3 = 0; loc idle, voted, obeyed; init idle;
              edge idle -> voted do x := i select i: 1..3 }
            agent C { loc idle, halt; init idle; }
            ",
            "<t>",
        )
        .unwrap()
    }

    #[test]
    fn always_formula_parses() {
        let m = sys();
        let f = parse_formula("A[] (!obeyed || K[x] == 1)", &m).unwrap();
        match &f.root {
            StateF::Globally(inner) => match inner.as_ref() {
                StateF::Or(xs) => assert_eq!(xs.len(), 2),
                other => panic!("unexpected {other:?}"),
            },
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(f.atoms.len(), 2);
    }

    #[test]
    fn eventually_desugars_to_until() {
        let m = sys();
        let f = parse_formula("A<> (r == 1)", &m).unwrap();
        assert!(matches!(&f.root, StateF::Until(a, _) if **a == StateF::True));
    }

    #[test]
    fn nested_quantifiers_stay_in_fragment() {
        let m = sys();
        let f = parse_formula("A[] A<> (r == 1)", &m).unwrap();
        assert!(matches!(&f.root, StateF::Globally(_)));
        let g = parse_formula("A(x == 0 U voted)", &m).unwrap();
        assert!(matches!(&g.root, StateF::Until(..)));
    }

    #[test]
    fn out_of_fragment_nesting_rejected() {
        let m = sys();
        for text in [
            "!(A[] (r == 1))",
            "A(<> [] (r == 1))",
            "A(<> (r == 1) || <> (r == 0))",
        ] {
            let err = parse_formula(text, &m).unwrap_err();
            assert!(
                matches!(err, MasgError::OutOfFragment(_) | MasgError::Syntax { .. }),
                "{text}: {err:?}"
            );
        }
    }

    #[test]
    fn implication_and_negation_normalize() {
        let m = sys();
        let f = parse_formula("A[] (voted -> K[1] == 0)", &m).unwrap();
        match &f.root {
            StateF::Globally(inner) => match inner.as_ref() {
                StateF::Or(xs) => {
                    assert!(matches!(xs[0], StateF::NegAtom(_)));
                    assert!(matches!(xs[1], StateF::Atom(_)));
                }
                other => panic!("unexpected {other:?}"),
            },
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ambiguous_bare_location_rejected() {
        let m = sys();
        let err = parse_formula("A[] idle", &m).unwrap_err();
        assert!(matches!(err, MasgError::Formula(_)));
        assert!(parse_formula("A[] V.idle", &m).is_ok());
    }

    #[test]
    fn undeclared_atom_rejected() {
        let m = sys();
        assert!(parse_formula("A[] (zz == 1)", &m).is_err());
    }

    #[test]
    fn state_disjunct_factors_out_of_path_or() {
        let m = sys();
        let f = parse_formula("A(voted || [] (r == 0))", &m).unwrap();
        match &f.root {
            StateF::Or(xs) => {
                assert_eq!(xs.len(), 2);
                assert!(xs.iter().any(|x| matches!(x, StateF::Globally(_))));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
