//! Lexer and parser for the `.masg` system format.
//!
//! The grammar is documented in `docs/masg-format.md`. Unknown constructs
//! are rejected with a line/column diagnostic.

use crate::ast::{ArithOp, CmpOp, MasGraph, SyncDir};
use crate::error::{MasgError, Result};
use crate::raw::{RawAgent, RawAssign, RawDomain, RawEdge, RawExpr, RawSystem, RawVarDecl};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Dot,
    DotDot,
    Arrow,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    Question,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    ImpliesArrow,
    EqSign,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::DotDot => write!(f, "`..`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Assign => write!(f, "`:=`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Percent => write!(f, "`%`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Question => write!(f, "`?`"),
            Tok::Eq => write!(f, "`==`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::AndAnd => write!(f, "`&&`"),
            Tok::OrOr => write!(f, "`||`"),
            Tok::ImpliesArrow => write!(f, "`->` (implies)"),
            Tok::EqSign => write!(f, "`=`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub(crate) struct Lexer;

impl Lexer {
    /// Tokenizes the input. When `arrow_is_implies` is set, `->` lexes as the
    /// implication token (used by the formula grammar); otherwise it is the
    /// edge arrow.
    pub(crate) fn tokenize(src: &str, file: &str, arrow_is_implies: bool) -> Result<Vec<Spanned>> {
        let mut out = Vec::new();
        let bytes = src.as_bytes();
        let mut i = 0usize;
        let mut line = 1usize;
        let mut col = 1usize;
        macro_rules! push {
            ($t:expr, $len:expr) => {{
                out.push(Spanned {
                    tok: $t,
                    line,
                    col,
                });
                i += $len;
                col += $len;
            }};
        }
        while i < bytes.len() {
            let c = bytes[i] as char;
            match c {
                '\n' => {
                    i += 1;
                    line += 1;
                    col = 1;
                }
                ' ' | '\t' | '\r' => {
                    i += 1;
                    col += 1;
                }
                '#' => {
                    while i < bytes.len() && bytes[i] != b'\n' {
                        i += 1;
                    }
                }
                '{' => push!(Tok::LBrace, 1),
                '}' => push!(Tok::RBrace, 1),
                '(' => push!(Tok::LParen, 1),
                ')' => push!(Tok::RParen, 1),
                '[' => push!(Tok::LBracket, 1),
                ']' => push!(Tok::RBracket, 1),
                ';' => push!(Tok::Semi, 1),
                ',' => push!(Tok::Comma, 1),
                '+' => push!(Tok::Plus, 1),
                '*' => push!(Tok::Star, 1),
                '/' => push!(Tok::Slash, 1),
                '%' => push!(Tok::Percent, 1),
                '?' => push!(Tok::Question, 1),
                '.' => {
                    if bytes.get(i + 1) == Some(&b'.') {
                        push!(Tok::DotDot, 2);
                    } else {
                        push!(Tok::Dot, 1);
                    }
                }
                ':' => {
                    if bytes.get(i + 1) == Some(&b'=') {
                        push!(Tok::Assign, 2);
                    } else {
                        push!(Tok::Colon, 1);
                    }
                }
                '-' => {
                    if bytes.get(i + 1) == Some(&b'>') {
                        if arrow_is_implies {
                            push!(Tok::ImpliesArrow, 2);
                        } else {
                            push!(Tok::Arrow, 2);
                        }
                    } else {
                        push!(Tok::Minus, 1);
                    }
                }
                '=' => {
                    if bytes.get(i + 1) == Some(&b'=') {
                        push!(Tok::Eq, 2);
                    } else {
                        push!(Tok::EqSign, 1);
                    }
                }
                '!' => {
                    if bytes.get(i + 1) == Some(&b'=') {
                        push!(Tok::Ne, 2);
                    } else {
                        push!(Tok::Bang, 1);
                    }
                }
                '<' => {
                    if bytes.get(i + 1) == Some(&b'=') {
                        push!(Tok::Le, 2);
                    } else {
                        push!(Tok::Lt, 1);
                    }
                }
                '>' => {
                    if bytes.get(i + 1) == Some(&b'=') {
                        push!(Tok::Ge, 2);
                    } else {
                        push!(Tok::Gt, 1);
                    }
                }
                '&' => {
                    if bytes.get(i + 1) == Some(&b'&') {
                        push!(Tok::AndAnd, 2);
                    } else {
                        return Err(syntax(file, line, col, "expected `&&`"));
                    }
                }
                '|' => {
                    if bytes.get(i + 1) == Some(&b'|') {
                        push!(Tok::OrOr, 2);
                    } else {
                        return Err(syntax(file, line, col, "expected `||`"));
                    }
                }
                '0'..='9' => {
                    let start = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    let text = &src[start..i];
                    let v: i64 = text.parse().map_err(|_| {
                        syntax(file, line, col, &format!("integer literal `{text}` out of range"))
                    })?;
                    out.push(Spanned {
                        tok: Tok::Int(v),
                        line,
                        col,
                    });
                    col += i - start;
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < bytes.len()
                        && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                    out.push(Spanned {
                        tok: Tok::Ident(src[start..i].to_string()),
                        line,
                        col,
                    });
                    col += i - start;
                }
                other => {
                    return Err(syntax(
                        file,
                        line,
                        col,
                        &format!("unexpected character `{other}`"),
                    ));
                }
            }
        }
        out.push(Spanned {
            tok: Tok::Eof,
            line,
            col,
        });
        Ok(out)
    }
}

fn syntax(file: &str, line: usize, col: usize, msg: &str) -> MasgError {
    MasgError::Syntax {
        file: file.to_string(),
        line,
        col,
        msg: msg.to_string(),
    }
}

pub(crate) struct TokenStream<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    file: &'a str,
}

impl<'a> TokenStream<'a> {
    pub(crate) fn new(toks: Vec<Spanned>, file: &'a str) -> Self {
        TokenStream { toks, pos: 0, file }
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub(crate) fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    pub(crate) fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn set_position(&mut self, p: usize) {
        self.pos = p.min(self.toks.len() - 1);
    }

    pub(crate) fn error(&self, msg: &str) -> MasgError {
        let s = &self.toks[self.pos];
        syntax(self.file, s.line, s.col, msg)
    }

    pub(crate) fn line(&self) -> usize {
        self.toks[self.pos].line
    }

    pub(crate) fn expect(&mut self, t: Tok) -> Result<Spanned> {
        if *self.peek() == t {
            Ok(self.next())
        } else {
            Err(self.error(&format!("expected {t}, found {}", self.peek())))
        }
    }

    pub(crate) fn eat(&mut self, t: Tok) -> bool {
        if *self.peek() == t {
            self.next();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect_ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.error(&format!("expected identifier, found {other}"))),
        }
    }

    /// Identifier with optional `.suffix` qualification.
    pub(crate) fn expect_qualified(&mut self) -> Result<String> {
        let mut s = self.expect_ident()?;
        while self.eat(Tok::Dot) {
            s.push('.');
            s.push_str(&self.expect_ident()?);
        }
        Ok(s)
    }

    pub(crate) fn expect_signed_int(&mut self) -> Result<i64> {
        let neg = self.eat(Tok::Minus);
        match self.peek().clone() {
            Tok::Int(v) => {
                self.next();
                Ok(if neg { -v } else { v })
            }
            other => Err(self.error(&format!("expected integer, found {other}"))),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "system", "agent", "var", "chan", "loc", "init", "edge", "do", "sync", "select", "g0", "of",
    "true", "false",
];

fn check_name(ts: &TokenStream, name: &str) -> Result<()> {
    if KEYWORDS.contains(&name) {
        Err(ts.error(&format!("`{name}` is a reserved keyword")))
    } else {
        Ok(())
    }
}

/// Parses `.masg` text into the raw system form.
pub fn parse_raw(src: &str, file: &str) -> Result<RawSystem> {
    let toks = Lexer::tokenize(src, file, false)?;
    let mut ts = TokenStream::new(toks, file);
    let mut sys = RawSystem::default();
    let mut seen_system = false;
    while !ts.at_eof() {
        match ts.peek().clone() {
            Tok::Ident(k) if k == "system" => {
                if seen_system {
                    return Err(ts.error("duplicate `system` block"));
                }
                seen_system = true;
                ts.next();
                parse_system_block(&mut ts, &mut sys)?;
            }
            Tok::Ident(k) if k == "agent" => {
                ts.next();
                let agent = parse_agent_block(&mut ts)?;
                sys.agents.push(agent);
            }
            _ => {
                return Err(ts.error(&format!(
                    "expected `system` or `agent`, found {}",
                    ts.peek()
                )))
            }
        }
    }
    if sys.agents.is_empty() {
        return Err(ts.error("no `agent` blocks declared"));
    }
    Ok(sys)
}

fn parse_system_block(ts: &mut TokenStream, sys: &mut RawSystem) -> Result<()> {
    ts.expect(Tok::LBrace)?;
    while !ts.eat(Tok::RBrace) {
        match ts.peek().clone() {
            Tok::Ident(k) if k == "var" => {
                ts.next();
                sys.shared.push(parse_var_decl(ts)?);
            }
            Tok::Ident(k) if k == "chan" => {
                ts.next();
                loop {
                    let name = ts.expect_ident()?;
                    check_name(ts, &name)?;
                    sys.channels.push(name);
                    if !ts.eat(Tok::Comma) {
                        break;
                    }
                }
                ts.expect(Tok::Semi)?;
            }
            Tok::Ident(k) if k == "g0" => {
                ts.next();
                if sys.g0.is_some() {
                    return Err(ts.error("duplicate `g0` clause"));
                }
                sys.g0 = Some(parse_expr(ts)?);
                ts.expect(Tok::Semi)?;
            }
            _ => {
                return Err(ts.error(&format!(
                    "expected `var`, `chan`, `g0`, or `}}`, found {}",
                    ts.peek()
                )))
            }
        }
    }
    Ok(())
}

fn parse_var_decl(ts: &mut TokenStream) -> Result<RawVarDecl> {
    let line = ts.line();
    let name = ts.expect_ident()?;
    check_name(ts, &name)?;
    ts.expect(Tok::Colon)?;
    let domain = if ts.eat(Tok::LBracket) {
        let ilo = ts.expect_signed_int()?;
        ts.expect(Tok::DotDot)?;
        let ihi = ts.expect_signed_int()?;
        ts.expect(Tok::RBracket)?;
        let of = ts.expect_ident()?;
        if of != "of" {
            return Err(ts.error("expected `of` after array index range"));
        }
        let lo = ts.expect_signed_int()?;
        ts.expect(Tok::DotDot)?;
        let hi = ts.expect_signed_int()?;
        RawDomain::Array { ilo, ihi, lo, hi }
    } else {
        let lo = ts.expect_signed_int()?;
        ts.expect(Tok::DotDot)?;
        let hi = ts.expect_signed_int()?;
        RawDomain::Scalar { lo, hi }
    };
    // default clause: `= value` or `= [v, v, ...]`
    let mut default = Vec::new();
    if ts.eat(Tok::EqSign) {
        if ts.eat(Tok::LBracket) {
            loop {
                default.push(ts.expect_signed_int()?);
                if !ts.eat(Tok::Comma) {
                    break;
                }
            }
            ts.expect(Tok::RBracket)?;
        } else {
            default.push(ts.expect_signed_int()?);
        }
    }
    ts.expect(Tok::Semi)?;
    if default.is_empty() {
        // default to the domain's low bound
        match &domain {
            RawDomain::Scalar { lo, .. } => default.push(*lo),
            RawDomain::Array { lo, .. } => default.push(*lo),
        }
    }
    Ok(RawVarDecl {
        name,
        domain,
        default,
        line,
    })
}

fn parse_agent_block(ts: &mut TokenStream) -> Result<RawAgent> {
    let name = ts.expect_ident()?;
    check_name(ts, &name)?;
    ts.expect(Tok::LBrace)?;
    let mut agent = RawAgent {
        name,
        vars: Vec::new(),
        locations: Vec::new(),
        init: String::new(),
        edges: Vec::new(),
    };
    while !ts.eat(Tok::RBrace) {
        match ts.peek().clone() {
            Tok::Ident(k) if k == "var" => {
                ts.next();
                agent.vars.push(parse_var_decl(ts)?);
            }
            Tok::Ident(k) if k == "loc" => {
                ts.next();
                loop {
                    let l = ts.expect_ident()?;
                    check_name(ts, &l)?;
                    agent.locations.push(l);
                    if !ts.eat(Tok::Comma) {
                        break;
                    }
                }
                ts.expect(Tok::Semi)?;
            }
            Tok::Ident(k) if k == "init" => {
                ts.next();
                if !agent.init.is_empty() {
                    return Err(ts.error("duplicate `init` clause"));
                }
                agent.init = ts.expect_ident()?;
                ts.expect(Tok::Semi)?;
            }
            Tok::Ident(k) if k == "edge" => {
                ts.next();
                agent.edges.push(parse_edge(ts)?);
            }
            _ => {
                return Err(ts.error(&format!(
                    "expected `var`, `loc`, `init`, `edge`, or `}}`, found {}",
                    ts.peek()
                )))
            }
        }
    }
    if agent.init.is_empty() {
        return Err(ts.error(&format!("agent `{}` has no `init` clause", agent.name)));
    }
    Ok(agent)
}

fn parse_edge(ts: &mut TokenStream) -> Result<RawEdge> {
    let line = ts.line();
    let src = ts.expect_ident()?;
    ts.expect(Tok::Arrow)?;
    let dst = ts.expect_ident()?;
    let mut edge = RawEdge {
        src,
        dst,
        guard: None,
        sync: None,
        updates: Vec::new(),
        selects: Vec::new(),
        line,
    };
    if ts.eat(Tok::LBracket) {
        edge.guard = Some(parse_expr(ts)?);
        ts.expect(Tok::RBracket)?;
    }
    if let Tok::Ident(k) = ts.peek() {
        if k == "sync" {
            ts.next();
            ts.expect(Tok::LParen)?;
            let chan = ts.expect_ident()?;
            let dir = if ts.eat(Tok::Bang) {
                SyncDir::Send
            } else if ts.eat(Tok::Question) {
                SyncDir::Recv
            } else {
                return Err(ts.error("expected `!` or `?` after channel name"));
            };
            ts.expect(Tok::RParen)?;
            edge.sync = Some((chan, dir));
        }
    }
    if let Tok::Ident(k) = ts.peek() {
        if k == "do" {
            ts.next();
            loop {
                let target = ts.expect_ident()?;
                let index = if ts.eat(Tok::LBracket) {
                    let ix = parse_expr(ts)?;
                    ts.expect(Tok::RBracket)?;
                    Some(ix)
                } else {
                    None
                };
                ts.expect(Tok::Assign)?;
                let rhs = parse_expr(ts)?;
                edge.updates.push(RawAssign { target, index, rhs });
                if !ts.eat(Tok::Semi) {
                    break;
                }
                // allow a trailing semicolon before the next keyword
                match ts.peek() {
                    Tok::Ident(k)
                        if k == "select"
                            || k == "edge"
                            || k == "var"
                            || k == "loc"
                            || k == "init" =>
                    {
                        break;
                    }
                    Tok::RBrace | Tok::Eof => break,
                    _ => {}
                }
            }
        }
    }
    if let Tok::Ident(k) = ts.peek() {
        if k == "select" {
            ts.next();
            loop {
                let binder = ts.expect_ident()?;
                check_name(ts, &binder)?;
                ts.expect(Tok::Colon)?;
                let lo = ts.expect_signed_int()?;
                ts.expect(Tok::DotDot)?;
                let hi = ts.expect_signed_int()?;
                edge.selects.push((binder, lo, hi));
                if !ts.eat(Tok::Comma) {
                    break;
                }
            }
        }
    }
    ts.eat(Tok::Semi);
    Ok(edge)
}

/// Expression grammar shared by guards, updates, `g0`, and formula atoms.
///
///   or   := and (`||` and)*
///   and  := rel (`&&` rel)*
///   rel  := sum (cmpop sum | cmpop `[` ints `]`)?
///   sum  := prod ((`+`|`-`) prod)*
///   prod := unary ((`*`|`/`|`%`) unary)*
///   unary:= `-` unary | `!` unary | atom
///   atom := int | `true` | `false` | qualified-ident (`[` or `]`)? | `(` or `)`
pub(crate) fn parse_expr(ts: &mut TokenStream) -> Result<RawExpr> {
    parse_or(ts)
}

/// A single relational expression (no `&&`/`||`); the formula grammar keeps
/// boolean structure at the formula level so location atoms stay bare.
pub(crate) fn parse_rel_expr(ts: &mut TokenStream) -> Result<RawExpr> {
    parse_rel(ts)
}

fn parse_or(ts: &mut TokenStream) -> Result<RawExpr> {
    let mut e = parse_and(ts)?;
    while ts.eat(Tok::OrOr) {
        let r = parse_and(ts)?;
        e = RawExpr::Or(Box::new(e), Box::new(r));
    }
    Ok(e)
}

fn parse_and(ts: &mut TokenStream) -> Result<RawExpr> {
    let mut e = parse_rel(ts)?;
    while ts.eat(Tok::AndAnd) {
        let r = parse_rel(ts)?;
        e = RawExpr::And(Box::new(e), Box::new(r));
    }
    Ok(e)
}

fn cmp_of(t: &Tok) -> Option<CmpOp> {
    match t {
        Tok::Eq => Some(CmpOp::Eq),
        Tok::Ne => Some(CmpOp::Ne),
        Tok::Lt => Some(CmpOp::Lt),
        Tok::Le => Some(CmpOp::Le),
        Tok::Gt => Some(CmpOp::Gt),
        Tok::Ge => Some(CmpOp::Ge),
        _ => None,
    }
}

fn parse_rel(ts: &mut TokenStream) -> Result<RawExpr> {
    let lhs = parse_sum(ts)?;
    if let Some(op) = cmp_of(ts.peek()) {
        ts.next();
        if *ts.peek() == Tok::LBracket {
            // whole-array comparison: lhs must be a plain identifier
            let name = match &lhs {
                RawExpr::Ident(n) => n.clone(),
                _ => {
                    return Err(
                        ts.error("vector literal comparison requires an array variable on the left")
                    )
                }
            };
            let negated = match op {
                CmpOp::Eq => false,
                CmpOp::Ne => true,
                _ => return Err(ts.error("vector literals support only `==` and `!=`")),
            };
            ts.next();
            let mut values = Vec::new();
            loop {
                values.push(ts.expect_signed_int()?);
                if !ts.eat(Tok::Comma) {
                    break;
                }
            }
            ts.expect(Tok::RBracket)?;
            return Ok(RawExpr::ArrayCmp {
                name,
                negated,
                values,
            });
        }
        let rhs = parse_sum(ts)?;
        return Ok(RawExpr::Cmp(op, Box::new(lhs), Box::new(rhs)));
    }
    Ok(lhs)
}

fn parse_sum(ts: &mut TokenStream) -> Result<RawExpr> {
    let mut e = parse_prod(ts)?;
    loop {
        let op = match ts.peek() {
            Tok::Plus => ArithOp::Add,
            Tok::Minus => ArithOp::Sub,
            _ => break,
        };
        ts.next();
        let r = parse_prod(ts)?;
        e = RawExpr::Arith(op, Box::new(e), Box::new(r));
    }
    Ok(e)
}

fn parse_prod(ts: &mut TokenStream) -> Result<RawExpr> {
    let mut e = parse_unary(ts)?;
    loop {
        let op = match ts.peek() {
            Tok::Star => ArithOp::Mul,
            Tok::Slash => ArithOp::Div,
            Tok::Percent => ArithOp::Rem,
            _ => break,
        };
        ts.next();
        let r = parse_unary(ts)?;
        e = RawExpr::Arith(op, Box::new(e), Box::new(r));
    }
    Ok(e)
}

fn parse_unary(ts: &mut TokenStream) -> Result<RawExpr> {
    if ts.eat(Tok::Minus) {
        return Ok(RawExpr::Neg(Box::new(parse_unary(ts)?)));
    }
    if ts.eat(Tok::Bang) {
        return Ok(RawExpr::Not(Box::new(parse_unary(ts)?)));
    }
    parse_atom(ts)
}

fn parse_atom(ts: &mut TokenStream) -> Result<RawExpr> {
    match ts.peek().clone() {
        Tok::Int(v) => {
            ts.next();
            Ok(RawExpr::Int(v))
        }
        Tok::Ident(name) => {
            if name == "true" {
                ts.next();
                return Ok(RawExpr::Bool(true));
            }
            if name == "false" {
                ts.next();
                return Ok(RawExpr::Bool(false));
            }
            let q = ts.expect_qualified()?;
            if ts.eat(Tok::LBracket) {
                let ix = parse_expr(ts)?;
                ts.expect(Tok::RBracket)?;
                Ok(RawExpr::Index(q, Box::new(ix)))
            } else {
                Ok(RawExpr::Ident(q))
            }
        }
        Tok::LParen => {
            ts.next();
            let e = parse_expr(ts)?;
            ts.expect(Tok::RParen)?;
            Ok(e)
        }
        other => Err(ts.error(&format!("expected an expression, found {other}"))),
    }
}

/// Parses and validates a complete system.
pub fn parse_mas(src: &str, file: &str) -> Result<MasGraph> {
    let raw = parse_raw(src, file)?;
    crate::resolve::resolve(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_system_parses() {
        let src = "
            # one agent, one location, no edges
            agent A {
              var x: 0..0 = 0;
              loc only;
              init only;
            }
        ";
        let g = parse_mas(src, "<test>").unwrap();
        assert_eq!(g.agents.len(), 1);
        assert_eq!(g.agents[0].locations, vec!["only"]);
        assert!(g.agents[0].edges.is_empty());
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_mas("agent A {\n  loc a b;\n}", "<test>").unwrap_err();
        match err {
            MasgError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_constructs() {
        let err = parse_mas("network N {}", "<test>").unwrap_err();
        assert!(matches!(err, MasgError::Syntax { .. }));
    }

    #[test]
    fn full_edge_clause_parses() {
        let src = "
            system {
              var sh: 0..3 = 0;
              chan c;
            }
            agent A {
              var x: 0..3 = 0;
              loc a, b;
              init a;
              edge a -> b [x == 0 && sh < 3] sync(c!) do x := i; sh := x select i: 1..3
            }
            agent B {
              loc r;
              init r;
              edge r -> r sync(c?)
            }
        ";
        let g = parse_mas(src, "<test>").unwrap();
        // select expanded into three edges
        assert_eq!(g.agents[0].edges.len(), 3);
        assert!(g.agents[0].edges.iter().all(|e| e.sync.is_some()));
    }
}
