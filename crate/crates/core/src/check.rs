//! Fixpoint evaluation of universal branching-time formulas on explicit
//! serial models, with lasso counterexamples for failed `A[]`/`A<>`
//! properties.
//!
//! `AX` is the universal preimage, `A(φ U ψ)` a least fixpoint computed with
//! the linear counting algorithm over predecessor lists, and `A[] φ` the
//! complement of backward reachability of `!φ`. The default until-semantics
//! constrains positions `0..j-1` of a path; the alternative that leaves
//! position 0 unconstrained is available via [`CheckOptions::paper_until`].

use serde::{Deserialize, Serialize};

use crate::error::{MasgError, Result};
use crate::formula::{Atom, Formula, StateF};
use crate::lts::Model;

#[derive(Debug, Clone, Default)]
pub struct CheckOptions {
    /// Until leaves the path's first state unconstrained by the left operand.
    pub paper_until: bool,
}

/// A lasso-shaped run: a finite prefix followed by a cycle, both as state
/// ids; the cycle's last state has the cycle's first as successor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lasso {
    pub prefix: Vec<u32>,
    pub cycle: Vec<u32>,
}

impl Lasso {
    /// All transitions of the lasso are present in the model and the prefix
    /// starts at an initial state.
    pub fn replays_in(&self, m: &Model) -> bool {
        if self.cycle.is_empty() {
            return false;
        }
        let full: Vec<u32> = self
            .prefix
            .iter()
            .chain(self.cycle.iter())
            .copied()
            .collect();
        if !m.initial.contains(&full[0]) {
            return false;
        }
        for w in full.windows(2) {
            if !m.successors(w[0]).contains(&w[1]) {
                return false;
            }
        }
        let last = *self.cycle.last().unwrap();
        m.successors(last).contains(&self.cycle[0])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub witness: Option<Lasso>,
}

/// Dense bit set over state ids.
#[derive(Clone, PartialEq, Eq)]
pub(crate) struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub(crate) fn new(len: usize, value: bool) -> Self {
        let fill = if value { !0u64 } else { 0 };
        let mut words = vec![fill; len.div_ceil(64)];
        if value && len % 64 != 0 {
            *words.last_mut().unwrap() = (1u64 << (len % 64)) - 1;
        }
        Bits { words, len }
    }

    pub(crate) fn get(&self, i: u32) -> bool {
        self.words[i as usize / 64] & (1 << (i % 64)) != 0
    }

    pub(crate) fn set(&mut self, i: u32) {
        self.words[i as usize / 64] |= 1 << (i % 64);
    }

    pub(crate) fn clear(&mut self, i: u32) {
        self.words[i as usize / 64] &= !(1 << (i % 64));
    }

    fn and_with(&mut self, other: &Bits) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    fn or_with(&mut self, other: &Bits) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    fn negate(&mut self) {
        for w in self.words.iter_mut() {
            *w = !*w;
        }
        if self.len % 64 != 0 {
            *self.words.last_mut().unwrap() &= (1u64 << (self.len % 64)) - 1;
        }
    }

    pub(crate) fn to_vec(&self) -> Vec<bool> {
        (0..self.len as u32).map(|i| self.get(i)).collect()
    }
}

/// Predecessor lists in compressed form.
struct Preds {
    off: Vec<u32>,
    list: Vec<u32>,
}

fn build_preds(m: &Model) -> Preds {
    let n = m.len();
    let mut deg = vec![0u32; n];
    for s in 0..n as u32 {
        for t in m.successors(s) {
            deg[*t as usize] += 1;
        }
    }
    let mut off = vec![0u32; n + 1];
    for i in 0..n {
        off[i + 1] = off[i] + deg[i];
    }
    let mut fill = off.clone();
    let mut list = vec![0u32; off[n] as usize];
    for s in 0..n as u32 {
        for t in m.successors(s) {
            list[fill[*t as usize] as usize] = s;
            fill[*t as usize] += 1;
        }
    }
    Preds { off, list }
}

impl Preds {
    fn of(&self, s: u32) -> &[u32] {
        &self.list[self.off[s as usize] as usize..self.off[s as usize + 1] as usize]
    }
}

struct Evaluator<'a> {
    m: &'a Model,
    atom_bits: Vec<Bits>,
    preds: Preds,
    paper_until: bool,
}

impl<'a> Evaluator<'a> {
    fn eval(&self, f: &StateF) -> Bits {
        let n = self.m.len();
        match f {
            StateF::True => Bits::new(n, true),
            StateF::False => Bits::new(n, false),
            StateF::Atom(i) => self.atom_bits[*i as usize].clone(),
            StateF::NegAtom(i) => {
                let mut b = self.atom_bits[*i as usize].clone();
                b.negate();
                b
            }
            StateF::And(xs) => {
                let mut acc = Bits::new(n, true);
                for x in xs {
                    acc.and_with(&self.eval(x));
                }
                acc
            }
            StateF::Or(xs) => {
                let mut acc = Bits::new(n, false);
                for x in xs {
                    acc.or_with(&self.eval(x));
                }
                acc
            }
            StateF::Next(p) => self.all_next(&self.eval(p)),
            StateF::Until(a, b) => {
                let ab = self.eval(a);
                let bb = self.eval(b);
                let std = self.all_until(&ab, &bb);
                if self.paper_until {
                    // first state unconstrained by the left operand:
                    // b holds now, or every successor satisfies standard until
                    let mut out = self.all_next(&std);
                    out.or_with(&bb);
                    out
                } else {
                    std
                }
            }
            StateF::Globally(p) => self.all_globally(&self.eval(p)),
        }
    }

    /// States all of whose successors lie in `set`.
    fn all_next(&self, set: &Bits) -> Bits {
        let n = self.m.len();
        let mut out = Bits::new(n, false);
        'outer: for s in 0..n as u32 {
            for t in self.m.successors(s) {
                if !set.get(*t) {
                    continue 'outer;
                }
            }
            out.set(s);
        }
        out
    }

    /// Least fixpoint of `b ∨ (a ∧ AX ·)`.
    fn all_until(&self, a: &Bits, b: &Bits) -> Bits {
        let n = self.m.len();
        let mut result = b.clone();
        let mut count: Vec<u32> = (0..n as u32)
            .map(|s| self.m.successors(s).len() as u32)
            .collect();
        let mut queue: Vec<u32> = (0..n as u32).filter(|s| b.get(*s)).collect();
        let mut head = 0;
        while head < queue.len() {
            let t = queue[head];
            head += 1;
            for p in self.preds.of(t) {
                let p = *p;
                count[p as usize] -= 1;
                if count[p as usize] == 0 && a.get(p) && !result.get(p) {
                    result.set(p);
                    queue.push(p);
                }
            }
        }
        result
    }

    /// Greatest fixpoint of `p ∧ AX ·`: complement of backward reachability
    /// of the complement of `p`.
    fn all_globally(&self, p: &Bits) -> Bits {
        let n = self.m.len();
        let mut can_reach_bad = p.clone();
        can_reach_bad.negate();
        let mut queue: Vec<u32> = (0..n as u32).filter(|s| can_reach_bad.get(*s)).collect();
        let mut head = 0;
        while head < queue.len() {
            let t = queue[head];
            head += 1;
            for s in self.preds.of(t) {
                if !can_reach_bad.get(*s) {
                    can_reach_bad.set(*s);
                    queue.push(*s);
                }
            }
        }
        can_reach_bad.negate();
        can_reach_bad
    }
}

fn atom_bits(m: &Model, atoms: &[Atom]) -> Result<Vec<Bits>> {
    let n = m.len();
    let mut out = Vec::with_capacity(atoms.len());
    for a in atoms {
        let name = a.prop_name();
        let prop = m
            .prop_id(name)
            .ok_or_else(|| MasgError::MissingAtom(name.to_string()))?;
        let mut bits = Bits::new(n, false);
        for s in 0..n as u32 {
            if m.has_prop(s, prop) {
                bits.set(s);
            }
        }
        out.push(bits);
    }
    Ok(out)
}

/// Per-state satisfaction of a formula.
pub fn satisfying_states(m: &Model, f: &Formula, opts: &CheckOptions) -> Result<Vec<bool>> {
    let ev = Evaluator {
        m,
        atom_bits: atom_bits(m, &f.atoms)?,
        preds: build_preds(m),
        paper_until: opts.paper_until,
    };
    Ok(ev.eval(&f.root).to_vec())
}

/// Checks whether the model satisfies the formula (at every initial state),
/// extracting a lasso counterexample for failed top-level `A[]` and `A<>`.
pub fn check(m: &Model, f: &Formula, opts: &CheckOptions) -> Result<Verdict> {
    let ev = Evaluator {
        m,
        atom_bits: atom_bits(m, &f.atoms)?,
        preds: build_preds(m),
        paper_until: opts.paper_until,
    };
    let sat = ev.eval(&f.root);
    let failing = m.initial.iter().copied().find(|s| !sat.get(*s));
    let holds = failing.is_none();
    let witness = match (&f.root, failing) {
        (StateF::Globally(p), Some(s0)) => {
            let mut bad = ev.eval(p);
            bad.negate();
            witness_to_bad(m, s0, &bad)
        }
        (StateF::Until(a, b), Some(s0)) if **a == StateF::True => {
            let good = ev.eval(b);
            witness_avoiding(m, s0, &good)
        }
        _ => None,
    };
    Ok(Verdict { holds, witness })
}

/// Lasso from `s0` through a state in `bad`, continued arbitrarily to close
/// a cycle.
fn witness_to_bad(m: &Model, s0: u32, bad: &Bits) -> Option<Lasso> {
    // BFS to the nearest bad state
    let n = m.len();
    let mut parent = vec![u32::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = vec![s0];
    seen[s0 as usize] = true;
    let mut head = 0;
    let mut hit = None;
    if bad.get(s0) {
        hit = Some(s0);
    }
    while hit.is_none() && head < queue.len() {
        let s = queue[head];
        head += 1;
        for t in m.successors(s) {
            if !seen[*t as usize] {
                seen[*t as usize] = true;
                parent[*t as usize] = s;
                if bad.get(*t) {
                    hit = Some(*t);
                    break;
                }
                queue.push(*t);
            }
        }
    }
    let hit = hit?;
    let mut path = vec![hit];
    let mut cur = hit;
    while cur != s0 {
        cur = parent[cur as usize];
        path.push(cur);
    }
    path.reverse();
    // extend beyond the bad state until a state repeats
    let mut positions: std::collections::HashMap<u32, usize> = path
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, i))
        .collect();
    let mut cur = *path.last().unwrap();
    loop {
        let next = m.successors(cur)[0];
        if let Some(at) = positions.get(&next) {
            let cycle = path.split_off(*at);
            return Some(Lasso {
                prefix: path,
                cycle,
            });
        }
        positions.insert(next, path.len());
        path.push(next);
        cur = next;
    }
}

/// Lasso from `s0` that never enters `good`: a walk inside the region where
/// some path avoids `good` forever.
fn witness_avoiding(m: &Model, s0: u32, good: &Bits) -> Option<Lasso> {
    // region = greatest set of !good states with a successor in the region
    let n = m.len();
    let mut region = good.clone();
    region.negate();
    loop {
        let mut changed = false;
        for s in 0..n as u32 {
            if region.get(s) && !m.successors(s).iter().any(|t| region.get(*t)) {
                region.clear(s);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !region.get(s0) {
        return None;
    }
    let mut path = vec![s0];
    let mut positions: std::collections::HashMap<u32, usize> = Default::default();
    positions.insert(s0, 0);
    let mut cur = s0;
    loop {
        let next = *m
            .successors(cur)
            .iter()
            .find(|t| region.get(**t))
            .expect("every region state keeps a region successor");
        if let Some(at) = positions.get(&next) {
            let cycle = path.split_off(*at);
            return Some(Lasso {
                prefix: path,
                cycle,
            });
        }
        positions.insert(next, path.len());
        path.push(next);
        cur = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::combine;
    use crate::formula::parse_formula;
    use crate::lts::{unwrap, UnwrapOptions};
    use crate::parse::parse_mas;

    fn checked(src: &str, formula: &str) -> (Verdict, Model) {
        let mas = parse_mas(src, "<t>").unwrap();
        let f = parse_formula(formula, &mas).unwrap();
        let g = combine(&mas).unwrap();
        let m = unwrap(
            &g,
            &UnwrapOptions {
                requested_guards: f.guard_exprs(),
                ..Default::default()
            },
        )
        .unwrap();
        (check(&m, &f, &CheckOptions::default()).unwrap(), m)
    }

    const ONE_STATE: &str = "agent A { var p: 0..1 = 1; loc only; init only; }";

    #[test]
    fn one_state_self_loop_verdicts() {
        let (v, _) = checked(ONE_STATE, "A[] (p == 1)");
        assert!(v.holds);
        let (v, _) = checked(ONE_STATE, "A<> (p == 0)");
        assert!(!v.holds);
    }

    #[test]
    fn ag_violation_produces_replayable_lasso() {
        let src = "agent A { var x: 0..2 = 0; loc a; init a; edge a -> a [x < 2] do x := x + 1 }";
        let (v, m) = checked(src, "A[] (x < 2)");
        assert!(!v.holds);
        let w = v.witness.expect("lasso expected");
        assert!(w.replays_in(&m));
        // some state on the lasso violates x < 2
        let guard = m.prop_id("A.x < 2").unwrap();
        assert!(w
            .prefix
            .iter()
            .chain(w.cycle.iter())
            .any(|s| !m.has_prop(*s, guard)));
    }

    #[test]
    fn af_violation_produces_avoiding_lasso() {
        // branch: one path loops at x=0 forever (dead), other reaches x=2
        let src = "agent A { var x: 0..2 = 0; loc a, b; init a;
                     edge a -> b do x := 1
                     edge b -> b [x == 2] do x := 2
                     edge a -> a [x == 2] }";
        let (v, m) = checked(src, "A<> (x == 1)");
        // from init, the a-self-loop is disabled (x!=2), so a->b fires... x=1 reached on all paths
        assert!(v.holds, "sanity: direct branch satisfies");
        let (v2, m2) = checked(
            "agent A { var x: 0..2 = 0; loc a, b, c; init a;
               edge a -> b do x := 1
               edge a -> c
               edge c -> c }",
            "A<> (x == 1)",
        );
        assert!(!v2.holds);
        let w = v2.witness.expect("lasso expected");
        assert!(w.replays_in(&m2));
        let guard = m2.prop_id("A.x == 1").unwrap();
        assert!(w
            .prefix
            .iter()
            .chain(w.cycle.iter())
            .all(|s| !m2.has_prop(*s, guard)));
        let _ = m;
    }

    #[test]
    fn until_semantics_differ_on_first_state() {
        // x starts at 1 (violating the left operand), then 0 -> 2 target
        let src = "agent A { var x: 0..2 = 1; loc a, b; init a;
                     edge a -> b do x := 0
                     edge b -> b [x == 0] do x := 2 }";
        let mas = parse_mas(src, "<t>").unwrap();
        let f = parse_formula("A(x == 0 U x == 2)", &mas).unwrap();
        let g = combine(&mas).unwrap();
        let m = unwrap(
            &g,
            &UnwrapOptions {
                requested_guards: f.guard_exprs(),
                ..Default::default()
            },
        )
        .unwrap();
        // standard reading: position 0 must satisfy x == 0, but x starts at 1
        let std = check(&m, &f, &CheckOptions::default()).unwrap();
        assert!(!std.holds);
        // first-state-unconstrained reading: positions 1.. satisfy x == 0
        let paper = check(&m, &f, &CheckOptions { paper_until: true }).unwrap();
        assert!(paper.holds);
    }

    #[test]
    fn missing_atom_is_hard_error() {
        let mas = parse_mas(ONE_STATE, "<t>").unwrap();
        let f = parse_formula("A[] (p == 1)", &mas).unwrap();
        let g = combine(&mas).unwrap();
        // unwrap without requesting the guard proposition
        let m = unwrap(&g, &UnwrapOptions::default()).unwrap();
        let err = check(&m, &f, &CheckOptions::default()).unwrap_err();
        assert!(matches!(err, MasgError::MissingAtom(_)));
    }

    #[test]
    fn ax_is_universal_preimage() {
        let src = "agent A { var x: 0..1 = 0; loc a, b; init a;
                     edge a -> b do x := 1
                     edge a -> b do x := 0 }";
        let (v, _) = checked(src, "AX b");
        assert!(v.holds);
        let (v2, _) = checked(src, "AX (x == 1)");
        assert!(!v2.holds);
    }
}
