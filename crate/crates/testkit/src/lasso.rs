//! Brute-force formula evaluation by lasso enumeration: every infinite path
//! of a finite serial model is ultimately periodic, and a quantified path
//! property fails somewhere iff it fails on a path whose cycle closes at the
//! first repeated state. The evaluator walks all such lassos explicitly and
//! applies the semantic clauses directly, with none of the fixpoint
//! machinery of the production checker.

use masg_core::formula::{Formula, StateF};
use masg_core::lts::Model;

pub struct BruteForceBudget {
    pub lassos: usize,
}

impl Default for BruteForceBudget {
    fn default() -> Self {
        BruteForceBudget { lassos: 2_000_000 }
    }
}

struct Ctx<'a> {
    m: &'a Model,
    atom_props: Vec<Option<u32>>,
    paper_until: bool,
    remaining: usize,
}

impl<'a> Ctx<'a> {
    fn holds_atom(&self, atom: usize, s: u32) -> bool {
        match self.atom_props[atom] {
            Some(p) => self.m.has_prop(s, p),
            None => false,
        }
    }

    fn state_holds(&mut self, f: &StateF, s: u32) -> Option<bool> {
        Some(match f {
            StateF::True => true,
            StateF::False => false,
            StateF::Atom(i) => self.holds_atom(*i as usize, s),
            StateF::NegAtom(i) => !self.holds_atom(*i as usize, s),
            StateF::And(xs) => {
                for x in xs {
                    if !self.state_holds(x, s)? {
                        return Some(false);
                    }
                }
                true
            }
            StateF::Or(xs) => {
                for x in xs {
                    if self.state_holds(x, s)? {
                        return Some(true);
                    }
                }
                false
            }
            StateF::Next(_) | StateF::Until(..) | StateF::Globally(_) => {
                self.all_lassos_satisfy(f, s)?
            }
        })
    }

    /// Walks every lasso from `s` (paths closing at their first repeated
    /// state) and applies the path clause on each.
    fn all_lassos_satisfy(&mut self, f: &StateF, s: u32) -> Option<bool> {
        let mut path = vec![s];
        self.dfs(f, &mut path)
    }

    fn dfs(&mut self, f: &StateF, path: &mut Vec<u32>) -> Option<bool> {
        let last = *path.last().unwrap();
        for t in self.m.successors(last) {
            if let Some(at) = path.iter().position(|x| x == t) {
                if self.remaining == 0 {
                    return None;
                }
                self.remaining -= 1;
                if !self.lasso_satisfies(f, path, at)? {
                    return Some(false);
                }
            } else {
                path.push(*t);
                let ok = self.dfs(f, path)?;
                path.pop();
                if !ok {
                    return Some(false);
                }
            }
        }
        Some(true)
    }

    /// Applies the path clause to the ultimately periodic word
    /// `path[0..], path[at..] repeated`.
    fn lasso_satisfies(&mut self, f: &StateF, path: &[u32], cycle_at: usize) -> Option<bool> {
        let total = path.len();
        let state_at = |j: usize| -> u32 {
            if j < total {
                path[j]
            } else {
                let c = total - cycle_at;
                path[cycle_at + (j - cycle_at) % c]
            }
        };
        Some(match f {
            StateF::Next(p) => self.state_holds(p, state_at(1))?,
            StateF::Globally(p) => {
                for j in 0..total {
                    if !self.state_holds(p, state_at(j))? {
                        return Some(false);
                    }
                }
                true
            }
            StateF::Until(a, b) => {
                // positions 0 .. total + cycle cover every distinct suffix
                let horizon = total + (total - cycle_at);
                let first_constrained = if self.paper_until { 1 } else { 0 };
                'outer: for j in 0..horizon {
                    if self.state_holds(b, state_at(j))? {
                        for i in first_constrained..j {
                            if !self.state_holds(a, state_at(i))? {
                                continue 'outer;
                            }
                        }
                        return Some(true);
                    }
                }
                false
            }
            other => self.state_holds(other, state_at(0))?,
        })
    }
}

/// Evaluates a formula by explicit lasso enumeration. `None` when the
/// enumeration budget is exhausted.
pub fn brute_force_check(
    m: &Model,
    f: &Formula,
    paper_until: bool,
    budget: &BruteForceBudget,
) -> Option<bool> {
    let atom_props = f
        .atoms
        .iter()
        .map(|a| m.prop_id(a.prop_name()))
        .collect();
    let mut ctx = Ctx {
        m,
        atom_props,
        paper_until,
        remaining: budget.lassos,
    };
    for s0 in m.initial.clone() {
        if !ctx.state_holds(&f.root, s0)? {
            return Some(false);
        }
    }
    Some(true)
}
