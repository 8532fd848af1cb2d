//! Explicit-state unwrapping of a combined graph into a serial labelled
//! transition system, plus reachability and proposition utilities.
//!
//! States are `(location, evaluation)` pairs with dense ids assigned in BFS
//! order; a state's successors are expanded sorted by (target location,
//! target evaluation), so equal inputs always produce identical models.
//! A self-loop is added exactly at states with no ordinary successor, which
//! keeps the transition relation serial.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ast::{Expr, Value, VarDomain};
use crate::compose::CombinedGraph;
use crate::error::{MasgError, Result};
use crate::eval::{self, eval_guard};
use crate::print::canonical_expr;

pub const DEFAULT_STATE_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropKind {
    /// A location proposition; holds at states whose location carries it.
    Location,
    /// A guard proposition over the named variables (slot names).
    Guard { vars: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropDef {
    pub name: String,
    pub kind: PropKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub loc: u32,
    pub vals: Box<[Value]>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnwrapStats {
    pub states: usize,
    pub transitions: usize,
    pub closure_loops: usize,
    /// Edge firings skipped because guard or update evaluation errored.
    pub eval_errors: u64,
    pub millis: u128,
}

/// An explicit serial model. Self-contained: everything is name-based so a
/// dumped model can be reloaded and compared against models from other
/// systems.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    /// One name per value slot (`Agent.x`, `tally[2]`, ...).
    pub slot_names: Vec<String>,
    /// Variable name per slot (arrays collapse to their base name).
    pub slot_vars: Vec<String>,
    pub loc_names: Vec<String>,
    /// Proposition ids labelling each location.
    pub loc_props: Vec<Vec<u32>>,
    pub props: Vec<PropDef>,
    /// Guard propositions, as indexes into `props`; bit `i` of a state's
    /// guard mask corresponds to `guard_props[i]`.
    pub guard_props: Vec<u32>,
    pub states: Vec<State>,
    pub initial: Vec<u32>,
    pub guard_masks: Vec<u64>,
    succ_off: Vec<u64>,
    succ: Vec<u32>,
    pub stats: UnwrapStats,
}

impl Model {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn successors(&self, s: u32) -> &[u32] {
        let a = self.succ_off[s as usize] as usize;
        let b = self.succ_off[s as usize + 1] as usize;
        &self.succ[a..b]
    }

    pub fn transition_count(&self) -> usize {
        self.succ.len()
    }

    /// Proposition ids holding at a state, sorted.
    pub fn labels(&self, s: u32) -> Vec<u32> {
        let st = &self.states[s as usize];
        let mut out = self.loc_props[st.loc as usize].clone();
        let mask = self.guard_masks[s as usize];
        for (i, p) in self.guard_props.iter().enumerate() {
            if mask & (1 << i) != 0 {
                out.push(*p);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn prop_id(&self, name: &str) -> Option<u32> {
        self.props
            .iter()
            .position(|p| p.name == name)
            .map(|i| i as u32)
    }

    pub fn has_prop(&self, s: u32, prop: u32) -> bool {
        let st = &self.states[s as usize];
        if self.loc_props[st.loc as usize].contains(&prop) {
            return true;
        }
        match self.guard_props.iter().position(|p| *p == prop) {
            Some(i) => self.guard_masks[s as usize] & (1 << i) != 0,
            None => false,
        }
    }

    /// Slot index of a scalar variable or array cell by display name.
    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.slot_names.iter().position(|n| n == name)
    }

    /// Ids of states reachable from the initial set.
    pub fn reachable(&self) -> Vec<u32> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<u32> = Vec::new();
        for i in &self.initial {
            if !seen[*i as usize] {
                seen[*i as usize] = true;
                stack.push(*i);
            }
        }
        while let Some(s) = stack.pop() {
            for t in self.successors(s) {
                if !seen[*t as usize] {
                    seen[*t as usize] = true;
                    stack.push(*t);
                }
            }
        }
        (0..self.len() as u32).filter(|s| seen[*s as usize]).collect()
    }

    /// Propositions that only use variables from `keep` (variable names),
    /// plus all location propositions.
    pub fn project_ap(&self, keep: &[String]) -> Vec<u32> {
        self.props
            .iter()
            .enumerate()
            .filter(|(_, p)| match &p.kind {
                PropKind::Location => true,
                PropKind::Guard { vars } => vars.iter().all(|v| keep.contains(v)),
            })
            .map(|(i, _)| i as u32)
            .collect()
    }

    /// Builds a bare labelled transition system: one location per state,
    /// labelled with the given proposition names. Used for models that do
    /// not come from a system (randomized checker tests, hand-built
    /// counterexamples).
    pub fn synthetic(successors: Vec<Vec<u32>>, labels: Vec<Vec<String>>, initial: Vec<u32>) -> Model {
        assert_eq!(successors.len(), labels.len());
        let n = successors.len();
        let mut props: Vec<PropDef> = Vec::new();
        let mut prop_ids: HashMap<String, u32> = HashMap::new();
        let mut loc_props = Vec::with_capacity(n);
        for ls in &labels {
            let mut ids = Vec::new();
            for l in ls {
                let id = *prop_ids.entry(l.clone()).or_insert_with(|| {
                    props.push(PropDef {
                        name: l.clone(),
                        kind: PropKind::Location,
                    });
                    (props.len() - 1) as u32
                });
                ids.push(id);
            }
            ids.sort_unstable();
            ids.dedup();
            loc_props.push(ids);
        }
        let mut succ_off = vec![0u64];
        let mut succ = Vec::new();
        for (s, ts) in successors.iter().enumerate() {
            let mut ts = ts.clone();
            ts.sort_unstable();
            ts.dedup();
            if ts.is_empty() {
                // serial closure
                succ.push(s as u32);
            } else {
                succ.extend_from_slice(&ts);
            }
            succ_off.push(succ.len() as u64);
        }
        let transitions = succ.len();
        Model {
            slot_names: Vec::new(),
            slot_vars: Vec::new(),
            loc_names: (0..n).map(|i| format!("s{i}")).collect(),
            loc_props,
            props,
            guard_props: Vec::new(),
            states: (0..n)
                .map(|i| State {
                    loc: i as u32,
                    vals: Box::from([]),
                })
                .collect(),
            initial,
            guard_masks: vec![0; n],
            succ_off,
            succ,
            stats: UnwrapStats {
                states: n,
                transitions,
                ..Default::default()
            },
        }
    }

    pub fn to_json(&self) -> String {
        let env = ModelEnvelope {
            format: "masg-model".into(),
            version: 1,
            model: self.clone(),
        };
        serde_json::to_string(&env).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let env: ModelEnvelope =
            serde_json::from_str(text).map_err(|e| MasgError::Dump(e.to_string()))?;
        if env.format != "masg-model" || env.version != 1 {
            return Err(MasgError::Dump(format!(
                "unsupported model dump `{}` version {}",
                env.format, env.version
            )));
        }
        Ok(env.model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelEnvelope {
    format: String,
    version: u32,
    model: Model,
}

#[derive(Debug, Clone)]
pub struct UnwrapOptions {
    pub max_states: usize,
    /// Guard propositions to label states with.
    pub requested_guards: Vec<Expr>,
}

impl Default for UnwrapOptions {
    fn default() -> Self {
        UnwrapOptions {
            max_states: DEFAULT_STATE_BUDGET,
            requested_guards: Vec::new(),
        }
    }
}

fn slot_names(g: &CombinedGraph) -> (Vec<String>, Vec<String>) {
    let mut names = Vec::new();
    let mut vars = Vec::new();
    for (_, info) in g.mas.vtable.iter() {
        match &info.decl.domain {
            VarDomain::Scalar(_) => {
                names.push(info.qualified.clone());
                vars.push(info.qualified.clone());
            }
            VarDomain::Array { index, .. } => {
                for i in index.lo..=index.hi {
                    names.push(format!("{}[{}]", info.qualified, i));
                    vars.push(info.qualified.clone());
                }
            }
        }
    }
    (names, vars)
}

/// Builds the proposition table: per-agent location props (qualified, plus
/// the bare name when unique system-wide), tuple props per combined location,
/// and the requested guard props.
fn build_props(
    g: &CombinedGraph,
    guards: &[Expr],
) -> Result<(Vec<PropDef>, Vec<Vec<u32>>, Vec<u32>)> {
    let mut props: Vec<PropDef> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut intern = |props: &mut Vec<PropDef>, name: String, kind: PropKind| -> u32 {
        if let Some(id) = index.get(&name) {
            return *id;
        }
        let id = props.len() as u32;
        props.push(PropDef {
            name: name.clone(),
            kind,
        });
        index.insert(name, id);
        id
    };

    // multiplicity of bare location names across agents
    let mut bare_count: HashMap<&str, usize> = HashMap::new();
    for a in &g.mas.agents {
        for l in &a.locations {
            *bare_count.entry(l.as_str()).or_default() += 1;
        }
    }

    let mut loc_props = Vec::with_capacity(g.loc_count());
    for loc in 0..g.loc_count() {
        let mut ps = Vec::new();
        if g.mas.agents.len() > 1 {
            ps.push(intern(&mut props, g.loc_name(loc), PropKind::Location));
        }
        for (ai, comp) in g.locations[loc].iter().enumerate() {
            let agent = &g.mas.agents[ai];
            let lname = &agent.locations[*comp as usize];
            ps.push(intern(
                &mut props,
                format!("{}.{}", agent.name, lname),
                PropKind::Location,
            ));
            if bare_count[lname.as_str()] == 1 {
                ps.push(intern(&mut props, lname.clone(), PropKind::Location));
            }
        }
        ps.sort_unstable();
        ps.dedup();
        loc_props.push(ps);
    }

    if guards.len() > 64 {
        return Err(MasgError::Validation(format!(
            "{} guard propositions requested; at most 64 are supported",
            guards.len()
        )));
    }
    let mut guard_props = Vec::new();
    for gexpr in guards {
        let name = canonical_expr(gexpr, &g.mas.vtable);
        let vars = eval::vars_of_expr(gexpr, &g.mas.vtable)
            .vars()
            .iter()
            .map(|v| g.mas.vtable.info(*v).qualified.clone())
            .collect();
        guard_props.push(intern(&mut props, name, PropKind::Guard { vars }));
    }
    Ok((props, loc_props, guard_props))
}

/// Unwraps a combined graph into its explicit serial model, labelling states
/// with location propositions and the requested guard propositions.
pub fn unwrap(g: &CombinedGraph, opts: &UnwrapOptions) -> Result<Model> {
    let start = std::time::Instant::now();
    let table = &g.mas.vtable;
    for gd in &opts.requested_guards {
        if crate::resolve::type_of(gd) != crate::resolve::ExprType::Bool {
            return Err(MasgError::Type(format!(
                "requested guard proposition `{}` is not boolean",
                canonical_expr(gd, table)
            )));
        }
    }
    let (props, loc_props, guard_props) = build_props(g, &opts.requested_guards)?;

    let mut states: Vec<State> = Vec::new();
    let mut ids: HashMap<(u32, Box<[Value]>), u32> = HashMap::new();
    let mut guard_masks: Vec<u64> = Vec::new();
    let mut succ_off: Vec<u64> = vec![0];
    let mut succ: Vec<u32> = Vec::new();
    let mut eval_errors = 0u64;
    let mut closure_loops = 0usize;

    let mut mask_of = |vals: &[Value], errs: &mut u64| -> u64 {
        let mut m = 0u64;
        for (i, gexpr) in opts.requested_guards.iter().enumerate() {
            match eval_guard(gexpr, vals, table) {
                Ok(true) => m |= 1 << i,
                Ok(false) => {}
                Err(_) => *errs += 1,
            }
        }
        m
    };

    // single initial state: the unique initial evaluation at the initial location
    let init_state = State {
        loc: g.init as u32,
        vals: g.mas.eta0.clone(),
    };
    ids.insert((init_state.loc, init_state.vals.clone()), 0);
    guard_masks.push(mask_of(&init_state.vals, &mut eval_errors));
    states.push(init_state);

    let mut next_unexpanded = 0usize;
    let mut scratch_succ: Vec<(u32, Box<[Value]>)> = Vec::new();
    while next_unexpanded < states.len() {
        let sid = next_unexpanded;
        next_unexpanded += 1;
        let (loc, vals) = {
            let s = &states[sid];
            (s.loc, s.vals.clone())
        };
        scratch_succ.clear();
        for e in &g.edges[loc as usize] {
            match eval_guard(&e.guard, &vals, table) {
                Ok(true) => {}
                Ok(false) => continue,
                Err(_) => {
                    eval_errors += 1;
                    continue;
                }
            }
            match eval::effect(&e.update, &vals, table) {
                Ok(nv) => scratch_succ.push((e.dst as u32, nv)),
                Err(_) => {
                    eval_errors += 1;
                    continue;
                }
            }
        }
        scratch_succ.sort();
        scratch_succ.dedup();
        if scratch_succ.is_empty() {
            // serial closure
            succ.push(sid as u32);
            closure_loops += 1;
        } else {
            for (dloc, dvals) in scratch_succ.drain(..) {
                let key = (dloc, dvals);
                let id = match ids.get(&key) {
                    Some(id) => *id,
                    None => {
                        if states.len() >= opts.max_states {
                            return Err(MasgError::StateBudget {
                                explored: states.len(),
                                cap: opts.max_states,
                                frontier: states.len() - next_unexpanded,
                            });
                        }
                        let id = states.len() as u32;
                        guard_masks.push(mask_of(&key.1, &mut eval_errors));
                        states.push(State {
                            loc: key.0,
                            vals: key.1.clone(),
                        });
                        ids.insert(key, id);
                        id
                    }
                };
                succ.push(id);
            }
        }
        succ_off.push(succ.len() as u64);
    }

    if eval_errors > 0 {
        log::warn!("unwrap: {eval_errors} guard/update evaluations errored; affected edges treated as disabled");
    }

    let (names, vars) = slot_names(g);
    let stats = UnwrapStats {
        states: states.len(),
        transitions: succ.len(),
        closure_loops,
        eval_errors,
        millis: start.elapsed().as_millis(),
    };
    Ok(Model {
        slot_names: names,
        slot_vars: vars,
        loc_names: (0..g.loc_count()).map(|l| g.loc_name(l)).collect(),
        loc_props,
        props,
        guard_props,
        states,
        initial: vec![0],
        guard_masks,
        succ_off,
        succ,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::combine;
    use crate::parse::parse_mas;

    fn model_of(src: &str, guards: Vec<&str>) -> Model {
        let mas = parse_mas(src, "<t>").unwrap();
        let g = combine(&mas).unwrap();
        let parsed: Vec<Expr> = guards
            .iter()
            .map(|t| crate::formula::parse_guard_expr(t, &mas.vtable).unwrap())
            .collect();
        unwrap(
            &g,
            &UnwrapOptions {
                requested_guards: parsed,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn single_location_no_edges_gets_self_loop() {
        let m = model_of("agent A { var x: 0..0 = 0; loc only; init only; }", vec![]);
        assert_eq!(m.len(), 1);
        assert_eq!(m.successors(0), &[0]);
        assert_eq!(m.stats.closure_loops, 1);
    }

    #[test]
    fn seriality_holds_everywhere() {
        let m = model_of(
            "agent A { var x: 0..3 = 0; loc a, b; init a;
              edge a -> b [x < 3] do x := x + 1
              edge b -> a }",
            vec![],
        );
        for s in 0..m.len() as u32 {
            assert!(!m.successors(s).is_empty());
        }
    }

    #[test]
    fn closure_loop_only_at_dead_states() {
        let m = model_of(
            "agent A { var x: 0..1 = 0; loc a; init a; edge a -> a [x == 0] do x := 1 }",
            vec![],
        );
        // state x=0 has a real move; state x=1 is dead and self-loops
        assert_eq!(m.len(), 2);
        assert_eq!(m.successors(0), &[1]);
        assert_eq!(m.successors(1), &[1]);
        assert_eq!(m.stats.closure_loops, 1);
    }

    #[test]
    fn unwrap_is_deterministic() {
        let src = "
            system { chan c; }
            agent A { var x: 0..2 = 0; loc a, b; init a;
              edge a -> b sync(c!) do x := i select i: 1..2
              edge b -> a }
            agent B { var y: 0..2 = 0; loc r, s; init r;
              edge r -> s sync(c?) do y := 2
              edge s -> r do y := 0 }
        ";
        let m1 = model_of(src, vec!["A.x == 1"]);
        let m2 = model_of(src, vec!["A.x == 1"]);
        assert_eq!(m1.states, m2.states);
        assert_eq!(m1.succ, m2.succ);
        assert_eq!(m1.guard_masks, m2.guard_masks);
    }

    #[test]
    fn labels_contain_location_and_satisfied_guards() {
        let m = model_of(
            "agent A { var x: 0..1 = 0; loc a, b; init a; edge a -> b do x := 1 }",
            vec!["A.x == 1"],
        );
        let a = m.prop_id("a").unwrap();
        let guard = m.prop_id("A.x == 1").unwrap();
        assert!(m.has_prop(0, a));
        assert!(!m.has_prop(0, guard));
        assert!(m.has_prop(1, guard));
    }

    #[test]
    fn project_ap_filters_guard_props() {
        let m = model_of(
            "agent A { var x: 0..1 = 0; var y: 0..1 = 0; loc a; init a; }",
            vec!["A.x == 1", "A.y == 0"],
        );
        let all = m.project_ap(&["A.x".into(), "A.y".into()]);
        assert_eq!(all.len(), m.props.len());
        let no_x = m.project_ap(&["A.y".into()]);
        let x_prop = m.prop_id("A.x == 1").unwrap();
        assert!(!no_x.contains(&x_prop));
        let only_locs = m.project_ap(&[]);
        assert_eq!(
            only_locs.len(),
            m.props
                .iter()
                .filter(|p| matches!(p.kind, PropKind::Location))
                .count()
        );
    }

    #[test]
    fn budget_exceeded_is_resource_error() {
        let mas = parse_mas(
            "agent A { var x: 0..9 = 0; var y: 0..9 = 0; loc a; init a;
               edge a -> a [x < 9] do x := x + 1
               edge a -> a [y < 9] do y := y + 1 }",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        let err = unwrap(
            &g,
            &UnwrapOptions {
                max_states: 10,
                requested_guards: vec![],
            },
        )
        .unwrap_err();
        assert!(matches!(err, MasgError::StateBudget { .. }));
    }

    #[test]
    fn model_json_round_trip() {
        let m = model_of(
            "agent A { var x: 0..1 = 0; loc a, b; init a; edge a -> b do x := 1 }",
            vec!["A.x == 1"],
        );
        let text = m.to_json();
        let m2 = Model::from_json(&text).unwrap();
        assert_eq!(m.states, m2.states);
        assert_eq!(m.props, m2.props);
        assert_eq!(m.succ, m2.succ);
    }
}
