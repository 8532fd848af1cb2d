//! Deterministic random generation of systems, abstractions, formulas, and
//! bare labelled models, driven by a seeded RNG.

use std::collections::BTreeSet;

use rand::prelude::*;

use masg_core::abstraction::{Mapping, MappingFn, ScopedMapping};
use masg_core::ast::{IntRange, LocId, MasGraph, Value, VarDecl, VarDomain, VarSet};
use masg_core::formula::{Atom, Formula, StateF};
use masg_core::lts::Model;
use masg_core::parse::parse_mas;

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_agents: usize,
    pub max_locs: usize,
    /// Total variable budget across the system.
    pub max_vars: usize,
    /// Largest domain size (domains are `0..size-1`).
    pub max_dom: i32,
    pub max_chans: usize,
    pub max_edges: usize,
    /// Allow guards to read variables that abstractions may remove. The
    /// edge-local abstraction cannot in general preserve liveness across
    /// such guards, so soundness suites keep this off.
    pub guards_read_candidates: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_agents: 3,
            max_locs: 4,
            max_vars: 3,
            max_dom: 3,
            max_chans: 2,
            max_edges: 5,
            guards_read_candidates: false,
        }
    }
}

pub struct GeneratedSystem {
    pub text: String,
    pub mas: MasGraph,
    /// Bare names of local variables eligible for abstraction, per agent.
    pub candidates: Vec<(usize, String)>,
}

struct VarSpec {
    name: String,
    hi: i32,
    shared: bool,
    owner: usize,
    candidate: bool,
}

/// Generates a random system as `.masg` text and parses it back.
pub fn gen_system(rng: &mut impl Rng, cfg: &GenConfig) -> GeneratedSystem {
    let n_agents = rng.gen_range(1..=cfg.max_agents);
    let n_chans = if n_agents >= 2 {
        rng.gen_range(0..=cfg.max_chans)
    } else {
        0
    };
    let n_vars = rng.gen_range(1..=cfg.max_vars);

    let mut vars = Vec::new();
    for vi in 0..n_vars {
        let shared = n_agents >= 2 && rng.gen_bool(0.25);
        let owner = rng.gen_range(0..n_agents);
        vars.push(VarSpec {
            name: format!("v{vi}"),
            hi: rng.gen_range(1..cfg.max_dom),
            shared,
            owner,
            candidate: !shared && rng.gen_bool(0.7),
        });
    }

    let locs_per_agent: Vec<usize> = (0..n_agents)
        .map(|_| rng.gen_range(1..=cfg.max_locs))
        .collect();

    let mut text = String::new();
    let shared_vars: Vec<&VarSpec> = vars.iter().filter(|v| v.shared).collect();
    if !shared_vars.is_empty() || n_chans > 0 {
        text.push_str("system {\n");
        for v in &shared_vars {
            text.push_str(&format!("  var {}: 0..{} = 0;\n", v.name, v.hi));
        }
        if n_chans > 0 {
            let names: Vec<String> = (0..n_chans).map(|i| format!("c{i}")).collect();
            text.push_str(&format!("  chan {};\n", names.join(", ")));
        }
        text.push_str("}\n");
    }

    for ai in 0..n_agents {
        text.push_str(&format!("agent A{ai} {{\n"));
        for v in vars.iter().filter(|v| !v.shared && v.owner == ai) {
            text.push_str(&format!("  var {}: 0..{} = 0;\n", v.name, v.hi));
        }
        let locs: Vec<String> = (0..locs_per_agent[ai]).map(|l| format!("l{l}")).collect();
        text.push_str(&format!("  loc {};\n", locs.join(", ")));
        text.push_str("  init l0;\n");

        // variables this agent can mention
        let readable: Vec<&VarSpec> = vars
            .iter()
            .filter(|v| v.shared || v.owner == ai)
            .collect();
        let guard_pool: Vec<&&VarSpec> = readable
            .iter()
            .filter(|v| cfg.guards_read_candidates || !v.candidate)
            .collect();

        let n_edges = rng.gen_range(1..=cfg.max_edges);
        for _ in 0..n_edges {
            let src = rng.gen_range(0..locs.len());
            let dst = rng.gen_range(0..locs.len());
            let mut line = format!("  edge l{src} -> l{dst}");
            if !guard_pool.is_empty() && rng.gen_bool(0.55) {
                let mut conjuncts = Vec::new();
                for _ in 0..rng.gen_range(1..=2) {
                    let v = guard_pool[rng.gen_range(0..guard_pool.len())];
                    let op = ["==", "!=", "<", "<=", ">", ">="][rng.gen_range(0..6)];
                    let k = rng.gen_range(0..=v.hi);
                    conjuncts.push(format!("{} {} {}", v.name, op, k));
                }
                line.push_str(&format!(" [{}]", conjuncts.join(" && ")));
            }
            if n_chans > 0 && rng.gen_bool(0.4) {
                let c = rng.gen_range(0..n_chans);
                let dir = if rng.gen_bool(0.5) { "!" } else { "?" };
                line.push_str(&format!(" sync(c{c}{dir})"));
            }
            let use_select = rng.gen_bool(0.15);
            let writable = &readable;
            if !writable.is_empty() && rng.gen_bool(0.8) {
                let mut atoms = Vec::new();
                for _ in 0..rng.gen_range(1..=2) {
                    let t = writable[rng.gen_range(0..writable.len())];
                    let rhs = match rng.gen_range(0..4) {
                        0 => format!("{}", rng.gen_range(0..=t.hi)),
                        1 => {
                            let r = readable[rng.gen_range(0..readable.len())];
                            r.name.clone()
                        }
                        2 => {
                            let r = readable[rng.gen_range(0..readable.len())];
                            format!("{} + 1", r.name)
                        }
                        _ => {
                            if use_select {
                                "k".to_string()
                            } else {
                                format!("{}", rng.gen_range(0..=t.hi))
                            }
                        }
                    };
                    atoms.push(format!("{} := {}", t.name, rhs));
                }
                line.push_str(&format!(" do {}", atoms.join("; ")));
            }
            if use_select {
                line.push_str(" select k: 0..1");
            }
            text.push_str(&line);
            text.push('\n');
        }
        text.push_str("}\n");
    }

    let mas = parse_mas(&text, "<generated>").unwrap_or_else(|e| {
        panic!("generated system failed to parse: {e}\n{text}");
    });
    let candidates = vars
        .iter()
        .filter(|v| v.candidate)
        .map(|v| (v.owner, v.name.clone()))
        .collect();
    GeneratedSystem {
        text,
        mas,
        candidates,
    }
}

/// Picks a random abstraction over the system's candidate variables:
/// removal, a merge through a random total function, or a scope-restricted
/// mapping. `None` when the system offers no candidates.
pub fn gen_mapping(rng: &mut impl Rng, sys: &GeneratedSystem) -> Option<Vec<ScopedMapping>> {
    if sys.candidates.is_empty() {
        return None;
    }
    let mas = &sys.mas;
    let (owner, _) = sys.candidates[rng.gen_range(0..sys.candidates.len())];
    let owned: Vec<&(usize, String)> = sys
        .candidates
        .iter()
        .filter(|(a, _)| *a == owner)
        .collect();
    let take = rng.gen_range(1..=owned.len().min(2));
    let mut chosen: Vec<String> = owned.iter().map(|(_, n)| n.clone()).collect();
    chosen.shuffle(rng);
    chosen.truncate(take);

    let ids: Vec<_> = chosen
        .iter()
        .map(|n| {
            mas.vtable
                .lookup(&format!("{}.{}", mas.agents[owner].name, n))
                .expect("candidate exists")
        })
        .collect();
    let sources = VarSet::from_iter(ids, &mas.vtable);

    let style = rng.gen_range(0..10);
    let target = if style < 5 {
        None // pure removal
    } else {
        let hi = rng.gen_range(0..2);
        let decl = VarDecl {
            name: "zab".into(),
            domain: VarDomain::Scalar(IntRange::new(0, hi)),
            default: vec![0],
            shared: false,
        };
        let rows = sources
            .enumerate(&mas.vtable)
            .map(|vec| {
                let v = rng.gen_range(0..=hi);
                (vec, v)
            })
            .collect();
        let f = MappingFn::from_table(rows, &sources, &decl, &mas.vtable).expect("total");
        Some((decl, f))
    };

    let n_locs = mas.agents[owner].locations.len();
    let scope: BTreeSet<LocId> = if style >= 8 && n_locs > 1 {
        // proper nonempty sub-scope
        let k = rng.gen_range(1..n_locs);
        let mut all: Vec<u32> = (0..n_locs as u32).collect();
        all.shuffle(rng);
        all.truncate(k);
        all.into_iter().map(LocId).collect()
    } else {
        (0..n_locs as u32).map(LocId).collect()
    };

    Some(vec![ScopedMapping {
        mapping: Mapping {
            owner,
            sources,
            target,
        },
        scope,
        outside_default: None,
        reset: None,
    }])
}

/// Names of the variables an abstraction removes or merges away.
pub fn removed_var_names(mas: &MasGraph, maps: &[ScopedMapping]) -> Vec<String> {
    let mut out = Vec::new();
    for m in maps {
        for v in m.mapping.sources.vars() {
            out.push(mas.vtable.info(*v).qualified.clone());
        }
        if let Some((decl, _)) = &m.mapping.target {
            out.push(format!("{}.{}", mas.agents[m.mapping.owner].name, decl.name));
        }
    }
    out
}

/// Random formula text over location propositions and comparisons on the
/// given variables (qualified names).
pub fn gen_formula_text(
    rng: &mut impl Rng,
    mas: &MasGraph,
    kept_vars: &[String],
    depth: usize,
) -> String {
    let atom = |rng: &mut dyn RngCore| -> String {
        let use_loc = kept_vars.is_empty() || rng.gen_bool(0.5);
        if use_loc {
            let a = rng.gen_range(0..mas.agents.len());
            let agent = &mas.agents[a];
            let l = rng.gen_range(0..agent.locations.len());
            format!("{}.{}", agent.name, agent.locations[l])
        } else {
            let name = &kept_vars[rng.gen_range(0..kept_vars.len())];
            let id = mas.vtable.resolve_name(name).expect("kept var exists");
            let hi = mas.vtable.info(id).decl.domain.cell_range().hi;
            let op = ["==", "<=", ">"][rng.gen_range(0..3)];
            format!("{name} {op} {}", rng.gen_range(0..=hi))
        }
    };
    if depth == 0 {
        let a = atom(rng);
        return if rng.gen_bool(0.3) {
            format!("!({a})")
        } else {
            a
        };
    }
    match rng.gen_range(0..8) {
        0 | 1 => format!("A[] {}", gen_formula_text(rng, mas, kept_vars, depth - 1)),
        2 => format!("A<> {}", gen_formula_text(rng, mas, kept_vars, depth - 1)),
        3 => format!("AX {}", gen_formula_text(rng, mas, kept_vars, depth - 1)),
        4 => format!(
            "A(({}) U ({}))",
            gen_formula_text(rng, mas, kept_vars, depth - 1),
            gen_formula_text(rng, mas, kept_vars, depth - 1)
        ),
        5 => format!(
            "({}) && ({})",
            gen_formula_text(rng, mas, kept_vars, depth - 1),
            gen_formula_text(rng, mas, kept_vars, depth - 1)
        ),
        6 => format!(
            "({}) || ({})",
            gen_formula_text(rng, mas, kept_vars, depth - 1),
            gen_formula_text(rng, mas, kept_vars, depth - 1)
        ),
        _ => format!(
            "({}) -> ({})",
            gen_formula_text(rng, mas, kept_vars, depth - 1),
            gen_formula_text(rng, mas, kept_vars, depth - 1)
        ),
    }
}

/// Random bare labelled model (serial via closure loops).
pub fn gen_model(rng: &mut impl Rng, max_states: usize, max_out: usize, n_props: usize) -> Model {
    let n = rng.gen_range(2..=max_states.max(2));
    let mut succs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.gen_range(0..=max_out);
        let ts: Vec<u32> = (0..k).map(|_| rng.gen_range(0..n as u32)).collect();
        succs.push(ts);
        let ls: Vec<String> = (0..n_props)
            .filter(|_| rng.gen_bool(0.4))
            .map(|p| format!("p{p}"))
            .collect();
        labels.push(ls);
    }
    Model::synthetic(succs, labels, vec![0])
}

/// Random normalized formula over proposition names, built directly.
pub fn gen_synthetic_formula(rng: &mut impl Rng, props: &[String], depth: usize) -> Formula {
    let mut atoms: Vec<Atom> = props.iter().map(|p| Atom::Location(p.clone())).collect();
    if atoms.is_empty() {
        atoms.push(Atom::Location("p0".into()));
    }
    let n_atoms = atoms.len() as u32;
    let root = gen_statef(rng, n_atoms, depth);
    Formula { root, atoms }
}

fn gen_statef(rng: &mut impl Rng, n_atoms: u32, depth: usize) -> StateF {
    if depth == 0 {
        let a = rng.gen_range(0..n_atoms);
        return if rng.gen_bool(0.5) {
            StateF::Atom(a)
        } else {
            StateF::NegAtom(a)
        };
    }
    match rng.gen_range(0..7) {
        0 => StateF::And(vec![
            gen_statef(rng, n_atoms, depth - 1),
            gen_statef(rng, n_atoms, depth - 1),
        ]),
        1 => StateF::Or(vec![
            gen_statef(rng, n_atoms, depth - 1),
            gen_statef(rng, n_atoms, depth - 1),
        ]),
        2 => StateF::Next(Box::new(gen_statef(rng, n_atoms, depth - 1))),
        3 | 4 => StateF::Globally(Box::new(gen_statef(rng, n_atoms, depth - 1))),
        5 => StateF::Until(
            Box::new(StateF::True),
            Box::new(gen_statef(rng, n_atoms, depth - 1)),
        ),
        _ => StateF::Until(
            Box::new(gen_statef(rng, n_atoms, depth - 1)),
            Box::new(gen_statef(rng, n_atoms, depth - 1)),
        ),
    }
}
