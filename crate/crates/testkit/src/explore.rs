//! Direct product-semantics exploration of a system, independent of the
//! combine/unwrap pipeline: agents fire unsynchronized edges alone and
//! matching send/receive pairs together (sender's update first), all other
//! agents holding still. Used as the oracle for composition and unwrapping.

use std::collections::{BTreeSet, HashMap};

use masg_core::ast::{MasGraph, SyncDir, Value};
use masg_core::eval;

#[derive(Debug)]
pub struct ExploredSystem {
    /// Deduplicated states: per-agent location indices plus the evaluation.
    pub states: Vec<(Vec<u32>, Box<[Value]>)>,
    /// Transition relation after serial closure, as index pairs.
    pub transitions: BTreeSet<(usize, usize)>,
    pub initial: usize,
    /// States that received a closure self-loop.
    pub closed: BTreeSet<usize>,
}

impl ExploredSystem {
    /// Witnessed value vectors of the given slots, grouped by the location
    /// vector.
    pub fn witnessed_by_location(
        &self,
        slots: &[usize],
    ) -> HashMap<Vec<u32>, BTreeSet<Box<[Value]>>> {
        let mut out: HashMap<Vec<u32>, BTreeSet<Box<[Value]>>> = HashMap::new();
        for (locs, vals) in &self.states {
            out.entry(locs.clone())
                .or_default()
                .insert(slots.iter().map(|s| vals[*s]).collect());
        }
        out
    }
}

/// Explores up to `cap` states; `None` when the cap is hit.
pub fn explore(mas: &MasGraph, cap: usize) -> Option<ExploredSystem> {
    let table = &mas.vtable;
    let init = (
        mas.agents.iter().map(|a| a.init.0).collect::<Vec<u32>>(),
        mas.eta0.clone(),
    );
    let mut ids: HashMap<(Vec<u32>, Box<[Value]>), usize> = HashMap::new();
    let mut states = vec![init.clone()];
    ids.insert(init, 0);
    let mut transitions = BTreeSet::new();
    let mut closed = BTreeSet::new();
    let mut frontier = 0usize;
    while frontier < states.len() {
        let (locs, vals) = states[frontier].clone();
        let mut succs: BTreeSet<(Vec<u32>, Box<[Value]>)> = BTreeSet::new();
        // lone moves
        for (ai, agent) in mas.agents.iter().enumerate() {
            for e in &agent.edges {
                if e.sync.is_some() || e.src.0 != locs[ai] {
                    continue;
                }
                if !matches!(eval::eval_guard(&e.guard, &vals, table), Ok(true)) {
                    continue;
                }
                if let Ok(next) = eval::effect(&e.update, &vals, table) {
                    let mut nl = locs.clone();
                    nl[ai] = e.dst.0;
                    succs.insert((nl, next));
                }
            }
        }
        // handshakes
        for (si, sender) in mas.agents.iter().enumerate() {
            for se in &sender.edges {
                let chan = match se.sync {
                    Some(s) if s.dir == SyncDir::Send && se.src.0 == locs[si] => s.chan,
                    _ => continue,
                };
                for (ri, receiver) in mas.agents.iter().enumerate() {
                    if ri == si {
                        continue;
                    }
                    for re in &receiver.edges {
                        match re.sync {
                            Some(s) if s.dir == SyncDir::Recv && s.chan == chan
                                && re.src.0 == locs[ri] => {}
                            _ => continue,
                        }
                        let both = matches!(eval::eval_guard(&se.guard, &vals, table), Ok(true))
                            && matches!(eval::eval_guard(&re.guard, &vals, table), Ok(true));
                        if !both {
                            continue;
                        }
                        let after_send = match eval::effect(&se.update, &vals, table) {
                            Ok(v) => v,
                            Err(_) => continue,
                        };
                        if let Ok(next) = eval::effect(&re.update, &after_send, table) {
                            let mut nl = locs.clone();
                            nl[si] = se.dst.0;
                            nl[ri] = re.dst.0;
                            succs.insert((nl, next));
                        }
                    }
                }
            }
        }
        if succs.is_empty() {
            transitions.insert((frontier, frontier));
            closed.insert(frontier);
        }
        for key in succs {
            let id = match ids.get(&key) {
                Some(id) => *id,
                None => {
                    if states.len() >= cap {
                        return None;
                    }
                    let id = states.len();
                    states.push(key.clone());
                    ids.insert(key, id);
                    id
                }
            };
            transitions.insert((frontier, id));
        }
        frontier += 1;
    }
    Some(ExploredSystem {
        states,
        transitions,
        initial: 0,
        closed,
    })
}

/// Compares an exploration against an unwrapped model of the same system:
/// identical state sets (by location vector and evaluation) and identical
/// transition relations.
pub fn matches_model(
    ex: &ExploredSystem,
    model: &masg_core::lts::Model,
    combined: &masg_core::compose::CombinedGraph,
) -> Result<(), String> {
    if ex.states.len() != model.len() {
        return Err(format!(
            "state count differs: oracle {} vs model {}",
            ex.states.len(),
            model.len()
        ));
    }
    // model state -> oracle id
    let mut oracle_ids: HashMap<(Vec<u32>, &[Value]), usize> = HashMap::new();
    for (i, (locs, vals)) in ex.states.iter().enumerate() {
        oracle_ids.insert((locs.clone(), vals), i);
    }
    let mut map = Vec::with_capacity(model.len());
    for s in &model.states {
        let comps = combined.locations[s.loc as usize].clone();
        match oracle_ids.get(&(comps, s.vals.as_ref())) {
            Some(i) => map.push(*i),
            None => return Err("model state missing from the oracle".into()),
        }
    }
    let mut model_transitions = BTreeSet::new();
    for s in 0..model.len() as u32 {
        for t in model.successors(s) {
            model_transitions.insert((map[s as usize], map[*t as usize]));
        }
    }
    if model_transitions != ex.transitions {
        return Err(format!(
            "transition relations differ: oracle {} vs model {}",
            ex.transitions.len(),
            model_transitions.len()
        ));
    }
    Ok(())
}
