//! Simulation preorder between models over a shared proposition set, and
//! state matching with respect to a variable set.
//!
//! The greatest simulation is computed by refinement from the
//! label-compatible full relation: a pair is dropped when some move of the
//! simulated state cannot be answered, and dropped pairs trigger rechecks of
//! their predecessors until stabilization. If any simulation over the given
//! propositions exists, the refinement finds the greatest one.

use std::collections::HashMap;

use crate::check::Bits;
use crate::error::{MasgError, Result};
use crate::lts::Model;

/// Outcome of a simulation check: the greatest relation when one exists,
/// otherwise a pair that cannot be related together with the move that
/// cannot be matched.
#[derive(Debug, Clone)]
pub enum SimulationResult {
    Found { relation: Vec<(u32, u32)> },
    NotFound { blocking: Blocking },
}

#[derive(Debug, Clone)]
pub struct Blocking {
    /// An initial state of the simulated model that no initial partner can
    /// cover, with the label-compatible candidate that was refuted (if any).
    pub pair: (u32, Option<u32>),
    /// The move `s1 -> s1'` that the candidate could not answer.
    pub unmatched_move: Option<(u32, u32)>,
    pub reason: String,
}

impl SimulationResult {
    pub fn found(&self) -> bool {
        matches!(self, SimulationResult::Found { .. })
    }
}

/// Label class of each state restricted to the propositions in `ap`
/// (proposition *names*, shared across models).
fn label_classes(models: [&Model; 2], ap: &[String]) -> Result<(Vec<u32>, Vec<u32>)> {
    // per model: the AP props that exist there, by ap index
    let mut class_ids: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut out: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    for (mi, m) in models.iter().enumerate() {
        let prop_ids: Vec<Option<u32>> = ap.iter().map(|name| m.prop_id(name)).collect();
        for s in 0..m.len() as u32 {
            let mut key = Vec::new();
            for (ai, p) in prop_ids.iter().enumerate() {
                if let Some(p) = p {
                    if m.has_prop(s, *p) {
                        key.push(ai as u32);
                    }
                }
            }
            let next = class_ids.len() as u32;
            let id = *class_ids.entry(key).or_insert(next);
            out[mi].push(id);
        }
    }
    let [a, b] = out;
    Ok((a, b))
}

/// Decides whether `m2` simulates `m1` over the proposition names `ap`.
pub fn check_simulation(m1: &Model, m2: &Model, ap: &[String]) -> Result<SimulationResult> {
    let n1 = m1.len();
    let n2 = m2.len();
    if n1 == 0 || n2 == 0 {
        return Err(MasgError::Validation("empty model".into()));
    }
    let (c1, c2) = label_classes([m1, m2], ap)?;

    // rel[s1] = bitset over m2 states that may simulate s1
    let mut rel: Vec<Bits> = Vec::with_capacity(n1);
    for s1 in 0..n1 {
        let mut b = Bits::new(n2, false);
        for s2 in 0..n2 as u32 {
            if c1[s1] == c2[s2 as usize] {
                b.set(s2);
            }
        }
        rel.push(b);
    }

    // refinement: drop (s1,s2) when some s1 -> t1 has no s2 -> t2 with
    // (t1,t2) still related
    let mut removed_reason: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    let mut dirty = true;
    while dirty {
        dirty = false;
        for s1 in 0..n1 as u32 {
            let succs1: Vec<u32> = m1.successors(s1).to_vec();
            for s2 in 0..n2 as u32 {
                if !rel[s1 as usize].get(s2) {
                    continue;
                }
                let mut failing_move = None;
                'moves: for t1 in &succs1 {
                    for t2 in m2.successors(s2) {
                        if rel[*t1 as usize].get(*t2) {
                            continue 'moves;
                        }
                    }
                    failing_move = Some((s1, *t1));
                    break;
                }
                if let Some(mv) = failing_move {
                    rel[s1 as usize].clear(s2);
                    removed_reason.insert((s1, s2), mv);
                    dirty = true;
                }
            }
        }
    }

    // initial condition: every initial of m1 has a related initial of m2
    for i1 in &m1.initial {
        let covered = m2.initial.iter().any(|i2| rel[*i1 as usize].get(*i2));
        if covered {
            continue;
        }
        // find a refuted label-compatible initial candidate for diagnostics
        let candidate = m2
            .initial
            .iter()
            .copied()
            .find(|i2| c1[*i1 as usize] == c2[*i2 as usize]);
        let (unmatched, reason) = match candidate {
            Some(i2) => {
                let mv = removed_reason.get(&(*i1, i2)).copied();
                (
                    mv,
                    format!(
                        "initial state {i1} is not simulated by initial state {i2}: a move cannot be matched"
                    ),
                )
            }
            None => (
                None,
                format!("initial state {i1} has no label-compatible initial partner"),
            ),
        };
        return Ok(SimulationResult::NotFound {
            blocking: Blocking {
                pair: (*i1, candidate),
                unmatched_move: unmatched,
                reason,
            },
        });
    }

    let mut relation = Vec::new();
    for s1 in 0..n1 as u32 {
        for s2 in 0..n2 as u32 {
            if rel[s1 as usize].get(s2) {
                relation.push((s1, s2));
            }
        }
    }
    Ok(SimulationResult::Found { relation })
}

/// State matching with respect to a variable set: same location and equal
/// values on every cell of every named variable. Variables are matched by
/// name across models; a variable absent from either model fails the match.
pub fn check_state_match(m1: &Model, s1: u32, m2: &Model, s2: u32, vars: &[String]) -> bool {
    let st1 = &m1.states[s1 as usize];
    let st2 = &m2.states[s2 as usize];
    if m1.loc_names[st1.loc as usize] != m2.loc_names[st2.loc as usize] {
        return false;
    }
    for v in vars {
        let slots1: Vec<usize> = (0..m1.slot_vars.len())
            .filter(|i| &m1.slot_vars[*i] == v)
            .collect();
        let slots2: Vec<usize> = (0..m2.slot_vars.len())
            .filter(|i| &m2.slot_vars[*i] == v)
            .collect();
        if slots1.is_empty() || slots1.len() != slots2.len() {
            return false;
        }
        for (a, b) in slots1.iter().zip(&slots2) {
            if st1.vals[*a] != st2.vals[*b] {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::combine;
    use crate::lts::{unwrap, UnwrapOptions};
    use crate::parse::parse_mas;

    fn model(src: &str) -> Model {
        let mas = parse_mas(src, "<t>").unwrap();
        unwrap(&combine(&mas).unwrap(), &UnwrapOptions::default()).unwrap()
    }

    fn loc_ap(m: &Model) -> Vec<String> {
        m.props.iter().map(|p| p.name.clone()).collect()
    }

    #[test]
    fn every_model_simulates_itself() {
        let m = model(
            "agent A { var x: 0..2 = 0; loc a, b; init a;
               edge a -> b do x := i select i: 1..2
               edge b -> a do x := 0 }",
        );
        let ap = loc_ap(&m);
        match check_simulation(&m, &m, &ap).unwrap() {
            SimulationResult::Found { relation } => {
                for s in 0..m.len() as u32 {
                    assert!(relation.contains(&(s, s)));
                }
            }
            other => panic!("expected reflexive simulation, got {other:?}"),
        }
    }

    #[test]
    fn missing_move_reports_blocking_pair() {
        // m1 can alternate a<->b forever; m2 can reach b but then halts there
        let m1 = model("agent A { loc a, b; init a; edge a -> b edge b -> a }");
        let m2 = model("agent A { loc a, b; init a; edge a -> b }");
        let ap = vec!["a".to_string(), "b".to_string()];
        match check_simulation(&m1, &m2, &ap).unwrap() {
            SimulationResult::NotFound { blocking } => {
                assert_eq!(blocking.pair.0, 0);
                assert!(blocking.unmatched_move.is_some());
            }
            SimulationResult::Found { .. } => panic!("should not be simulated"),
        }
        // the other direction holds: m1 covers m2's behaviour
        assert!(check_simulation(&m2, &m1, &ap).unwrap().found());
    }

    #[test]
    fn coarser_ap_permits_more() {
        let m1 = model("agent A { loc a, b; init a; edge a -> b edge b -> a }");
        let m2 = model("agent A { loc a, b; init a; edge a -> b }");
        // with no propositions at all, everything is label-equivalent and
        // the serial self-loop suffices
        assert!(check_simulation(&m1, &m2, &[]).unwrap().found());
    }

    #[test]
    fn state_match_ignores_unlisted_vars() {
        let m = model(
            "agent A { var x: 0..1 = 0; var y: 0..1 = 0; loc a, b; init a;
               edge a -> b do x := 1
               edge a -> b do x := 1; y := 1 }",
        );
        // states 1 and 2 share location b, differ on y
        let (s1, s2) = (1u32, 2u32);
        assert_eq!(
            m.loc_names[m.states[s1 as usize].loc as usize],
            m.loc_names[m.states[s2 as usize].loc as usize]
        );
        assert!(check_state_match(&m, s1, &m, s2, &["A.x".into()]));
        assert!(!check_state_match(&m, s1, &m, s2, &["A.x".into(), "A.y".into()]));
        assert!(check_state_match(&m, s1, &m, s1, &["A.x".into(), "A.y".into()]));
        // different locations never match
        assert!(!check_state_match(&m, 0, &m, s1, &[]));
    }
}
