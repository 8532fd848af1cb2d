//! From-the-definition re-verification of a claimed simulation relation:
//! initial coverage, label agreement over the proposition set, and move
//! matching, each checked by direct enumeration.

use std::collections::BTreeSet;

use masg_core::lts::Model;

fn label_set(m: &Model, s: u32, ap: &[String]) -> BTreeSet<String> {
    ap.iter()
        .filter(|name| {
            m.prop_id(name)
                .map(|p| m.has_prop(s, p))
                .unwrap_or(false)
        })
        .cloned()
        .collect()
}

/// Checks every clause of the simulation definition on the given relation.
pub fn verify_simulation(
    m1: &Model,
    m2: &Model,
    ap: &[String],
    relation: &[(u32, u32)],
) -> Result<(), String> {
    let rel: BTreeSet<(u32, u32)> = relation.iter().copied().collect();
    for i1 in &m1.initial {
        if !m2.initial.iter().any(|i2| rel.contains(&(*i1, *i2))) {
            return Err(format!("initial state {i1} has no related initial partner"));
        }
    }
    for (s1, s2) in &rel {
        if label_set(m1, *s1, ap) != label_set(m2, *s2, ap) {
            return Err(format!("pair ({s1},{s2}) disagrees on labels"));
        }
        for t1 in m1.successors(*s1) {
            let matched = m2
                .successors(*s2)
                .iter()
                .any(|t2| rel.contains(&(*t1, *t2)));
            if !matched {
                return Err(format!(
                    "pair ({s1},{s2}): move to {t1} has no matching move"
                ));
            }
        }
    }
    Ok(())
}
