//! Product composition: builds the single combined graph of a system.
//!
//! Locations of the combined graph are tuples with one component per agent,
//! ordered by agent declaration order. Edges arise from two rules:
//! an unsynchronized agent edge interleaves (all other agents hold still),
//! and a matching send/recv pair on a shared channel fuses into one edge
//! with the conjoined guard and the sender's update composed before the
//! receiver's. Combined edges carry no synchronization label.

use std::collections::BTreeSet;

use crate::ast::{Expr, MasGraph, SyncDir, Update};
use crate::error::{MasgError, Result};

/// Where a combined edge came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    /// Agent `agent` fired its edge `edge` alone.
    Interleave { agent: usize, edge: usize },
    /// `sender`'s `c!` edge fused with `receiver`'s `c?` edge.
    Handshake {
        channel: u32,
        sender: (usize, usize),
        receiver: (usize, usize),
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinedEdge {
    pub dst: usize,
    pub guard: Expr,
    pub update: Update,
    pub provenance: Provenance,
}

/// The combined graph: full or reachability-restricted location product with
/// plain (synchronization-free) edges.
#[derive(Debug, Clone)]
pub struct CombinedGraph {
    pub mas: MasGraph,
    /// Per combined location, the component location index of each agent.
    pub locations: Vec<Vec<u32>>,
    pub init: usize,
    /// Outgoing edges per combined location.
    pub edges: Vec<Vec<CombinedEdge>>,
    pub warnings: Vec<String>,
}

impl CombinedGraph {
    pub fn loc_count(&self) -> usize {
        self.locations.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(|v| v.len()).sum()
    }

    /// Tuple display name of a combined location, e.g. `(voted,idle)`;
    /// single-agent systems use the bare component name.
    pub fn loc_name(&self, loc: usize) -> String {
        let comps = &self.locations[loc];
        if comps.len() == 1 {
            return self.mas.agents[0].locations[comps[0] as usize].clone();
        }
        let names: Vec<&str> = comps
            .iter()
            .enumerate()
            .map(|(i, c)| self.mas.agents[i].locations[*c as usize].as_str())
            .collect();
        format!("({})", names.join(","))
    }

    /// Component location index of one agent at a combined location.
    pub fn component(&self, loc: usize, agent: usize) -> u32 {
        self.locations[loc][agent]
    }

    /// Location digraph successors (guards ignored), deduplicated and sorted.
    pub fn loc_successors(&self, loc: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.edges[loc].iter().map(|e| e.dst).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

struct ProductIndex {
    sizes: Vec<usize>,
    strides: Vec<usize>,
}

impl ProductIndex {
    fn new(sizes: Vec<usize>) -> Self {
        let mut strides = vec![1usize; sizes.len()];
        for i in (0..sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        ProductIndex { sizes, strides }
    }

    fn total(&self) -> usize {
        self.sizes.iter().product()
    }

    fn id_of(&self, comps: &[u32]) -> usize {
        comps
            .iter()
            .zip(&self.strides)
            .map(|(c, s)| *c as usize * s)
            .sum()
    }

    fn comps_of(&self, mut id: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.sizes.len()];
        for i in 0..self.sizes.len() {
            out[i] = (id / self.strides[i]) as u32;
            id %= self.strides[i];
        }
        out
    }
}

fn channel_warnings(mas: &MasGraph) -> Vec<String> {
    let mut warnings = Vec::new();
    for (ci, cname) in mas.channels.iter().enumerate() {
        let mut senders = BTreeSet::new();
        let mut receivers = BTreeSet::new();
        for (ai, agent) in mas.agents.iter().enumerate() {
            for e in &agent.edges {
                if let Some(s) = &e.sync {
                    if s.chan == ci as u32 {
                        match s.dir {
                            SyncDir::Send => senders.insert(ai),
                            SyncDir::Recv => receivers.insert(ai),
                        };
                    }
                }
            }
        }
        let pairable = |a: &BTreeSet<usize>, b: &BTreeSet<usize>| {
            a.iter().any(|x| b.iter().any(|y| y != x))
        };
        if !senders.is_empty() && !pairable(&senders, &receivers) {
            warnings.push(format!(
                "channel `{cname}`: send edges have no possible receiver in another agent"
            ));
        }
        if !receivers.is_empty() && !pairable(&receivers, &senders) {
            warnings.push(format!(
                "channel `{cname}`: receive edges have no possible sender in another agent"
            ));
        }
    }
    warnings
}

/// Sender update followed by receiver update.
fn compose_updates(sender: &Update, receiver: &Update) -> Update {
    let mut atoms = sender.0.clone();
    atoms.extend(receiver.0.iter().cloned());
    Update(atoms)
}

/// Outgoing combined edges of one product location, in deterministic order:
/// interleavings by (agent, edge index), then handshakes by (channel, sender
/// agent, sender edge, receiver agent, receiver edge).
fn edges_of_location(mas: &MasGraph, idx: &ProductIndex, comps: &[u32]) -> Vec<CombinedEdge> {
    let mut out = Vec::new();
    for (ai, agent) in mas.agents.iter().enumerate() {
        for (ei, e) in agent.edges.iter().enumerate() {
            if e.sync.is_some() || e.src.0 != comps[ai] {
                continue;
            }
            let mut dst = comps.to_vec();
            dst[ai] = e.dst.0;
            out.push(CombinedEdge {
                dst: idx.id_of(&dst),
                guard: e.guard.clone(),
                update: e.update.clone(),
                provenance: Provenance::Interleave { agent: ai, edge: ei },
            });
        }
    }
    let n = mas.agents.len();
    for chan in 0..mas.channels.len() as u32 {
        for si in 0..n {
            for (sei, se) in mas.agents[si].edges.iter().enumerate() {
                let s_ok = se.src.0 == comps[si]
                    && se.sync.map_or(false, |s| s.chan == chan && s.dir == SyncDir::Send);
                if !s_ok {
                    continue;
                }
                for ri in 0..n {
                    if ri == si {
                        continue;
                    }
                    for (rei, re) in mas.agents[ri].edges.iter().enumerate() {
                        let r_ok = re.src.0 == comps[ri]
                            && re
                                .sync
                                .map_or(false, |s| s.chan == chan && s.dir == SyncDir::Recv);
                        if !r_ok {
                            continue;
                        }
                        let mut dst = comps.to_vec();
                        dst[si] = se.dst.0;
                        dst[ri] = re.dst.0;
                        out.push(CombinedEdge {
                            dst: idx.id_of(&dst),
                            guard: Expr::and(se.guard.clone(), re.guard.clone()),
                            update: compose_updates(&se.update, &re.update),
                            provenance: Provenance::Handshake {
                                channel: chan,
                                sender: (si, sei),
                                receiver: (ri, rei),
                            },
                        });
                    }
                }
            }
        }
    }
    out
}

/// Builds the combined graph over the full location product.
pub fn combine(mas: &MasGraph) -> Result<CombinedGraph> {
    let sizes: Vec<usize> = mas.agents.iter().map(|a| a.locations.len()).collect();
    let idx = ProductIndex::new(sizes);
    let total = idx.total();
    if total > 20_000_000 {
        return Err(MasgError::Validation(format!(
            "location product has {total} locations; use the reachable-product pipeline"
        )));
    }
    let mut locations = Vec::with_capacity(total);
    let mut edges = Vec::with_capacity(total);
    for id in 0..total {
        let comps = idx.comps_of(id);
        edges.push(edges_of_location(mas, &idx, &comps));
        locations.push(comps);
    }
    let init_comps: Vec<u32> = mas.agents.iter().map(|a| a.init.0).collect();
    Ok(CombinedGraph {
        mas: mas.clone(),
        locations,
        init: idx.id_of(&init_comps),
        edges,
        warnings: channel_warnings(mas),
    })
}

/// Drops locations with no guard-ignoring path from the initial location and
/// re-indexes the rest, preserving the product order. The retained set is a
/// superset of the truly reachable locations, so every downstream analysis
/// is unaffected.
pub fn restrict_to_reachable_locations(g: &CombinedGraph) -> CombinedGraph {
    let n = g.loc_count();
    let mut seen = vec![false; n];
    let mut stack = vec![g.init];
    seen[g.init] = true;
    while let Some(l) = stack.pop() {
        for e in &g.edges[l] {
            if !seen[e.dst] {
                seen[e.dst] = true;
                stack.push(e.dst);
            }
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut locations = Vec::new();
    let mut kept = Vec::new();
    for l in 0..n {
        if seen[l] {
            remap[l] = locations.len();
            locations.push(g.locations[l].clone());
            kept.push(l);
        }
    }
    let edges = kept
        .iter()
        .map(|l| {
            g.edges[*l]
                .iter()
                .map(|e| CombinedEdge {
                    dst: remap[e.dst],
                    ..e.clone()
                })
                .collect()
        })
        .collect();
    CombinedGraph {
        mas: g.mas.clone(),
        locations,
        init: remap[g.init],
        edges,
        warnings: g.warnings.clone(),
    }
}

/// Fused combine-and-restrict: explores only product locations reachable in
/// the location digraph, generating edges on demand. Result equals
/// `restrict_to_reachable_locations(combine(mas))`.
pub fn combine_reachable(mas: &MasGraph) -> Result<CombinedGraph> {
    let sizes: Vec<usize> = mas.agents.iter().map(|a| a.locations.len()).collect();
    let idx = ProductIndex::new(sizes);
    let init_comps: Vec<u32> = mas.agents.iter().map(|a| a.init.0).collect();
    let init_id = idx.id_of(&init_comps);

    let mut reached = BTreeSet::new();
    reached.insert(init_id);
    let mut stack = vec![init_id];
    while let Some(l) = stack.pop() {
        let comps = idx.comps_of(l);
        for e in edges_of_location(mas, &idx, &comps) {
            if reached.insert(e.dst) {
                stack.push(e.dst);
            }
        }
    }

    // dense ids in product order
    let kept: Vec<usize> = reached.iter().copied().collect();
    let mut remap = std::collections::HashMap::with_capacity(kept.len());
    for (new, old) in kept.iter().enumerate() {
        remap.insert(*old, new);
    }
    let mut locations = Vec::with_capacity(kept.len());
    let mut edges = Vec::with_capacity(kept.len());
    for old in &kept {
        let comps = idx.comps_of(*old);
        let es = edges_of_location(mas, &idx, &comps)
            .into_iter()
            .map(|e| CombinedEdge {
                dst: remap[&e.dst],
                ..e
            })
            .collect();
        locations.push(comps);
        edges.push(es);
    }
    Ok(CombinedGraph {
        mas: mas.clone(),
        locations,
        init: remap[&init_id],
        edges,
        warnings: channel_warnings(mas),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_mas;

    fn two_agents_no_chan() -> MasGraph {
        parse_mas(
            "
            agent A {
              var x: 0..2 = 0;
              loc a0, a1;
              init a0;
              edge a0 -> a1 do x := 1
              edge a1 -> a0 do x := 2
            }
            agent B {
              loc b0, b1, b2;
              init b0;
              edge b0 -> b1
              edge b1 -> b2
            }
            ",
            "<t>",
        )
        .unwrap()
    }

    #[test]
    fn interleaving_edge_count_matches_product_formula() {
        let mas = two_agents_no_chan();
        let g = combine(&mas).unwrap();
        // sum over agents of |edges_i| * product of other agents' location counts
        let expected = 2 * 3 + 2 * 2;
        assert_eq!(g.loc_count(), 6);
        assert_eq!(g.edge_count(), expected);
    }

    #[test]
    fn single_agent_combine_is_identity_up_to_wrapping() {
        let mas = parse_mas(
            "agent A { loc a, b; init a; edge a -> b edge b -> a }",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        assert_eq!(g.loc_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.loc_name(0), "a");
    }

    #[test]
    fn handshake_produces_single_edge_and_no_interleavings() {
        let mas = parse_mas(
            "
            system { chan c; }
            agent A { loc a0, a1; init a0; edge a0 -> a1 sync(c!) }
            agent B { loc b0, b1; init b0; edge b0 -> b1 sync(c?) }
            ",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        assert_eq!(g.edge_count(), 1);
        let e = &g.edges[g.init][0];
        assert!(matches!(e.provenance, Provenance::Handshake { .. }));
        assert_eq!(g.loc_name(e.dst), "(a1,b1)");
    }

    #[test]
    fn sender_update_applies_before_receiver() {
        let mas = parse_mas(
            "
            system { var sh: 0..5 = 0; var got: 0..5 = 0; chan c; }
            agent A { loc a0, a1; init a0; edge a0 -> a1 sync(c!) do sh := 3 }
            agent B { loc b0, b1; init b0; edge b0 -> b1 sync(c?) do got := sh }
            ",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        let e = &g.edges[g.init][0];
        let out = crate::eval::effect(&e.update, &mas.eta0, &mas.vtable).unwrap();
        let got = mas.vtable.lookup("got").unwrap();
        assert_eq!(out[mas.vtable.info(got).first_slot], 3);
    }

    #[test]
    fn dangling_channel_warns_not_errors() {
        let mas = parse_mas(
            "
            system { chan c; }
            agent A { loc a; init a; edge a -> a sync(c!) }
            agent B { loc b; init b; }
            ",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        assert_eq!(g.warnings.len(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn restrict_drops_unreachable_locations() {
        let mas = parse_mas(
            "
            agent A { loc a0, a1, a2; init a0; edge a0 -> a1 }
            ",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        assert_eq!(g.loc_count(), 3);
        let r = restrict_to_reachable_locations(&g);
        assert_eq!(r.loc_count(), 2);
        // isolated initial location keeps itself only
        let mas2 = parse_mas("agent A { loc a0, a1; init a0; edge a1 -> a0 }", "<t>").unwrap();
        let r2 = restrict_to_reachable_locations(&combine(&mas2).unwrap());
        assert_eq!(r2.loc_count(), 1);
    }

    #[test]
    fn fused_combine_matches_combine_then_restrict() {
        let mas = two_agents_no_chan();
        let a = restrict_to_reachable_locations(&combine(&mas).unwrap());
        let b = combine_reachable(&mas).unwrap();
        assert_eq!(a.locations, b.locations);
        assert_eq!(a.init, b.init);
        assert_eq!(a.edges, b.edges);
    }
}
