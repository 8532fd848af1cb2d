//! Per-location approximation of reachable variable values: the worklist
//! fixpoint with reachability-index priority, the Warshall-based index
//! itself, narrowing onto one agent's locations, and the coarse per-template
//! variant.
//!
//! Upper mode starts from empty sets and accumulates values produced along
//! edges, so the result contains every reachable projection. Lower mode runs
//! the same propagation; because edge images range unconstrained variables
//! over their full domains, the raw result may over-report witnesses, so it
//! is verified (and pruned) against an exact per-location exploration within
//! a state budget and marked unverified when the budget is exceeded.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::ast::{Update, Value, VarSet};
use crate::compose::{CombinedEdge, CombinedGraph};
use crate::error::{MasgError, Result};
use crate::eval::{self, eval_guard};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DomainMode {
    Upper,
    Lower,
}

/// Soundness status of a computed domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainStatus {
    /// Upper mode: contains every reachable projection by construction.
    UpperSound,
    /// Lower mode, verified against the exact reachable projections.
    LowerVerified,
    /// Lower mode, not verified (budget exceeded or verification disabled);
    /// values may lack witnesses.
    LowerUnverified { reason: String },
}

/// Map from combined locations to the set of value vectors the tracked
/// variables may take there.
#[derive(Debug, Clone)]
pub struct LocalDomain {
    pub mode: DomainMode,
    pub vars: VarSet,
    /// Per combined location id.
    pub table: Vec<BTreeSet<Box<[Value]>>>,
    pub status: DomainStatus,
}

impl LocalDomain {
    pub fn to_json(&self, g: &CombinedGraph) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            mode: DomainMode,
            vars: Vec<String>,
            status: String,
            locations: Vec<LocEntry<'a>>,
        }
        #[derive(Serialize)]
        struct LocEntry<'a> {
            location: String,
            values: &'a BTreeSet<Box<[Value]>>,
        }
        let dump = Dump {
            mode: self.mode,
            vars: self.vars.names(&g.mas.vtable),
            status: format!("{:?}", self.status),
            locations: (0..g.loc_count())
                .map(|l| LocEntry {
                    location: g.loc_name(l),
                    values: &self.table[l],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dump).expect("domain serialization cannot fail")
    }
}

/// Narrowing of a combined-location domain onto one agent: per local
/// location, the union over all product locations sharing that component.
#[derive(Debug, Clone)]
pub struct NarrowedDomain {
    pub agent: usize,
    pub mode: DomainMode,
    pub vars: VarSet,
    /// Per local location of the agent.
    pub table: Vec<BTreeSet<Box<[Value]>>>,
    pub status: DomainStatus,
}

#[derive(Debug, Clone)]
pub struct DomainOptions {
    /// Use the reachability-index priority queue; a plain FIFO reaches the
    /// same fixpoint.
    pub priority: bool,
    /// Skip the Warshall index above this many locations and fall back to
    /// FIFO order.
    pub warshall_cap: usize,
    /// Cap on evaluations enumerated per edge image.
    pub support_cap: u64,
    /// Verify (and prune) lower-mode results against the exact reachable
    /// projections.
    pub verify_lower: bool,
    /// State budget for the exact verification exploration.
    pub verify_budget: usize,
}

impl Default for DomainOptions {
    fn default() -> Self {
        DomainOptions {
            priority: true,
            warshall_cap: 4096,
            support_cap: 1 << 21,
            verify_lower: true,
            verify_budget: 2_000_000,
        }
    }
}

/// Number of other locations reachable from each location in the location
/// digraph (guards ignored), from the transitive closure.
pub fn reachability_index(g: &CombinedGraph) -> Vec<usize> {
    let n = g.loc_count();
    let words = n.div_ceil(64);
    let mut reach = vec![0u64; n * words];
    for l in 0..n {
        for e in &g.edges[l] {
            reach[l * words + e.dst / 64] |= 1 << (e.dst % 64);
        }
    }
    // Warshall's closure, row-bitset formulation
    for k in 0..n {
        let kw = k / 64;
        let kb = 1u64 << (k % 64);
        for i in 0..n {
            if reach[i * words + kw] & kb != 0 {
                let (head, tail) = reach.split_at_mut(i * words);
                let (row_i, rest) = tail.split_at_mut(words);
                let row_k: &[u64] = if k < i {
                    &head[k * words..k * words + words]
                } else if k > i {
                    &rest[(k - i - 1) * words..(k - i - 1) * words + words]
                } else {
                    row_i
                };
                for w in 0..words {
                    row_i[w] |= row_k[w];
                }
            }
        }
    }
    (0..n)
        .map(|l| {
            let mut count = 0usize;
            for w in 0..words {
                count += reach[l * words + w].count_ones() as usize;
            }
            // reachability of the location itself does not count
            if reach[l * words + l / 64] & (1 << (l % 64)) != 0 {
                count -= 1;
            }
            count
        })
        .collect()
}

/// Image of one edge: values the tracked variables can take at the target,
/// starting from source evaluations whose projection lies in `src_domain`.
/// Evaluations are enumerated over the edge's support (guard and update
/// variables plus the tracked set); all other variables stay at defaults and
/// are never read.
fn edge_image(
    g: &CombinedGraph,
    edge: &CombinedEdge,
    vars: &VarSet,
    src_domain: &BTreeSet<Box<[Value]>>,
    cap: u64,
) -> Result<BTreeSet<Box<[Value]>>> {
    let table = &g.mas.vtable;
    let guard_vars = eval::vars_of_expr(&edge.guard, table);
    let update_vars = eval::vars_of_update(&edge.update, table);
    let support = guard_vars.union(&update_vars, table).union(vars, table);
    let size = support.domain_size(table);
    if size > u128::from(cap) {
        return Err(MasgError::EnumBudget(size, cap));
    }
    // positions of the tracked slots within the support projection
    let track_pos: Vec<usize> = vars
        .slots()
        .iter()
        .map(|s| {
            support
                .slots()
                .iter()
                .position(|t| t == s)
                .expect("tracked set is part of the support")
        })
        .collect();

    let mut out = BTreeSet::new();
    let mut scratch = table.defaults();
    for vec in support.enumerate(table) {
        let tracked: Box<[Value]> = track_pos.iter().map(|p| vec[*p]).collect();
        if !src_domain.contains(&tracked) {
            continue;
        }
        for (slot, v) in support.slots().iter().zip(vec.iter()) {
            scratch[*slot] = *v;
        }
        match eval_guard(&edge.guard, &scratch, table) {
            Ok(true) => {}
            Ok(false) | Err(_) => continue,
        }
        match eval::effect(&edge.update, &scratch, table) {
            Ok(next) => {
                out.insert(vars.project(&next));
            }
            Err(_) => continue,
        }
    }
    Ok(out)
}

struct Worklist {
    heap: std::collections::BinaryHeap<(usize, std::cmp::Reverse<u64>, usize)>,
    queued: Vec<bool>,
    seq: u64,
    rank: Vec<usize>,
}

impl Worklist {
    fn new(rank: Vec<usize>) -> Self {
        Worklist {
            heap: Default::default(),
            queued: vec![false; rank.len()],
            seq: 0,
            rank,
        }
    }

    fn push(&mut self, l: usize) {
        if !self.queued[l] {
            self.queued[l] = true;
            self.seq += 1;
            self.heap.push((self.rank[l], std::cmp::Reverse(self.seq), l));
        }
    }

    fn pop(&mut self) -> Option<usize> {
        let (_, _, l) = self.heap.pop()?;
        self.queued[l] = false;
        Some(l)
    }
}

/// Exact reachable projections per location, by explicit exploration of the
/// combined graph within a state budget.
pub fn exact_local_domain(
    g: &CombinedGraph,
    vars: &VarSet,
    budget: usize,
) -> Result<Vec<BTreeSet<Box<[Value]>>>> {
    let table = &g.mas.vtable;
    let mut per_loc: Vec<BTreeSet<Box<[Value]>>> = vec![BTreeSet::new(); g.loc_count()];
    let mut seen: std::collections::HashSet<(u32, Box<[Value]>)> = Default::default();
    let init = (g.init as u32, g.mas.eta0.clone());
    per_loc[g.init].insert(vars.project(&init.1));
    seen.insert(init.clone());
    let mut stack = vec![init];
    while let Some((loc, vals)) = stack.pop() {
        for e in &g.edges[loc as usize] {
            match eval_guard(&e.guard, &vals, table) {
                Ok(true) => {}
                _ => continue,
            }
            let next = match eval::effect(&e.update, &vals, table) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let key = (e.dst as u32, next);
            if !seen.contains(&key) {
                if seen.len() >= budget {
                    return Err(MasgError::StateBudget {
                        explored: seen.len(),
                        cap: budget,
                        frontier: stack.len(),
                    });
                }
                per_loc[e.dst].insert(vars.project(&key.1));
                seen.insert(key.clone());
                stack.push(key);
            }
        }
    }
    Ok(per_loc)
}

/// The worklist fixpoint: seeds the initial location with the initial
/// projection, then repeatedly folds incoming-edge images into each
/// location's set (self-loops iterated to local stabilization), re-enqueuing
/// successors whenever a set grows. Locations never reached in the location
/// digraph keep the empty set.
fn propagate(
    g: &CombinedGraph,
    vars: &VarSet,
    opts: &DomainOptions,
) -> Result<Vec<BTreeSet<Box<[Value]>>>> {
    let n = g.loc_count();
    let rank = if opts.priority && n <= opts.warshall_cap {
        reachability_index(g)
    } else {
        vec![0; n]
    };

    // incoming edges per location, excluding self-loops
    let mut incoming: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (src, edges) in g.edges.iter().enumerate() {
        for (ei, e) in edges.iter().enumerate() {
            if e.dst != src {
                incoming[e.dst].push((src, ei));
            }
        }
    }

    let mut table: Vec<BTreeSet<Box<[Value]>>> = vec![BTreeSet::new(); n];
    table[g.init].insert(vars.project(&g.mas.eta0));
    let mut pending: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut visited = vec![false; n];
    let mut wl = Worklist::new(rank);
    wl.push(g.init);

    while let Some(l) = wl.pop() {
        let mut changed = false;
        // incoming edges from predecessors whose sets grew
        let preds: Vec<usize> = pending[l].iter().copied().collect();
        pending[l].clear();
        for (src, ei) in &incoming[l] {
            if !preds.contains(src) {
                continue;
            }
            let img = edge_image(g, &g.edges[*src][*ei], vars, &table[*src], opts.support_cap)?;
            for v in img {
                changed |= table[l].insert(v);
            }
        }
        // self-loops, repeated until stable
        loop {
            let mut grew = false;
            for e in &g.edges[l] {
                if e.dst != l {
                    continue;
                }
                let img = edge_image(g, e, vars, &table[l], opts.support_cap)?;
                for v in img {
                    grew |= table[l].insert(v);
                }
            }
            changed |= grew;
            if !grew {
                break;
            }
        }
        // first visit or growth: successors must look again
        if changed || !visited[l] {
            for e in &g.edges[l] {
                if e.dst == l {
                    continue;
                }
                pending[e.dst].insert(l);
                wl.push(e.dst);
            }
        }
        visited[l] = true;
    }
    Ok(table)
}

/// One full sweep of the fixpoint step over every location; returns whether
/// anything changed. Used to confirm stability of a computed table.
pub fn sweep_once(
    g: &CombinedGraph,
    vars: &VarSet,
    table: &mut Vec<BTreeSet<Box<[Value]>>>,
    opts: &DomainOptions,
) -> Result<bool> {
    let mut changed = false;
    for l in 0..g.loc_count() {
        for (src, edges) in g.edges.iter().enumerate() {
            for e in edges {
                if e.dst != l {
                    continue;
                }
                let img = edge_image(g, e, vars, &table[src], opts.support_cap)?;
                for v in img {
                    changed |= table[l].insert(v);
                }
            }
        }
    }
    Ok(changed)
}

/// Computes the per-location approximation of reachable values for `vars`.
pub fn approx_local_domain(
    g: &CombinedGraph,
    vars: &VarSet,
    mode: DomainMode,
    opts: &DomainOptions,
) -> Result<LocalDomain> {
    let raw = propagate(g, vars, opts)?;
    match mode {
        DomainMode::Upper => Ok(LocalDomain {
            mode,
            vars: vars.clone(),
            table: raw,
            status: DomainStatus::UpperSound,
        }),
        DomainMode::Lower => {
            if !opts.verify_lower {
                return Ok(LocalDomain {
                    mode,
                    vars: vars.clone(),
                    table: raw,
                    status: DomainStatus::LowerUnverified {
                        reason: "verification disabled".into(),
                    },
                });
            }
            match exact_local_domain(g, vars, opts.verify_budget) {
                Ok(exact) => {
                    let mut over_reported = 0usize;
                    let table: Vec<BTreeSet<Box<[Value]>>> = raw
                        .iter()
                        .zip(&exact)
                        .map(|(r, e)| {
                            over_reported += r.difference(e).count();
                            r.intersection(e).cloned().collect()
                        })
                        .collect();
                    if over_reported > 0 {
                        log::debug!(
                            "lower-mode domain pruned {over_reported} unwitnessed value(s)"
                        );
                    }
                    Ok(LocalDomain {
                        mode,
                        vars: vars.clone(),
                        table,
                        status: DomainStatus::LowerVerified,
                    })
                }
                Err(MasgError::StateBudget { explored, cap, .. }) => Ok(LocalDomain {
                    mode,
                    vars: vars.clone(),
                    table: raw,
                    status: DomainStatus::LowerUnverified {
                        reason: format!(
                            "witness exploration exceeded the budget ({explored} of {cap} states)"
                        ),
                    },
                }),
                Err(other) => Err(other),
            }
        }
    }
}

/// Narrows a combined-location domain onto agent `i` by union over product
/// locations sharing the component.
pub fn narrow(d: &LocalDomain, g: &CombinedGraph, agent: usize) -> NarrowedDomain {
    let locs = g.mas.agents[agent].locations.len();
    let mut table: Vec<BTreeSet<Box<[Value]>>> = vec![BTreeSet::new(); locs];
    for l in 0..g.loc_count() {
        let comp = g.component(l, agent) as usize;
        for v in &d.table[l] {
            table[comp].insert(v.clone());
        }
    }
    NarrowedDomain {
        agent,
        mode: d.mode,
        vars: d.vars.clone(),
        table,
        status: d.status.clone(),
    }
}

/// Coarse per-template approximation: the agent analysed standalone. Upper
/// mode erases synchronization labels (keeping the edges); lower mode
/// deletes synchronizing edges entirely.
pub fn template_domain(
    mas: &crate::ast::MasGraph,
    agent: usize,
    vars: &VarSet,
    mode: DomainMode,
    opts: &DomainOptions,
) -> Result<NarrowedDomain> {
    let mut solo = mas.agents[agent].clone();
    match mode {
        DomainMode::Upper => {
            for e in &mut solo.edges {
                e.sync = None;
            }
        }
        DomainMode::Lower => {
            solo.edges.retain(|e| e.sync.is_none());
        }
    }
    let solo_mas = crate::ast::MasGraph {
        vtable: mas.vtable.clone(),
        channels: mas.channels.clone(),
        shared_vars: mas.shared_vars.clone(),
        agents: vec![solo],
        g0_extra: None,
        eta0: mas.eta0.clone(),
    };
    let g = crate::compose::combine(&solo_mas)?;
    let d = approx_local_domain(&g, vars, mode, opts)?;
    // single-agent product: combined location index == local location index
    let mut table: Vec<BTreeSet<Box<[Value]>>> =
        vec![BTreeSet::new(); mas.agents[agent].locations.len()];
    for l in 0..g.loc_count() {
        let comp = g.component(l, 0) as usize;
        for v in &d.table[l] {
            table[comp].insert(v.clone());
        }
    }
    Ok(NarrowedDomain {
        agent,
        mode,
        vars: vars.clone(),
        table,
        status: d.status,
    })
}

/// Map from location display name to sorted value vectors; convenient for
/// asserting expected tables in tests.
pub fn domain_by_name(d: &LocalDomain, g: &CombinedGraph) -> HashMap<String, Vec<Vec<Value>>> {
    (0..g.loc_count())
        .map(|l| {
            (
                g.loc_name(l),
                d.table[l].iter().map(|v| v.to_vec()).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::combine;
    use crate::parse::parse_mas;

    #[test]
    fn single_location_has_zero_index() {
        let mas = parse_mas("agent A { loc a; init a; }", "<t>").unwrap();
        let g = combine(&mas).unwrap();
        assert_eq!(reachability_index(&g), vec![0]);
    }

    #[test]
    fn directed_cycle_has_uniform_index() {
        let mas = parse_mas(
            "agent A { loc a, b, c, d; init a;
               edge a -> b edge b -> c edge c -> d edge d -> a }",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        assert_eq!(reachability_index(&g), vec![3, 3, 3, 3]);
    }

    #[test]
    fn unassigned_vars_keep_initial_value_everywhere_reachable() {
        let mas = parse_mas(
            "agent A { var x: 0..5 = 3; loc a, b, c; init a;
               edge a -> b edge b -> c }",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        let vars = VarSet::from_iter([mas.vtable.lookup("A.x").unwrap()], &mas.vtable);
        let d = approx_local_domain(&g, &vars, DomainMode::Upper, &DomainOptions::default())
            .unwrap();
        for l in 0..g.loc_count() {
            assert_eq!(d.table[l].iter().collect::<Vec<_>>(), vec![&vec![3].into()]);
        }
    }

    #[test]
    fn unreachable_location_keeps_empty_set() {
        let mas = parse_mas(
            "agent A { var x: 0..1 = 0; loc a, b; init a; edge b -> b do x := 1 }",
            "<t>",
        )
        .unwrap();
        let g = combine(&mas).unwrap();
        let vars = VarSet::from_iter([mas.vtable.lookup("A.x").unwrap()], &mas.vtable);
        let d = approx_local_domain(&g, &vars, DomainMode::Upper, &DomainOptions::default())
            .unwrap();
        assert_eq!(d.table[0].len(), 1);
        assert!(d.table[1].is_empty());
    }

    #[test]
    fn fifo_and_priority_reach_same_fixpoint() {
        let src = "
            agent A { var x: 0..4 = 0; loc a, b, c; init a;
              edge a -> b do x := x + 1
              edge b -> c do x := x + 1
              edge c -> a do x := 0
              edge b -> b [x < 4] do x := x + 1 }
        ";
        let mas = parse_mas(src, "<t>").unwrap();
        let g = combine(&mas).unwrap();
        let vars = VarSet::from_iter([mas.vtable.lookup("A.x").unwrap()], &mas.vtable);
        let pri = approx_local_domain(&g, &vars, DomainMode::Upper, &DomainOptions::default())
            .unwrap();
        let fifo = approx_local_domain(
            &g,
            &vars,
            DomainMode::Upper,
            &DomainOptions {
                priority: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(pri.table, fifo.table);
    }

    #[test]
    fn fixpoint_is_stable_under_one_more_sweep() {
        let src = "
            agent A { var x: 0..4 = 0; var y: 0..4 = 0; loc a, b; init a;
              edge a -> b do x := x + 1; y := x
              edge b -> a [y < 4] do y := y + 1 }
        ";
        let mas = parse_mas(src, "<t>").unwrap();
        let g = combine(&mas).unwrap();
        let vars = VarSet::from_iter(
            [
                mas.vtable.lookup("A.x").unwrap(),
                mas.vtable.lookup("A.y").unwrap(),
            ],
            &mas.vtable,
        );
        let opts = DomainOptions::default();
        let d = approx_local_domain(&g, &vars, DomainMode::Upper, &opts).unwrap();
        let mut table = d.table.clone();
        let changed = sweep_once(&g, &vars, &mut table, &opts).unwrap();
        assert!(!changed);
    }

    #[test]
    fn lower_mode_prunes_unwitnessed_values() {
        // y is only ever 0 reachably, so the guarded write x := 1 never
        // fires; the raw lower propagation over-reports x = 1 at b.
        let src = "
            agent A { var x: 0..1 = 0; var y: 0..1 = 0; loc a, b; init a;
              edge a -> b [y == 1] do x := 1
              edge a -> b [y == 0] }
        ";
        let mas = parse_mas(src, "<t>").unwrap();
        let g = combine(&mas).unwrap();
        let vars = VarSet::from_iter([mas.vtable.lookup("A.x").unwrap()], &mas.vtable);
        let raw = approx_local_domain(
            &g,
            &vars,
            DomainMode::Lower,
            &DomainOptions {
                verify_lower: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(raw.table[1].len(), 2, "raw propagation over-reports");
        assert!(matches!(raw.status, DomainStatus::LowerUnverified { .. }));
        let verified =
            approx_local_domain(&g, &vars, DomainMode::Lower, &DomainOptions::default()).unwrap();
        assert_eq!(verified.status, DomainStatus::LowerVerified);
        assert_eq!(verified.table[1].len(), 1);
        assert!(verified.table[1].contains(&vec![0].into_boxed_slice()));
    }

    #[test]
    fn narrow_unions_over_shared_components() {
        let src = "
            system { chan c; }
            agent A { var x: 0..2 = 0; loc a0, a1; init a0;
              edge a0 -> a1 sync(c!) do x := 1
              edge a0 -> a1 sync(c!) do x := 2 }
            agent B { loc b0, b1; init b0;
              edge b0 -> b1 sync(c?)
              edge b0 -> b0 sync(c?) }
        ";
        let mas = parse_mas(src, "<t>").unwrap();
        let g = combine(&mas).unwrap();
        let vars = VarSet::from_iter([mas.vtable.lookup("A.x").unwrap()], &mas.vtable);
        let d = approx_local_domain(&g, &vars, DomainMode::Upper, &DomainOptions::default())
            .unwrap();
        let n = narrow(&d, &g, 0);
        // at local a1, x may be 1 or 2 regardless of B's component
        assert_eq!(n.table[1].len(), 2);
        // single-agent narrowing is the identity
        let solo = parse_mas("agent S { var x: 0..1 = 0; loc s; init s; }", "<t>").unwrap();
        let gs = combine(&solo).unwrap();
        let vs = VarSet::from_iter([solo.vtable.lookup("S.x").unwrap()], &solo.vtable);
        let ds = approx_local_domain(&gs, &vs, DomainMode::Upper, &DomainOptions::default())
            .unwrap();
        let ns = narrow(&ds, &gs, 0);
        assert_eq!(ns.table, ds.table);
    }

    #[test]
    fn template_modes_handle_sync_edges() {
        let src = "
            system { chan c; }
            agent A { var x: 0..2 = 0; loc a0, a1; init a0;
              edge a0 -> a1 sync(c!) do x := 2 }
            agent B { loc b0, b1; init b0; edge b0 -> b1 sync(c?) }
        ";
        let mas = parse_mas(src, "<t>").unwrap();
        let vars = VarSet::from_iter([mas.vtable.lookup("A.x").unwrap()], &mas.vtable);
        let up = template_domain(&mas, 0, &vars, DomainMode::Upper, &DomainOptions::default())
            .unwrap();
        // sync label erased: the edge still contributes in upper mode
        assert!(up.table[1].contains(&vec![2].into_boxed_slice()));
        let low = template_domain(&mas, 0, &vars, DomainMode::Lower, &DomainOptions::default())
            .unwrap();
        // sync edge deleted: only the seeded initial location remains
        assert!(low.table[1].is_empty());
        assert!(low.table[0].contains(&vec![0].into_boxed_slice()));
    }
}
