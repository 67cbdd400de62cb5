//! Exact GED solvers for small graphs: exhaustive enumeration over injective
//! mappings, and A* over assignment prefixes with an admissible label/edge
//! lower bound. These are the ground-truth reference for everything else.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::diffusion::MatchingMatrix;
use crate::edit_path::NodeMapping;
use crate::error::{Error, Result};
use crate::graph::GraphPair;

/// Largest smaller-side node count the exhaustive solver accepts.
pub const BRUTE_FORCE_NODE_LIMIT: usize = 8;

/// Largest larger-side node count the A* solver accepts (column bitmask width).
pub const ASTAR_TARGET_LIMIT: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub ged: u32,
    /// Mappings attaining `ged`, lexicographically ordered, truncated to the cap.
    pub optimal_mappings: Vec<NodeMapping>,
    /// False when a search budget ran out before optimality was proven.
    pub optimal: bool,
}

/// Exhaustive minimum edit cost over all injective mappings.
///
/// Refuses instances with more than [`BRUTE_FORCE_NODE_LIMIT`] nodes on the
/// smaller side; use [`exact_ged_astar`] for those.
pub fn exact_ged_bruteforce(pair: &GraphPair, mapping_cap: usize) -> Result<OracleResult> {
    let n = pair.g.node_count();
    if n > BRUTE_FORCE_NODE_LIMIT {
        return Err(Error::SizeGuard(format!(
            "brute force is limited to {BRUTE_FORCE_NODE_LIMIT} nodes on the smaller side \
             (got {n}); use exact_ged_astar instead"
        )));
    }
    let np = pair.g_prime.node_count();
    let mut search = BruteForce {
        pair,
        assignments: vec![0; n],
        used: vec![false; np],
        best: u32::MAX,
        mappings: Vec::new(),
        cap: mapping_cap,
    };
    search.recurse(0, 0, 0);
    Ok(OracleResult { ged: search.best, optimal_mappings: search.mappings, optimal: true })
}

struct BruteForce<'a> {
    pair: &'a GraphPair,
    assignments: Vec<usize>,
    used: Vec<bool>,
    best: u32,
    mappings: Vec<NodeMapping>,
    cap: usize,
}

impl BruteForce<'_> {
    /// Enumerates assignments in lexicographic order, carrying the label
    /// mismatches and matched-edge count of the assigned prefix.
    fn recurse(&mut self, depth: usize, label_mm: u32, matched: u32) {
        let n = self.pair.g.node_count();
        if depth == n {
            let np = self.pair.g_prime.node_count();
            let cost = label_mm + (np - n) as u32 + self.pair.g.edge_count() as u32
                + self.pair.g_prime.edge_count() as u32
                - 2 * matched;
            if cost < self.best {
                self.best = cost;
                self.mappings.clear();
            }
            if cost == self.best && self.mappings.len() < self.cap {
                let np = self.pair.g_prime.node_count();
                self.mappings.push(
                    NodeMapping::new(self.assignments.clone(), np)
                        .expect("enumeration yields injective mappings"),
                );
            }
            return;
        }
        let np = self.pair.g_prime.node_count();
        for vp in 0..np {
            if self.used[vp] {
                continue;
            }
            self.used[vp] = true;
            self.assignments[depth] = vp;
            let mm = label_mm + u32::from(self.pair.g.label(depth) != self.pair.g_prime.label(vp));
            let mut m = matched;
            for &u in self.pair.g.neighbors(depth) {
                if u < depth && self.pair.g_prime.has_edge(self.assignments[u], vp) {
                    m += 1;
                }
            }
            self.recurse(depth + 1, mm, m);
            self.used[vp] = false;
        }
    }
}

#[derive(Clone)]
struct AstarState {
    depth: usize,
    assignments: Vec<usize>,
    used_mask: u32,
    /// Exact cost of everything decided so far, including the fixed node
    /// insertion count.
    g_cost: u32,
    /// Edges of each side with both endpoints decided.
    both_e: u32,
    both_ep: u32,
}

/// A* over assignment prefixes. The heuristic is the sum of a label-multiset
/// mismatch lower bound and an undecided-edge count difference lower bound,
/// both admissible.
pub fn exact_ged_astar(pair: &GraphPair, node_budget: usize) -> Result<OracleResult> {
    let n = pair.g.node_count();
    let np = pair.g_prime.node_count();
    if np > ASTAR_TARGET_LIMIT {
        return Err(Error::SizeGuard(format!(
            "A* solver supports at most {ASTAR_TARGET_LIMIT} nodes on the larger side (got {np})"
        )));
    }

    let vocab_bound = pair
        .g
        .labels()
        .iter()
        .chain(pair.g_prime.labels())
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(1);

    // (Reverse(f), Reverse(seq), state): pop lowest f first, FIFO among ties.
    let mut heap: BinaryHeap<(Reverse<u32>, Reverse<u64>, u64)> = BinaryHeap::new();
    let mut arena: Vec<AstarState> = Vec::new();
    let mut seq: u64 = 0;

    let root = AstarState {
        depth: 0,
        assignments: Vec::new(),
        used_mask: 0,
        g_cost: (np - n) as u32,
        both_e: 0,
        both_ep: 0,
    };
    let h0 = heuristic(pair, &root, vocab_bound);
    arena.push(root);
    heap.push((Reverse((np - n) as u32 + h0), Reverse(seq), 0));

    let mut best: Option<u32> = None;
    let mut optimal_mappings: Vec<NodeMapping> = Vec::new();
    let mut expansions = 0usize;
    let mut exhausted = false;
    let mut frontier_bound = 0u32;
    const MAPPING_CAP: usize = 64;

    while let Some((Reverse(f), _, idx)) = heap.pop() {
        frontier_bound = f;
        if let Some(b) = best {
            if f > b {
                break;
            }
        }
        let state = arena[idx as usize].clone();
        if state.depth == n {
            // Complete: f is the exact edit cost of this mapping.
            match best {
                None => {
                    best = Some(f);
                    optimal_mappings
                        .push(NodeMapping::new(state.assignments, np).expect("injective"));
                }
                Some(b) if f == b && optimal_mappings.len() < MAPPING_CAP => {
                    optimal_mappings
                        .push(NodeMapping::new(state.assignments, np).expect("injective"));
                }
                _ => {}
            }
            continue;
        }
        expansions += 1;
        if expansions > node_budget {
            exhausted = true;
            break;
        }
        let v = state.depth;
        for vp in 0..np {
            if state.used_mask >> vp & 1 == 1 {
                continue;
            }
            let mut child = state.clone();
            child.depth += 1;
            child.used_mask |= 1 << vp;
            child.assignments.push(vp);
            child.g_cost += u32::from(pair.g.label(v) != pair.g_prime.label(vp));
            for u in 0..v {
                let e_g = pair.g.has_edge(u, v);
                let e_gp = pair.g_prime.has_edge(child.assignments[u], vp);
                child.both_e += u32::from(e_g);
                child.both_ep += u32::from(e_gp);
                match (e_g, e_gp) {
                    (true, false) => child.g_cost += 1, // deletion decided
                    (false, true) => child.g_cost += 1, // insertion decided
                    _ => {}
                }
            }
            let mut f_child = child.g_cost;
            if child.depth == n {
                // Remaining target edges touching an unmatched node must be inserted.
                f_child += pair.g_prime.edge_count() as u32 - child.both_ep;
                child.g_cost = f_child;
            } else {
                f_child += heuristic(pair, &child, vocab_bound);
            }
            seq += 1;
            arena.push(child);
            heap.push((Reverse(f_child), Reverse(seq), (arena.len() - 1) as u64));
        }
    }

    match best {
        Some(ged) => {
            optimal_mappings.sort_by(|a, b| a.as_slice().cmp(b.as_slice()));
            Ok(OracleResult { ged, optimal_mappings, optimal: !exhausted })
        }
        None => Ok(OracleResult {
            // Lower bound from the frontier; nothing proven.
            ged: frontier_bound,
            optimal_mappings: Vec::new(),
            optimal: false,
        }),
    }
}

fn heuristic(pair: &GraphPair, state: &AstarState, vocab_bound: usize) -> u32 {
    let n = pair.g.node_count();
    let np = pair.g_prime.node_count();

    // Label-multiset mismatch over the undecided nodes.
    let mut remaining_g = vec![0i32; vocab_bound];
    for v in state.depth..n {
        remaining_g[pair.g.label(v) as usize] += 1;
    }
    for vp in 0..np {
        if state.used_mask >> vp & 1 == 0 {
            remaining_g[pair.g_prime.label(vp) as usize] -= 1;
        }
    }
    let label_bound: u32 = remaining_g.iter().filter(|&&d| d > 0).map(|&d| d as u32).sum();

    // Undecided edges on each side can cancel pairwise at best.
    let rem_e = pair.g.edge_count() as u32 - state.both_e;
    let rem_ep = pair.g_prime.edge_count() as u32 - state.both_ep;
    label_bound + rem_e.abs_diff(rem_ep)
}

/// Picks the exhaustive solver when it is allowed and A* otherwise.
pub fn exact_ged_auto(pair: &GraphPair, mapping_cap: usize, node_budget: usize) -> Result<OracleResult> {
    if pair.g.node_count() <= BRUTE_FORCE_NODE_LIMIT
        && pair.g_prime.node_count() <= BRUTE_FORCE_NODE_LIMIT + 2
    {
        exact_ged_bruteforce(pair, mapping_cap)
    } else {
        exact_ged_astar(pair, node_budget)
    }
}

/// Binary matching matrix of the pair's ground-truth mapping: exactly one 1
/// per row, at most one per column.
pub fn ground_truth_matrix(pair: &GraphPair) -> Result<MatchingMatrix> {
    let mapping = pair.ground_truth_mapping.as_ref().ok_or_else(|| {
        Error::MissingGroundTruth("pair carries no ground-truth mapping".into())
    })?;
    let mut m = MatchingMatrix::zeros(pair.g.node_count(), pair.g_prime.node_count());
    for v in 0..pair.g.node_count() {
        m.set(v, mapping.get(v), 1.0);
    }
    Ok(m)
}
