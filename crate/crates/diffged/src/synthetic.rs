//! Synthetic training pairs with known edit costs: apply `delta` random edit
//! operations to a base graph, never touching the same node or edge slot
//! twice, so the identity-extended mapping costs exactly `delta`.
//!
//! Non-canceling sequences make `delta` an upper bound that is almost always
//! tight; [`build_corpus`] additionally checks small pairs against the exact
//! oracle and resamples the rare sequence that a cheaper mapping can beat
//! (e.g. two relabels that merely swap labels between symmetric nodes).

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::edit_path::NodeMapping;
use crate::error::{Error, Result};
use crate::graph::{GraphPair, LabeledGraph};
use crate::oracle;
use crate::rng::stream;

/// Delta range used in corpus generation for a base graph of `n` nodes.
pub fn auto_delta_range(n: usize) -> (u32, u32) {
    if n > 20 {
        (1, 10)
    } else {
        (1, 5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpKind {
    Relabel,
    InsertNode,
    InsertEdge,
    DeleteEdge,
}

/// Applies `delta` non-canceling random edits to `g` and returns the pair
/// `(g, edited)` annotated with the identity-extended mapping and
/// `ground_truth_ged = delta`.
///
/// Edits draw from relabels (when `vocab_size > 1`), node insertions (at most
/// `max_new_nodes`), edge insertions and edge deletions. Node deletions are
/// not generated: they would leave the identity mapping partial. Fails when
/// fewer than `delta` non-canceling edits are available.
pub fn generate_synthetic_pair(
    g: &LabeledGraph,
    delta: u32,
    vocab_size: usize,
    max_new_nodes: usize,
    rng_seed: u64,
) -> Result<GraphPair> {
    if delta == 0 {
        return Err(Error::InvalidArgument("delta must be at least 1".into()));
    }
    if vocab_size == 0 {
        return Err(Error::InvalidArgument("vocabulary must be non-empty".into()));
    }
    if let Some(&bad) = g.labels().iter().find(|&&l| l as usize >= vocab_size) {
        return Err(Error::Validation(format!(
            "base graph label {bad} outside vocabulary of size {vocab_size}"
        )));
    }

    let mut rng = stream(rng_seed, 0);
    let mut labels = g.labels().to_vec();
    let mut edges: HashSet<(usize, usize)> = g.edges().iter().copied().collect();
    let mut node_count = g.node_count();
    let mut touched_nodes: HashSet<usize> = HashSet::new();
    let mut touched_slots: HashSet<(usize, usize)> = HashSet::new();

    for step in 0..delta {
        let mut kinds = Vec::new();
        let relabel_candidates: Vec<usize> = if vocab_size > 1 {
            (0..node_count).filter(|v| !touched_nodes.contains(v)).collect()
        } else {
            Vec::new()
        };
        if !relabel_candidates.is_empty() {
            kinds.push(OpKind::Relabel);
        }
        if node_count - g.node_count() < max_new_nodes {
            kinds.push(OpKind::InsertNode);
        }
        let mut free_slots = Vec::new();
        let mut live_edges = Vec::new();
        for u in 0..node_count {
            for v in (u + 1)..node_count {
                let slot = (u, v);
                if touched_slots.contains(&slot) {
                    continue;
                }
                if edges.contains(&slot) {
                    live_edges.push(slot);
                } else {
                    free_slots.push(slot);
                }
            }
        }
        if !free_slots.is_empty() {
            kinds.push(OpKind::InsertEdge);
        }
        if !live_edges.is_empty() {
            kinds.push(OpKind::DeleteEdge);
        }
        if kinds.is_empty() {
            return Err(Error::Generation(format!(
                "no legal non-canceling edit left at step {step} of {delta}"
            )));
        }

        match *kinds.choose(&mut rng).expect("non-empty") {
            OpKind::Relabel => {
                let &node = relabel_candidates.choose(&mut rng).expect("non-empty");
                let offset = rng.random_range(1..vocab_size as u32);
                labels[node] = (labels[node] + offset) % vocab_size as u32;
                touched_nodes.insert(node);
            }
            OpKind::InsertNode => {
                labels.push(rng.random_range(0..vocab_size as u32));
                touched_nodes.insert(node_count);
                node_count += 1;
            }
            OpKind::InsertEdge => {
                let &slot = free_slots.choose(&mut rng).expect("non-empty");
                edges.insert(slot);
                touched_slots.insert(slot);
            }
            OpKind::DeleteEdge => {
                let &slot = live_edges.choose(&mut rng).expect("non-empty");
                edges.remove(&slot);
                touched_slots.insert(slot);
            }
        }
    }

    let mut edge_list: Vec<(usize, usize)> = edges.into_iter().collect();
    edge_list.sort_unstable();
    let edited = LabeledGraph::new(node_count, edge_list, labels)?;
    let mapping = NodeMapping::identity(g.node_count());
    // `GraphPair::new` re-checks that the identity mapping costs exactly delta.
    GraphPair::new(g.clone(), edited, Some(mapping), Some(delta))
}

/// Erdos-Renyi-style base graph with `node_count` nodes, independent edge
/// probability `edge_prob`, and labels uniform over the vocabulary (all zero
/// when `vocab_size == 1`).
pub fn random_base_graph<R: Rng>(
    node_count: usize,
    edge_prob: f64,
    vocab_size: usize,
    rng: &mut R,
) -> LabeledGraph {
    let mut edges = Vec::new();
    for u in 0..node_count {
        for v in (u + 1)..node_count {
            if rng.random::<f64>() < edge_prob {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..node_count)
        .map(|_| if vocab_size > 1 { rng.random_range(0..vocab_size as u32) } else { 0 })
        .collect();
    LabeledGraph::new(node_count, edges, labels).expect("generated edges are valid")
}

/// Builds `per_graph` synthetic partners for every base graph.
///
/// Deltas are uniform in `delta_range`, or in [`auto_delta_range`] of each
/// base's size when `None`. When `verify_small_with_oracle` is set, every
/// pair whose smaller side has at most 8 nodes is checked against the exact
/// oracle and regenerated with a fresh sub-seed until the recorded delta
/// equals the true GED (bounded retries).
pub fn build_corpus(
    bases: &[LabeledGraph],
    per_graph: usize,
    delta_range: Option<(u32, u32)>,
    vocab_size: usize,
    max_new_nodes: usize,
    seed: u64,
    verify_small_with_oracle: bool,
) -> Result<Vec<GraphPair>> {
    if let Some((lo, hi)) = delta_range {
        if lo == 0 || lo > hi {
            return Err(Error::InvalidArgument(format!("bad delta range ({lo}, {hi})")));
        }
    }
    // One independent seed stream per (base, partner) slot: generation order
    // never matters, so the slots can run in parallel.
    let jobs: Vec<(usize, usize)> =
        (0..bases.len()).flat_map(|b| (0..per_graph).map(move |p| (b, p))).collect();
    jobs.par_iter()
        .map(|&(base_idx, partner)| -> Result<GraphPair> {
            let base = &bases[base_idx];
            let (delta_lo, delta_hi) =
                delta_range.unwrap_or_else(|| auto_delta_range(base.node_count()));
            let pair_seed =
                stream(seed, (base_idx * per_graph + partner) as u64).random::<u64>();
            let mut attempt = 0u64;
            loop {
                let mut rng = stream(pair_seed, attempt);
                let delta = rng.random_range(delta_lo..=delta_hi);
                let candidate = generate_synthetic_pair(
                    base,
                    delta,
                    vocab_size,
                    max_new_nodes,
                    rng.random::<u64>(),
                )?;
                if !verify_small_with_oracle || candidate.g.node_count() > 8 {
                    return Ok(candidate);
                }
                let exact = oracle::exact_ged_astar(&candidate, 2_000_000)?;
                if exact.optimal && exact.ged == delta {
                    return Ok(candidate);
                }
                attempt += 1;
                if attempt > 50 {
                    return Err(Error::Generation(format!(
                        "could not realize an exact delta for base {base_idx} partner {partner}"
                    )));
                }
            }
        })
        .collect()
}
