//! Edit-path recovery: turning an injective node mapping into a concrete edit
//! script whose length upper-bounds the graph edit distance.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GraphPair, LabeledGraph};

/// Injective assignment of every node of the smaller graph to a distinct node
/// of the larger graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct NodeMapping {
    assignments: Vec<usize>,
}

impl NodeMapping {
    /// Validates injectivity and that every target index is below `target_size`.
    pub fn new(assignments: Vec<usize>, target_size: usize) -> Result<Self> {
        let mapping = Self { assignments };
        mapping.validate(mapping.assignments.len(), target_size)?;
        Ok(mapping)
    }

    pub fn identity(len: usize) -> Self {
        Self { assignments: (0..len).collect() }
    }

    pub fn validate(&self, source_size: usize, target_size: usize) -> Result<()> {
        if self.assignments.len() != source_size {
            return Err(Error::Validation(format!(
                "mapping covers {} nodes but the source graph has {source_size}",
                self.assignments.len()
            )));
        }
        let mut seen = vec![false; target_size];
        for &v in &self.assignments {
            if v >= target_size {
                return Err(Error::Validation(format!(
                    "mapping target {v} is outside 0..{target_size}"
                )));
            }
            if seen[v] {
                return Err(Error::Validation(format!("mapping is not injective: {v} repeats")));
            }
            seen[v] = true;
        }
        Ok(())
    }

    pub fn get(&self, v: usize) -> usize {
        self.assignments[v]
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assignments
    }
}

/// One unit-cost edit operation. Node indices refer to the source graph's
/// index space, extended by inserted nodes in script order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Relabel { node: usize, new_label: u32 },
    InsertNode { label: u32, matched_to: usize },
    DeleteEdge { u: usize, v: usize },
    InsertEdge { u: usize, v: usize },
}

/// A feasible edit path: replaying `ops` on the pair's smaller graph yields a
/// graph equal to the larger one under the extended mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
    pub cost: u32,
}

impl EditScript {
    /// Applies the script to `g`, appending inserted nodes after the existing ones.
    pub fn apply(&self, g: &LabeledGraph) -> Result<LabeledGraph> {
        let mut labels = g.labels().to_vec();
        let mut edges: Vec<(usize, usize)> = g.edges().to_vec();
        for op in &self.ops {
            match *op {
                EditOp::Relabel { node, new_label } => {
                    if node >= labels.len() {
                        return Err(Error::Validation(format!("relabel of unknown node {node}")));
                    }
                    labels[node] = new_label;
                }
                EditOp::InsertNode { label, .. } => labels.push(label),
                EditOp::DeleteEdge { u, v } => {
                    let key = (u.min(v), u.max(v));
                    let pos = edges
                        .iter()
                        .position(|&e| e == key)
                        .ok_or_else(|| Error::Validation(format!("deleting absent edge {key:?}")))?;
                    edges.swap_remove(pos);
                }
                EditOp::InsertEdge { u, v } => edges.push((u.min(v), u.max(v))),
            }
        }
        LabeledGraph::new(labels.len(), edges, labels)
    }
}

/// Derives the edit script induced by mapping `f`, in four deterministic
/// phases: relabels, node insertions, edge deletions, edge insertions.
///
/// An edge `(u, v)` of the source survives exactly when its image
/// `(f(u), f(v))` is an edge of the target; otherwise it is deleted. Target
/// edges with no surviving preimage are inserted. Inserted nodes adopt the
/// label of the target node they are matched to, so they never need a relabel.
pub fn derive_edit_path(pair: &GraphPair, f: &NodeMapping) -> Result<EditScript> {
    let g = &pair.g;
    let gp = &pair.g_prime;
    let n = g.node_count();
    let np = gp.node_count();
    f.validate(n, np)?;

    let mut ops = Vec::new();

    // Phase 1: relabels.
    for v in 0..n {
        let target_label = gp.label(f.get(v));
        if g.label(v) != target_label {
            ops.push(EditOp::Relabel { node: v, new_label: target_label });
        }
    }

    // Phase 2: node insertions for unmatched target nodes; extend the mapping.
    let mut inverse = vec![usize::MAX; np];
    for v in 0..n {
        inverse[f.get(v)] = v;
    }
    let mut next_index = n;
    for vp in 0..np {
        if inverse[vp] == usize::MAX {
            ops.push(EditOp::InsertNode { label: gp.label(vp), matched_to: vp });
            inverse[vp] = next_index;
            next_index += 1;
        }
    }

    // Phase 3: delete source edges whose image is not a target edge.
    for &(u, v) in g.edges() {
        if !gp.has_edge(f.get(u), f.get(v)) {
            ops.push(EditOp::DeleteEdge { u, v });
        }
    }

    // Phase 4: insert target edges with no surviving preimage.
    for &(up, vp) in gp.edges() {
        let a = inverse[up];
        let b = inverse[vp];
        let covered = a < n && b < n && g.has_edge(a, b);
        if !covered {
            ops.push(EditOp::InsertEdge { u: a.min(b), v: a.max(b) });
        }
    }

    let cost = ops.len() as u32;
    Ok(EditScript { ops, cost })
}

/// Cost of the edit path induced by `f`, without materializing the script.
/// Runs in `O(|V'| + |E| + |E'|)` given the graphs' edge indices.
pub fn edit_cost(pair: &GraphPair, f: &NodeMapping) -> Result<u32> {
    let g = &pair.g;
    let gp = &pair.g_prime;
    f.validate(g.node_count(), gp.node_count())?;

    let mut label_mismatches = 0u32;
    for v in 0..g.node_count() {
        if g.label(v) != gp.label(f.get(v)) {
            label_mismatches += 1;
        }
    }
    let mut matched_edges = 0u32;
    for &(u, v) in g.edges() {
        if gp.has_edge(f.get(u), f.get(v)) {
            matched_edges += 1;
        }
    }
    let insertions = (gp.node_count() - g.node_count()) as u32;
    let cost = label_mismatches + insertions + g.edge_count() as u32 + gp.edge_count() as u32
        - 2 * matched_edges;
    Ok(cost)
}

/// Checks that replaying `script` on the pair's smaller graph produces a graph
/// equal to the larger one under the script's extended mapping.
pub fn verify_replay(pair: &GraphPair, f: &NodeMapping, script: &EditScript) -> Result<()> {
    let result = script.apply(&pair.g)?;
    let gp = &pair.g_prime;
    if result.node_count() != gp.node_count() {
        return Err(Error::Validation(format!(
            "replayed graph has {} nodes, target has {}",
            result.node_count(),
            gp.node_count()
        )));
    }

    // Extended mapping: original nodes follow f, inserted nodes follow their
    // recorded match, in script order.
    let n = pair.g.node_count();
    let mut ext = Vec::with_capacity(result.node_count());
    ext.extend((0..n).map(|v| f.get(v)));
    for op in &script.ops {
        if let EditOp::InsertNode { matched_to, .. } = op {
            ext.push(*matched_to);
        }
    }
    let mapping = NodeMapping::new(ext, gp.node_count())?;

    for x in 0..result.node_count() {
        if result.label(x) != gp.label(mapping.get(x)) {
            return Err(Error::Validation(format!("label mismatch at replayed node {x}")));
        }
    }
    if result.edge_count() != gp.edge_count() {
        return Err(Error::Validation(format!(
            "replayed graph has {} edges, target has {}",
            result.edge_count(),
            gp.edge_count()
        )));
    }
    for &(a, b) in result.edges() {
        if !gp.has_edge(mapping.get(a), mapping.get(b)) {
            return Err(Error::Validation(format!("replayed edge ({a},{b}) has no target image")));
        }
    }
    Ok(())
}
