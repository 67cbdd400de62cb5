//! Graph data model: labeled undirected graphs, oriented graph pairs and the
//! label vocabulary shared by a dataset.

use std::collections::HashMap;

use crate::edit_path::{self, NodeMapping};
use crate::error::{Error, Result};

/// Undirected graph with one categorical label per node.
///
/// Edges are stored as unordered index pairs normalized to `u < v`; self-loops
/// and duplicate edges are rejected at construction. Instances are immutable
/// afterwards and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    labels: Vec<u32>,
    adjacency: Vec<Vec<usize>>,
}

impl LabeledGraph {
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != node_count {
            return Err(Error::Validation(format!(
                "labels length {} does not match node count {}",
                labels.len(),
                node_count
            )));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u == v {
                return Err(Error::Validation(format!("self-loop at node {u}")));
            }
            if u >= node_count || v >= node_count {
                return Err(Error::Validation(format!(
                    "edge ({u},{v}) references a node outside 0..{node_count}"
                )));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate edge".into()));
        }
        let adjacency = build_adjacency(node_count, &normalized);
        Ok(Self { node_count, edges: normalized, labels, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as normalized `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> u32 {
        self.labels[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        if u == v {
            return false;
        }
        let key = (u.min(v), u.max(v));
        self.edges.binary_search(&key).is_ok()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }
}

fn build_adjacency(node_count: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adjacency = vec![Vec::new(); node_count];
    for &(u, v) in edges {
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    adjacency
}

/// Dense mapping between label strings and label ids `0..size`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelVocabulary {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl LabelVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Result<Self> {
        let mut vocab = Self::new();
        for name in names {
            if vocab.index.contains_key(&name) {
                return Err(Error::Validation(format!("duplicate label name {name:?}")));
            }
            vocab.intern(&name);
        }
        Ok(vocab)
    }

    /// Id for `name`, interning it if unseen.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// A pair of graphs oriented so `g` is never larger than `g_prime`.
///
/// `swapped` records whether the two sides were exchanged on construction so
/// reported mappings can be re-oriented to the caller's original order. The
/// ground-truth mapping, when present, always maps nodes of `g` into `g_prime`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair {
    pub g: LabeledGraph,
    pub g_prime: LabeledGraph,
    pub ground_truth_mapping: Option<NodeMapping>,
    pub ground_truth_ged: Option<u32>,
    pub swapped: bool,
}

impl GraphPair {
    /// Builds a pair from `(first, second)`, swapping so the smaller graph comes
    /// first. `mapping`, when given, must map the smaller graph into the larger
    /// one; when `ged` is also given, the mapping's edit cost must equal it.
    pub fn new(
        first: LabeledGraph,
        second: LabeledGraph,
        mapping: Option<NodeMapping>,
        ged: Option<u32>,
    ) -> Result<Self> {
        let swapped = first.node_count() > second.node_count();
        let (g, g_prime) = if swapped { (second, first) } else { (first, second) };
        let pair = Self { g, g_prime, ground_truth_mapping: None, ground_truth_ged: ged, swapped };
        if let Some(mapping) = mapping {
            mapping.validate(pair.g.node_count(), pair.g_prime.node_count())?;
            let cost = edit_path::edit_cost(&pair, &mapping)?;
            if let Some(ged) = ged {
                if cost != ged {
                    return Err(Error::Validation(format!(
                        "ground-truth mapping has edit cost {cost} but annotated GED is {ged}"
                    )));
                }
            }
            return Ok(Self { ground_truth_mapping: Some(mapping), ..pair });
        }
        Ok(pair)
    }

}

/// One-hot encoding of a graph's node labels: `node_count x vocab.size`.
pub fn one_hot_labels(g: &LabeledGraph, vocab: &LabelVocabulary) -> Result<Vec<Vec<f64>>> {
    let size = vocab.size();
    let mut rows = Vec::with_capacity(g.node_count());
    for v in 0..g.node_count() {
        let id = g.label(v) as usize;
        if id >= size {
            return Err(Error::Validation(format!(
                "label id {id} at node {v} is outside vocabulary of size {size}"
            )));
        }
        let mut row = vec![0.0; size];
        row[id] = 1.0;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> LabeledGraph {
        LabeledGraph::new(3, vec![(0, 1), (1, 2), (0, 2)], vec![0, 0, 0]).unwrap()
    }

    #[test]
    fn rejects_self_loop() {
        let err = LabeledGraph::new(4, vec![(3, 3)], vec![0; 4]).unwrap_err();
        assert!(err.to_string().contains("self-loop"));
    }

    #[test]
    fn rejects_dangling_index() {
        let err = LabeledGraph::new(2, vec![(0, 2)], vec![0, 0]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn rejects_duplicate_edge() {
        let err = LabeledGraph::new(3, vec![(0, 1), (1, 0)], vec![0; 3]).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn edges_are_normalized() {
        let g = LabeledGraph::new(3, vec![(2, 0), (1, 0)], vec![0; 3]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2)]);
        assert!(g.has_edge(0, 2) && g.has_edge(2, 0));
        assert!(!g.has_edge(1, 2));
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    #[test]
    fn pair_orientation_swaps_larger_first_graph() {
        let big = LabeledGraph::new(5, vec![], vec![0; 5]).unwrap();
        let small = LabeledGraph::new(4, vec![], vec![0; 4]).unwrap();
        let pair = GraphPair::new(big, small, None, None).unwrap();
        assert!(pair.swapped);
        assert_eq!(pair.g.node_count(), 4);
        assert_eq!(pair.g_prime.node_count(), 5);

        let small2 = LabeledGraph::new(4, vec![], vec![0; 4]).unwrap();
        let big2 = LabeledGraph::new(5, vec![], vec![0; 5]).unwrap();
        let pair2 = GraphPair::new(small2, big2, None, None).unwrap();
        assert!(!pair2.swapped);
    }

    #[test]
    fn pair_rejects_mapping_cost_mismatch() {
        let g = triangle();
        let mut g2 = triangle();
        g2 = LabeledGraph::new(3, g2.edges().to_vec(), vec![0, 0, 1]).unwrap();
        let mapping = NodeMapping::new(vec![0, 1, 2], 3).unwrap();
        // identity mapping costs 1 (one relabel), not 0
        let err = GraphPair::new(g, g2, Some(mapping), Some(0)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn one_hot_examples() {
        let mut vocab = LabelVocabulary::new();
        vocab.intern("a");
        vocab.intern("b");
        let g = LabeledGraph::new(2, vec![], vec![0, 1]).unwrap();
        assert_eq!(one_hot_labels(&g, &vocab).unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let unlabeled = LabeledGraph::new(3, vec![], vec![0, 0, 0]).unwrap();
        let single = LabelVocabulary::from_names(["0".to_string()]).unwrap();
        assert_eq!(
            one_hot_labels(&unlabeled, &single).unwrap(),
            vec![vec![1.0], vec![1.0], vec![1.0]]
        );

        let bad = LabeledGraph::new(1, vec![], vec![2]).unwrap();
        assert!(one_hot_labels(&bad, &vocab).is_err());
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let vocab = LabelVocabulary::from_names(["x".into(), "y".into(), "z".into()]).unwrap();
        let g = LabeledGraph::new(4, vec![(0, 1)], vec![2, 0, 1, 2]).unwrap();
        for row in one_hot_labels(&g, &vocab).unwrap() {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
        }
    }
}
