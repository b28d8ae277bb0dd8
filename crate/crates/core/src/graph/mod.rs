//! Sparse-feature graphs: storage, loading, normalization and splitting.

mod io;
mod split;

use std::collections::BTreeSet;

use log::warn;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub use io::{load_graph, load_graph_dir, write_graph, EDGE_FILE, FEATURE_FILE, LABEL_FILE};
pub use split::{
    link_prediction_splits, sample_negative_edges, sample_negative_edges_with, split_edges, split_nodes, DataSplits,
    EdgePartition, NodePartition, SplitRatios,
};

/// Undirected edge stored with the smaller endpoint first.
pub type Edge = (usize, usize);

/// One node's non-zero features as `(feature_index, value)`, indices strictly increasing.
pub type SparseRow = Vec<(usize, f64)>;

pub fn canonical(i: usize, j: usize) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    classes: usize,
    per_node: Vec<Option<usize>>,
}

impl Labels {
    pub fn new(classes: usize, per_node: Vec<Option<usize>>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Schema("class count must be positive".into()));
        }
        if let Some((node, label)) = per_node
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&l| l >= classes).map(|l| (i, l)))
        {
            return Err(Error::Schema(format!(
                "node {node} has label {label} but only {classes} classes are declared"
            )));
        }
        Ok(Labels { classes, per_node })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, node: usize) -> Option<usize> {
        self.per_node[node]
    }

    pub fn labeled_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_node.iter().enumerate().filter_map(|(i, l)| l.map(|_| i))
    }
}

/// Immutable undirected graph with sparse node features and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    num_features: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    features: Vec<SparseRow>,
    labels: Option<Labels>,
}

impl SparseGraph {
    /// Canonicalizes and validates the inputs. Edges are symmetrized and
    /// deduplicated, self-loops dropped, feature rows sorted with explicit
    /// zeros removed. The node count is `features.len()`.
    pub fn new(
        num_features: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        mut features: Vec<SparseRow>,
        labels: Option<Labels>,
    ) -> Result<Self> {
        let n = features.len();
        let mut set = BTreeSet::new();
        let mut self_loops = 0usize;
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Schema(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                self_loops += 1;
                continue;
            }
            set.insert(canonical(i, j));
        }
        if self_loops > 0 {
            warn!("dropped {self_loops} self-loop(s) from the input edges");
        }

        for (node, row) in features.iter_mut().enumerate() {
            row.retain(|&(_, v)| v != 0.0);
            row.sort_by_key(|&(j, _)| j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Schema(format!("node {node} lists feature {} twice", w[0].0)));
                }
            }
            if let Some(&(j, _)) = row.iter().find(|&&(j, _)| j >= num_features) {
                return Err(Error::Schema(format!(
                    "node {node} has feature index {j} but d = {num_features}"
                )));
            }
            if let Some(&(j, v)) = row.iter().find(|&&(_, v)| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "node {node} feature {j} has non-finite value {v}"
                )));
            }
        }

        if let Some(labels) = &labels {
            if labels.per_node.len() != n {
                return Err(Error::Schema(format!(
                    "label vector covers {} nodes, graph has {n}",
                    labels.per_node.len()
                )));
            }
        }

        let edges: Vec<Edge> = set.into_iter().collect();
        let neighbors = adjacency_lists(n, &edges);
        Ok(SparseGraph {
            num_features,
            edges,
            neighbors,
            features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Canonical edges in lexicographic order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.num_nodes() && self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn features(&self, node: usize) -> &[(usize, f64)] {
        &self.features[node]
    }

    pub fn feature_rows(&self) -> &[SparseRow] {
        &self.features
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(Labels::classes)
    }

    /// Node features as an n×d sparse matrix.
    pub fn feature_matrix(&self) -> CsrMatrix {
        CsrMatrix::from_rows(self.num_features, &self.features).expect("features are validated on construction")
    }

    /// Same nodes, features and labels over a different edge set.
    pub fn with_edges(&self, edges: &[Edge]) -> Result<Self> {
        SparseGraph::new(
            self.num_features,
            edges.iter().copied(),
            self.features.clone(),
            self.labels.clone(),
        )
    }

    /// Applies a node relabeling: node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::shape("permutation length differs from node count"));
        }
        let mut features = vec![Vec::new(); n];
        let mut labels = vec![None; n];
        for (i, &p) in perm.iter().enumerate() {
            features[p] = self.features[i].clone();
            if let Some(l) = &self.labels {
                labels[p] = l.get(i);
            }
        }
        let labels = match &self.labels {
            Some(l) => Some(Labels::new(l.classes, labels)?),
            None => None,
        };
        SparseGraph::new(
            self.num_features,
            self.edges.iter().map(|&(i, j)| (perm[i], perm[j])),
            features,
            labels,
        )
    }

    /// Row-normalized adjacency without self-loops; rows of isolated nodes are empty.
    pub fn mean_adjacency(&self) -> CsrMatrix {
        let rows: Vec<SparseRow> = self
            .neighbors
            .iter()
            .map(|nb| {
                let w = 1.0 / nb.len() as f64;
                nb.iter().map(|&j| (j, w)).collect()
            })
            .collect();
        CsrMatrix::from_rows(self.num_nodes(), &rows).expect("neighbor lists are sorted")
    }
}

fn adjacency_lists(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut neighbors = vec![Vec::new(); n];
    for &(i, j) in edges {
        neighbors[i].push(j);
        neighbors[j].push(i);
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
    }
    neighbors
}

/// Symmetric GCN propagation matrix `D^{-1/2}(A + I)D^{-1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
}

impl NormalizedAdjacency {
    pub fn new(g: &SparseGraph) -> Self {
        let n = g.num_nodes();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| 1.0 / ((g.neighbors(i).len() + 1) as f64).sqrt())
            .collect();
        let rows: Vec<SparseRow> = (0..n)
            .map(|i| {
                let nb = g.neighbors(i);
                let split = nb.partition_point(|&j| j < i);
                nb[..split]
                    .iter()
                    .copied()
                    .chain(std::iter::once(i))
                    .chain(nb[split..].iter().copied())
                    .map(|j| (j, inv_sqrt[i] * inv_sqrt[j]))
                    .collect()
            })
            .collect();
        NormalizedAdjacency {
            matrix: CsrMatrix::from_rows(n, &rows).expect("rows are sorted"),
        }
    }

    /// Identity propagation, i.e. a graph whose node dependencies are ignored.
    pub fn identity(n: usize) -> Self {
        NormalizedAdjacency {
            matrix: CsrMatrix::identity(n),
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

pub fn normalize_adjacency(g: &SparseGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::new(g)
}
