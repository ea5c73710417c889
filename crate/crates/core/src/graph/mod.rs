//! Undirected simple graphs with node features, GCN adjacency normalisation,
//! induced subgraphs, context sampling and the three evaluation splits.

mod sampling;
mod split;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SparseMatrix};

pub(crate) use sampling::sample_negatives_excluding;
pub use sampling::{sample_context_edges, sample_context_nodes, sample_negative_edges};
pub use split::{
    make_fewshot_split, make_inductive_split, make_transductive_split, SplitBundle, Task,
};

/// Unordered node pair, stored canonically with the smaller index first.
pub type Edge = (usize, usize);

#[inline]
pub fn canonical(u: usize, v: usize) -> Edge {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Undirected graph without self-loops or parallel edges. Features are
/// shared behind an `Arc` so splits can reuse them without copying.
#[derive(Debug, Clone)]
pub struct Graph {
    features: Arc<DenseMatrix>,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    node_ids: Option<Arc<Vec<String>>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate pairs (in either
    /// orientation) and out-of-range endpoints. Edges are stored sorted.
    pub fn new(features: impl Into<Arc<DenseMatrix>>, edges: Vec<Edge>) -> Result<Self> {
        let features = features.into();
        let n = features.rows();
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::input(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::input(format!("self-loop on node {u}")));
            }
            canon.push(canonical(u, v));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::input(format!("duplicate edge {:?}", w[0])));
        }
        Ok(Self::from_sorted_unchecked(features, canon))
    }

    pub(crate) fn from_sorted_unchecked(features: Arc<DenseMatrix>, edges: Vec<Edge>) -> Self {
        let mut neighbors = vec![Vec::new(); features.rows()];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Graph {
            features,
            edges,
            neighbors,
            node_ids: None,
        }
    }

    /// Graph with no features (`n x 0`), mostly for tests.
    pub fn structural(n: usize, edges: Vec<Edge>) -> Result<Self> {
        Self::new(DenseMatrix::zeros(n, 0), edges)
    }

    pub fn with_node_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.num_nodes() {
            return Err(Error::input(format!(
                "{} node ids for {} nodes",
                ids.len(),
                self.num_nodes()
            )));
        }
        self.node_ids = Some(Arc::new(ids));
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn shared_features(&self) -> Arc<DenseMatrix> {
        Arc::clone(&self.features)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_ids(&self) -> Option<&[String]> {
        self.node_ids.as_deref().map(Vec::as_slice)
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes() && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Same nodes and features, different edge set.
    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self> {
        let mut g = Self::new(self.shared_features(), edges)?;
        g.node_ids = self.node_ids.clone();
        Ok(g)
    }

    /// `D̃^{-1/2}(A + I)D̃^{-1/2}` for this graph.
    pub fn normalized_adjacency(&self) -> SparseMatrix {
        normalize_adjacency(&self.edges, self.num_nodes())
            .expect("graph edges are validated at construction")
    }
}

/// Symmetric GCN normalisation `D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃` the
/// degree matrix of `A + I`. Every row keeps its diagonal entry, so
/// isolated nodes map to `1`.
pub fn normalize_adjacency(edges: &[Edge], n: usize) -> Result<SparseMatrix> {
    let mut degree = vec![1.0f64; n];
    for &(u, v) in edges {
        if u >= n || v >= n {
            return Err(Error::input(format!(
                "edge ({u}, {v}) out of range for {n} nodes"
            )));
        }
        degree[u] += 1.0;
        degree[v] += 1.0;
    }
    let diagonal = degree.iter().enumerate().map(|(i, d)| (i, i, 1.0 / d));
    let off = edges.iter().flat_map(|&(u, v)| {
        let w = 1.0 / (degree[u] * degree[v]).sqrt();
        [(u, v, w), (v, u, w)]
    });
    SparseMatrix::from_triplets(n, n, diagonal.chain(off))
}

/// Nodes of a parent graph together with the parent edges among them,
/// re-indexed so that local index `k` is `node_ids[k]`.
#[derive(Debug, Clone)]
pub struct SubgraphRef<'g> {
    parent: &'g Graph,
    node_ids: Vec<usize>,
    induced_edges: Vec<Edge>,
}

impl<'g> SubgraphRef<'g> {
    pub fn parent(&self) -> &'g Graph {
        self.parent
    }

    pub fn node_ids(&self) -> &[usize] {
        &self.node_ids
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn induced_edges(&self) -> &[Edge] {
        &self.induced_edges
    }

    pub fn features(&self) -> DenseMatrix {
        self.parent
            .features()
            .select_rows(&self.node_ids)
            .expect("subgraph node ids are validated")
    }

    /// Materialises the subgraph as a standalone graph.
    pub fn to_graph(&self) -> Graph {
        let mut g =
            Graph::from_sorted_unchecked(Arc::new(self.features()), self.induced_edges.clone());
        if let Some(ids) = self.parent.node_ids() {
            g.node_ids = Some(Arc::new(
                self.node_ids.iter().map(|&i| ids[i].clone()).collect(),
            ));
        }
        g
    }
}

/// Subgraph induced by `node_ids`, kept in the given order.
pub fn induce_subgraph<'g>(g: &'g Graph, node_ids: &[usize]) -> Result<SubgraphRef<'g>> {
    let n = g.num_nodes();
    let mut local = vec![usize::MAX; n];
    for (k, &v) in node_ids.iter().enumerate() {
        if v >= n {
            return Err(Error::input(format!("node {v} out of range for {n} nodes")));
        }
        if local[v] != usize::MAX {
            return Err(Error::input(format!("node {v} listed twice")));
        }
        local[v] = k;
    }
    let mut induced_edges = Vec::new();
    for (a, &u) in node_ids.iter().enumerate() {
        for &v in g.neighbors(u) {
            let b = local[v];
            if b != usize::MAX && a < b {
                induced_edges.push((a, b));
            }
        }
    }
    induced_edges.sort_unstable();
    Ok(SubgraphRef {
        parent: g,
        node_ids: node_ids.to_vec(),
        induced_edges,
    })
}

// Float products like 0.1 * 30 land a hair above the integer; quotas are
// computed with a small slack so they match the exact arithmetic.
const QUOTA_SLACK: f64 = 1e-9;

pub(crate) fn quota_floor(fraction: f64, total: usize) -> usize {
    (fraction * total as f64 + QUOTA_SLACK).floor() as usize
}

pub(crate) fn quota_ceil(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64 - QUOTA_SLACK).ceil().max(0.0) as usize).min(total)
}
