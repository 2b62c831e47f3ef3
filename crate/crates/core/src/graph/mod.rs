//! Directed graphs, DAGs and node multisets.
//!
//! Neighborhoods are always reported in ascending node order so that every
//! aggregation downstream runs in a fixed order.

mod multiset;
pub mod random;

pub use multiset::{is_equally_distributed, scale_multiset, Multiset};

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Upper bound on the size of a constructed computation tree.
pub const MAX_TREE_NODES: usize = 200_000;

/// A directed graph with node features and designated source/target nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    sources: BTreeSet<usize>,
    targets: BTreeSet<usize>,
    // (neighbor, edge index), sorted by neighbor
    in_adj: Vec<Vec<(usize, usize)>>,
    out_adj: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Builds a graph, rejecting out-of-range endpoints, duplicate edges and self-loops.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Tensor,
        sources: impl IntoIterator<Item = usize>,
        targets: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::Shape {
                op: "graph",
                detail: format!("{} feature rows for {num_nodes} nodes", features.rows()),
            });
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut in_adj = vec![Vec::new(); num_nodes];
        let mut out_adj = vec![Vec::new(); num_nodes];
        for (e, &(u, v)) in edges.iter().enumerate() {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::IndexOutOfRange {
                        what: "edge endpoint",
                        index: x,
                        len: num_nodes,
                    });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if !seen.insert((u, v)) {
                return Err(Error::DuplicateEdge(u, v));
            }
            out_adj[u].push((v, e));
            in_adj[v].push((u, e));
        }
        for adj in in_adj.iter_mut().chain(out_adj.iter_mut()) {
            adj.sort_unstable();
        }
        let check = |set: BTreeSet<usize>, what: &'static str| -> Result<BTreeSet<usize>> {
            match set.iter().find(|&&x| x >= num_nodes) {
                Some(&x) => Err(Error::IndexOutOfRange {
                    what,
                    index: x,
                    len: num_nodes,
                }),
                None => Ok(set),
            }
        };
        let sources = check(sources.into_iter().collect(), "source")?;
        let targets = check(targets.into_iter().collect(), "target")?;
        Ok(Self {
            num_nodes,
            edges,
            features,
            sources,
            targets,
            in_adj,
            out_adj,
        })
    }

    /// A graph with no designated sources or targets.
    pub fn from_edges(num_nodes: usize, edges: Vec<(usize, usize)>, features: Tensor) -> Result<Self> {
        Self::new(num_nodes, edges, features, [], [])
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sources(&self) -> &BTreeSet<usize> {
        &self.sources
    }

    pub fn targets(&self) -> &BTreeSet<usize> {
        &self.targets
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.num_nodes {
            return Err(Error::IndexOutOfRange {
                what: "node",
                index: v,
                len: self.num_nodes,
            });
        }
        Ok(())
    }

    /// Predecessors of `v` in ascending order.
    pub fn in_neighbors(&self, v: usize) -> Result<Vec<usize>> {
        self.check_node(v)?;
        Ok(self.in_adj[v].iter().map(|&(u, _)| u).collect())
    }

    /// Successors of `v` in ascending order.
    pub fn out_neighbors(&self, v: usize) -> Result<Vec<usize>> {
        self.check_node(v)?;
        Ok(self.out_adj[v].iter().map(|&(u, _)| u).collect())
    }

    /// `(predecessor, edge index)` pairs of `v`, ascending by predecessor.
    pub fn in_edges(&self, v: usize) -> &[(usize, usize)] {
        &self.in_adj[v]
    }

    /// `(successor, edge index)` pairs of `v`, ascending by successor.
    pub fn out_edges(&self, v: usize) -> &[(usize, usize)] {
        &self.out_adj[v]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_adj[v].len()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_adj[v].len()
    }

    /// Nodes without predecessors.
    pub fn initial_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&v| self.in_adj[v].is_empty()).collect()
    }

    /// Nodes without successors.
    pub fn final_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&v| self.out_adj[v].is_empty()).collect()
    }

    /// Destination node of every edge, in edge order.
    pub fn edge_dst(&self) -> Vec<usize> {
        self.edges.iter().map(|&(_, v)| v).collect()
    }

    /// Source node of every edge, in edge order.
    pub fn edge_src(&self) -> Vec<usize> {
        self.edges.iter().map(|&(u, _)| u).collect()
    }

    pub fn with_sources_targets(
        &self,
        sources: impl IntoIterator<Item = usize>,
        targets: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        Self::new(
            self.num_nodes,
            self.edges.clone(),
            self.features.clone(),
            sources,
            targets,
        )
    }

    /// Relabels node `v` as `perm[v]`; edge order is preserved.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::Shape {
                op: "permute",
                detail: format!("{} entries for {} nodes", perm.len(), self.num_nodes),
            });
        }
        let mut inverse = vec![usize::MAX; self.num_nodes];
        for (v, &p) in perm.iter().enumerate() {
            if p >= self.num_nodes || inverse[p] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inverse[p] = v;
        }
        let features = self.features.select_rows(&inverse);
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        Self::new(
            self.num_nodes,
            edges,
            features,
            self.sources.iter().map(|&s| perm[s]),
            self.targets.iter().map(|&t| perm[t]),
        )
    }

    /// Adds the reverse of every edge that lacks one (undirected convention).
    pub fn symmetrized(&self) -> Result<Self> {
        let present: HashSet<_> = self.edges.iter().copied().collect();
        let mut edges = self.edges.clone();
        for &(u, v) in &self.edges {
            if !present.contains(&(v, u)) {
                edges.push((v, u));
            }
        }
        Self::new(
            self.num_nodes,
            edges,
            self.features.clone(),
            self.sources.iter().copied(),
            self.targets.iter().copied(),
        )
    }

    /// Disjoint union; node indices of `other` are shifted by `self.num_nodes()`.
    pub fn disjoint_union(&self, other: &Graph) -> Result<Self> {
        if self.feature_dim() != other.feature_dim() && self.num_nodes > 0 && other.num_nodes > 0 {
            return Err(Error::Shape {
                op: "disjoint_union",
                detail: format!("feature dims {} vs {}", self.feature_dim(), other.feature_dim()),
            });
        }
        let off = self.num_nodes;
        let mut rows = self.features.to_rows();
        rows.extend(other.features.to_rows());
        let dim = self.feature_dim().max(other.feature_dim());
        let features = Tensor::from_rows(&rows, dim)?;
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(u, v)| (u + off, v + off)));
        Self::new(
            off + other.num_nodes,
            edges,
            features,
            self.sources
                .iter()
                .copied()
                .chain(other.sources.iter().map(|s| s + off)),
            self.targets
                .iter()
                .copied()
                .chain(other.targets.iter().map(|t| t + off)),
        )
    }
}

/// Predecessors of `v` in ascending order.
pub fn in_neighbors(g: &Graph, v: usize) -> Result<Vec<usize>> {
    g.in_neighbors(v)
}

/// Successors of `v` in ascending order.
pub fn out_neighbors(g: &Graph, v: usize) -> Result<Vec<usize>> {
    g.out_neighbors(v)
}

/// A directed acyclic graph together with a topological order.
///
/// Initial nodes are always sources and final nodes always targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dag {
    graph: Graph,
    topo_order: Vec<usize>,
    // position of each node in topo_order
    position: Vec<usize>,
}

impl Dag {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes
    }

    pub fn initial_nodes(&self) -> Vec<usize> {
        self.graph.initial_nodes()
    }

    pub fn final_nodes(&self) -> Vec<usize> {
        self.graph.final_nodes()
    }

    /// The unique final node, if there is exactly one.
    pub fn root(&self) -> Result<usize> {
        let f = self.final_nodes();
        match f.as_slice() {
            [r] => Ok(*r),
            _ => Err(Error::MultipleRoots(f.len())),
        }
    }

    /// True when every node has at most one successor.
    pub fn is_tree(&self) -> bool {
        (0..self.num_nodes()).all(|v| self.graph.out_degree(v) <= 1)
    }

    /// Groups nodes by longest distance from an initial node. Every
    /// predecessor of a node in level `k` lies in a level `< k`.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut depth = vec![0usize; self.num_nodes()];
        for &v in &self.topo_order {
            for &(u, _) in self.graph.in_edges(v) {
                depth[v] = depth[v].max(depth[u] + 1);
            }
        }
        let n_levels = depth.iter().copied().max().map_or(0, |d| d + 1);
        let mut levels = vec![Vec::new(); n_levels];
        for v in 0..self.num_nodes() {
            levels[depth[v]].push(v);
        }
        levels
    }

    /// Position of `v` in the topological order.
    pub fn position(&self, v: usize) -> usize {
        self.position[v]
    }
}

/// Kahn's algorithm with a min-index priority queue.
///
/// Initial nodes are added to the sources and final nodes to the targets.
pub fn topo_sort(g: &Graph) -> Result<Dag> {
    let n = g.num_nodes();
    let mut indeg: Vec<usize> = (0..n).map(|v| g.in_degree(v)).collect();
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &(w, _) in g.out_edges(v) {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                heap.push(Reverse(w));
            }
        }
    }
    if order.len() != n {
        return Err(Error::Cycle);
    }
    let mut position = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let sources: BTreeSet<usize> = g.sources.iter().copied().chain(g.initial_nodes()).collect();
    let targets: BTreeSet<usize> = g.targets.iter().copied().chain(g.final_nodes()).collect();
    let graph = if sources == g.sources && targets == g.targets {
        g.clone()
    } else {
        g.with_sources_targets(sources, targets)?
    };
    Ok(Dag {
        graph,
        topo_order: order,
        position,
    })
}

/// Flips every edge; sources and targets swap roles.
pub fn reverse(d: &Dag) -> Dag {
    let g = &d.graph;
    let edges = g.edges.iter().map(|&(u, v)| (v, u)).collect();
    let graph = Graph::new(
        g.num_nodes,
        edges,
        g.features.clone(),
        g.targets.iter().copied(),
        g.sources.iter().copied(),
    )
    .expect("reversal preserves validity");
    let topo_order: Vec<usize> = d.topo_order.iter().rev().copied().collect();
    let mut position = vec![0; topo_order.len()];
    for (i, &v) in topo_order.iter().enumerate() {
        position[v] = i;
    }
    Dag {
        graph,
        topo_order,
        position,
    }
}

/// Appends one node with `virtual_feature` and an edge into it from every
/// current final node. The new node becomes the unique final node and a target.
pub fn merge_final_nodes(d: &Dag, virtual_feature: &[Real]) -> Result<Dag> {
    let g = &d.graph;
    if virtual_feature.len() != g.feature_dim() {
        return Err(Error::Shape {
            op: "merge_final_nodes",
            detail: format!(
                "virtual feature of length {} for feature dim {}",
                virtual_feature.len(),
                g.feature_dim()
            ),
        });
    }
    let finals = d.final_nodes();
    if finals.is_empty() {
        return Err(Error::EmptyPool("final nodes"));
    }
    let v = g.num_nodes;
    let mut rows = g.features.to_rows();
    rows.push(virtual_feature.to_vec());
    let features = Tensor::from_rows(&rows, g.feature_dim())?;
    let mut edges = g.edges.clone();
    edges.extend(finals.iter().map(|&f| (f, v)));
    let targets = g.targets.iter().copied().chain([v]);
    let graph = Graph::new(v + 1, edges, features, g.sources.iter().copied(), targets)?;
    topo_sort(&graph)
}

/// Unfolds a rooted DAG into its computation tree.
///
/// Nodes are visited in reverse topological order (root first). A node with
/// `n >= 2` successors is replaced by `n` copies, each keeping one outgoing
/// edge and all incoming edges; the first copy keeps the original index and
/// further copies are appended. Predecessors therefore gain out-degree and
/// are expanded when their turn comes. Trees are returned unchanged.
pub fn computation_tree(d: &Dag) -> Result<Dag> {
    let root = d.root()?;
    let g = &d.graph;
    let mut feats = g.features.to_rows();
    let mut edges: Vec<(usize, usize)> = g.edges.clone();
    let mut sources = g.sources.clone();
    let mut targets = g.targets.clone();
    // Adjacency over the evolving edge list, by edge index.
    let mut in_e: Vec<Vec<usize>> = vec![Vec::new(); g.num_nodes];
    let mut out_e: Vec<Vec<usize>> = vec![Vec::new(); g.num_nodes];
    for (e, &(u, v)) in edges.iter().enumerate() {
        out_e[u].push(e);
        in_e[v].push(e);
    }
    // Copies have one successor and never need expanding themselves.
    for &v in d.topo_order.iter().rev() {
        if v == root || out_e[v].len() < 2 {
            continue;
        }
        let mut outs = out_e[v].clone();
        outs.sort_by_key(|&e| edges[e].1);
        let incoming = in_e[v].clone();
        for &e_out in &outs[1..] {
            let copy = feats.len();
            if copy >= MAX_TREE_NODES {
                return Err(Error::TreeTooLarge { limit: MAX_TREE_NODES });
            }
            feats.push(feats[v].clone());
            in_e.push(Vec::new());
            out_e.push(vec![e_out]);
            edges[e_out].0 = copy;
            if sources.contains(&v) {
                sources.insert(copy);
            }
            if targets.contains(&v) {
                targets.insert(copy);
            }
            for &e_in in &incoming {
                let u = edges[e_in].0;
                let new_e = edges.len();
                edges.push((u, copy));
                out_e[u].push(new_e);
                in_e[copy].push(new_e);
            }
        }
        out_e[v] = vec![outs[0]];
    }
    let features = Tensor::from_rows(&feats, g.feature_dim())?;
    let graph = Graph::new(feats.len(), edges, features, sources, targets)?;
    topo_sort(&graph)
}
