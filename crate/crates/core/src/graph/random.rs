//! Seeded random graph generators used by tests, experiments and data generation.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{topo_sort, Dag, Graph};
use crate::error::{invalid, Result};
use crate::tensor::{Real, Tensor};

/// An `n x dim` matrix of standard normal draws.
pub fn random_features<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Tensor {
    let data = (0..n * dim)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            x as Real
        })
        .collect();
    Tensor::new(n, dim, data).expect("sized by construction")
}

/// Builds a DAG from edges over a hidden order `0..n`, then relabels nodes by
/// a random permutation so the topological order is not the identity.
fn relabel<R: Rng + ?Sized>(rng: &mut R, n: usize, edges: Vec<(usize, usize)>, features: Tensor) -> Result<Dag> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let g = Graph::from_edges(n, edges, features)?.permute(&perm)?;
    topo_sort(&g)
}

/// Random DAG on `n` nodes: each forward pair of a hidden order gets an edge
/// with probability `p`.
pub fn random_dag<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64, feature_dim: usize) -> Result<Dag> {
    if n == 0 {
        return Err(invalid("random_dag needs at least one node"));
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p.clamp(0.0, 1.0)) {
                edges.push((u, v));
            }
        }
    }
    let features = random_features(rng, n, feature_dim);
    relabel(rng, n, edges, features)
}

/// Random DAG with a unique final node. Every other node gets one successor
/// later in a hidden order, plus extra forward edges with probability `p`.
pub fn random_rooted_dag<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64, feature_dim: usize) -> Result<Dag> {
    if n == 0 {
        return Err(invalid("random_rooted_dag needs at least one node"));
    }
    let mut edges = Vec::new();
    for u in 0..n.saturating_sub(1) {
        let first = rng.random_range(u + 1..n);
        edges.push((u, first));
        for v in u + 1..n {
            if v != first && rng.random_bool(p.clamp(0.0, 1.0)) {
                edges.push((u, v));
            }
        }
    }
    let features = random_features(rng, n, feature_dim);
    relabel(rng, n, edges, features)
}

/// Random rooted DAG that is not a tree (some node has two or more
/// successors). Needs `n >= 3`.
pub fn random_true_dag<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64, feature_dim: usize) -> Result<Dag> {
    if n < 3 {
        return Err(invalid("a rooted non-tree DAG needs at least 3 nodes"));
    }
    let p = p.max(0.05);
    loop {
        let d = random_rooted_dag(rng, n, p, feature_dim)?;
        if !d.is_tree() {
            return Ok(d);
        }
    }
}

/// Random rooted tree on `n` nodes (every non-root node has one successor).
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n: usize, feature_dim: usize) -> Result<Dag> {
    random_rooted_dag(rng, n, 0.0, feature_dim)
}
