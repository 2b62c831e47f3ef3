use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::record::{Dataset, DatasetManifest, GraphRecord, Ratios};
use crate::error::{invalid, Error, Result};
use crate::graph::random::random_true_dag;
use crate::graph::{computation_tree, topo_sort, Dag, Graph};
use crate::tensor::{Real, Tensor};
use crate::training::{Target, Task};

/// Resistance values of circuit components. Feature columns 2.. one-hot
/// encode the value.
pub const RESISTANCES: [Real; 3] = [1.0, 2.0, 5.0];
/// `[is_source, is_target, one-hot resistance]`.
pub const FLOW_FEATURE_DIM: usize = 2 + RESISTANCES.len();
/// One-hot node role: initial, intermediate, final.
pub const PAIR_FEATURE_DIM: usize = 3;
pub const PAIR_MAX_NODES: usize = 7;

/// SplitMix64 step, used to derive one independent seed per record.
fn derive_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((index as u64).wrapping_mul(0xd1b5_4a32_d192_ed69));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Edge flows of a circuit: every source injects one unit, every node splits
/// its inflow among its out-edges in proportion to the successors'
/// conductances, and targets absorb what reaches them. Needs an acyclic graph.
pub fn flow_oracle(g: &Graph, conductance: &[Real]) -> Result<Vec<Real>> {
    if conductance.len() != g.num_nodes() {
        return Err(invalid(format!(
            "{} conductances for {} nodes",
            conductance.len(),
            g.num_nodes()
        )));
    }
    if conductance.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(invalid("conductances must be positive"));
    }
    let d = topo_sort(g)?;
    let mut inflow = vec![0.0; g.num_nodes()];
    let mut flow = vec![0.0; g.num_edges()];
    for &j in d.topo_order() {
        if g.targets().contains(&j) {
            continue;
        }
        let total = inflow[j] + if g.sources().contains(&j) { 1.0 } else { 0.0 };
        let out = g.out_edges(j);
        let norm: Real = out.iter().map(|&(i, _)| conductance[i]).sum();
        for &(i, e) in out {
            flow[e] = total * conductance[i] / norm;
            inflow[i] += flow[e];
        }
    }
    Ok(flow)
}

struct Circuit {
    graph: Graph,
    /// Edge flows in descending order.
    profile: Vec<Real>,
}

/// Orders circuits by maximum edge flow, then by the next-largest flows.
fn compare_profiles(a: &[Real], b: &[Real]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Random layered circuit: one or two sources, one or two targets, and
/// component layers at least two wide. Every node feeds at least two nodes of
/// the next layer when it can, so the flow splits at every component.
/// Occasional skip edges jump one layer.
fn random_circuit(rng: &mut ChaCha8Rng, max_nodes: usize) -> Result<Circuit> {
    let n = rng.random_range((max_nodes / 2).max(4)..=max_nodes);
    let ns = if n >= 6 && rng.random_bool(0.5) { 2 } else { 1 };
    let nt = if n >= 5 && rng.random_bool(0.5) { 2 } else { 1 };
    let middle = n - ns - nt;
    let k = rng.random_range(1..=(middle / 2).min(4));
    let mut sizes = vec![2; k];
    for _ in 0..middle - 2 * k {
        sizes[rng.random_range(0..k)] += 1;
    }
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(k + 2);
    let mut next = 0;
    for size in std::iter::once(ns).chain(sizes).chain(std::iter::once(nt)) {
        layers.push((next..next + size).collect());
        next += size;
    }
    let mut edges = Vec::new();
    for w in layers.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut has_pred = vec![false; b.len()];
        for &u in a {
            let mut order: Vec<usize> = (0..b.len()).collect();
            order.shuffle(rng);
            for (rank, &bi) in order.iter().enumerate() {
                if rank < 2 || rng.random_bool(0.3) {
                    has_pred[bi] = true;
                    edges.push((u, b[bi]));
                }
            }
        }
        for (bi, &v) in b.iter().enumerate() {
            if !has_pred[bi] {
                edges.push((*a.choose(rng).expect("nonempty layer"), v));
            }
        }
    }
    for l in 0..layers.len().saturating_sub(2) {
        for &u in &layers[l] {
            for &v in &layers[l + 2] {
                if rng.random_bool(0.1) {
                    edges.push((u, v));
                }
            }
        }
    }
    let sources = &layers[0];
    let targets = &layers[layers.len() - 1];
    let mut rows = vec![vec![0.0; FLOW_FEATURE_DIM]; n];
    let mut conductance = vec![1.0; n];
    for (v, row) in rows.iter_mut().enumerate() {
        if sources.contains(&v) {
            row[0] = 1.0;
        } else if targets.contains(&v) {
            row[1] = 1.0;
        } else {
            let r = rng.random_range(0..RESISTANCES.len());
            row[2 + r] = 1.0;
            conductance[v] = 1.0 / RESISTANCES[r];
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let g = Graph::new(
        n,
        edges,
        Tensor::from_rows(&rows, FLOW_FEATURE_DIM)?,
        sources.iter().copied(),
        targets.iter().copied(),
    )?;
    let mut profile = flow_oracle(&g, &conductance)?;
    profile.sort_by(|a, b| b.total_cmp(a));
    Ok(Circuit {
        graph: g.permute(&perm)?,
        profile,
    })
}

fn graph_record(id: String, g: &Graph, label: usize, group: Option<String>) -> GraphRecord {
    GraphRecord {
        id,
        nodes: g.features().to_rows(),
        edges: g.edges().to_vec(),
        directed: true,
        sources: g.sources().iter().copied().collect(),
        targets: g.targets().iter().copied().collect(),
        label: Target::Class(label),
        group,
    }
}

/// Binary circuit classification. Label 1 marks circuits whose largest edge
/// flow under unit injection per source exceeds the median over the
/// generated set. Circuits with equal largest flows are ordered by their
/// next-largest flows, which keeps the classes balanced when many circuits
/// share a maximum.
pub fn gen_flow_classification(n: usize, max_nodes: usize, seed: u64) -> Result<Dataset> {
    if max_nodes < 4 {
        return Err(invalid("max_nodes must be at least 4"));
    }
    let circuits: Vec<Circuit> = (0..n)
        .into_par_iter()
        .map(|i| random_circuit(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, i)), max_nodes))
        .collect::<Result<_>>()?;
    let mut ranked: Vec<&[Real]> = circuits.iter().map(|c| c.profile.as_slice()).collect();
    ranked.sort_by(|a, b| compare_profiles(a, b));
    // Upper median: with an even count, exactly half lie strictly above it
    // unless profiles tie.
    let median = ranked
        .get(n.saturating_sub(1) / 2)
        .map(|p| p.to_vec())
        .unwrap_or_default();
    let records = circuits
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let above = compare_profiles(&c.profile, &median) == std::cmp::Ordering::Greater;
            graph_record(format!("circuit-{i}"), &c.graph, usize::from(above), None)
        })
        .collect();
    Dataset::new(
        DatasetManifest {
            task: Task::Classification { num_classes: 2 },
            feature_dim: FLOW_FEATURE_DIM,
            ratios: Ratios::default(),
            seed,
        },
        records,
    )
}

/// Replaces features with the one-hot role of each node.
fn with_role_features(d: &Dag) -> Result<Dag> {
    let g = d.graph();
    let rows: Vec<Vec<Real>> = (0..g.num_nodes())
        .map(|v| {
            let role = if g.in_degree(v) == 0 {
                0
            } else if g.out_degree(v) == 0 {
                2
            } else {
                1
            };
            let mut row = vec![0.0; PAIR_FEATURE_DIM];
            row[role] = 1.0;
            row
        })
        .collect();
    let features = Tensor::from_rows(&rows, PAIR_FEATURE_DIM)?;
    topo_sort(&Graph::from_edges(g.num_nodes(), g.edges().to_vec(), features)?)
}

/// DAG versus computation tree. Every base DAG yields two records in the
/// same group: the DAG (label 0) and its computation tree (label 1).
pub fn gen_pair_discrimination(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid("pair discrimination needs at least 2 base graphs"));
    }
    let pairs: Vec<[GraphRecord; 2]> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k));
            loop {
                let size = rng.random_range(4..=PAIR_MAX_NODES);
                let d = with_role_features(&random_true_dag(&mut rng, size, 0.3, PAIR_FEATURE_DIM)?)?;
                let t = match computation_tree(&d) {
                    Ok(t) => t,
                    Err(Error::TreeTooLarge { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let group = Some(format!("pair-{k}"));
                return Ok([
                    graph_record(format!("pair-{k}-dag"), d.graph(), 0, group.clone()),
                    graph_record(format!("pair-{k}-tree"), t.graph(), 1, group),
                ]);
            }
        })
        .collect::<Result<_>>()?;
    Dataset::new(
        DatasetManifest {
            task: Task::Classification { num_classes: 2 },
            feature_dim: PAIR_FEATURE_DIM,
            ratios: Ratios::new(0.8, 0.1, 0.1)?,
            seed,
        },
        pairs.into_iter().flatten().collect(),
    )
}
