//! Expressivity experiments.
//!
//! * Pairs of DAGs that share a computation tree, which encoders with
//!   predecessor attention cannot tell apart but flow attention can.
//! * Multiset witnesses: standard attention is blind to scaling a receiver's
//!   incoming multiset, flow attention scales the message by the same factor.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{mp_layer, MpLayerParams, NormMode, ScoringKind, Update};
use crate::dag::{random_encoder, DagEncoderConfig, DagModelKind};
use crate::error::{invalid, Error, Result};
use crate::graph::random::{random_features, random_true_dag};
use crate::graph::{computation_tree, topo_sort, Dag, Graph};
use crate::graph::{scale_multiset, Multiset};
use crate::tensor::{init, ParamStore, Real, Tape, Tensor};

/// Distances above this count as separated.
pub const SEPARATION_THRESHOLD: Real = 1e-6;
/// Distances below this count as equal.
pub const EQUALITY_TOLERANCE: Real = 1e-7;
/// Feature width of generated pair families.
pub const FAMILY_FEATURE_DIM: usize = 3;

/// Assigns ids to rooted labeled trees so that two trees get the same id
/// exactly when they are isomorphic. Ids are only comparable within one
/// canonicalizer.
#[derive(Debug, Default)]
pub struct TreeCanonicalizer {
    table: HashMap<(Vec<u64>, Vec<usize>), usize>,
}

impl TreeCanonicalizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Canonical id of a rooted tree whose edges point towards the root.
    pub fn id(&mut self, t: &Dag) -> Result<usize> {
        if !t.is_tree() {
            return Err(invalid("canonical form needs a rooted tree"));
        }
        let g = t.graph();
        let mut ids = vec![0; t.num_nodes()];
        for &v in t.topo_order() {
            let mut children: Vec<usize> = g.in_edges(v).iter().map(|&(u, _)| ids[u]).collect();
            children.sort_unstable();
            let features = g
                .features()
                .row_slice(v)
                .iter()
                .map(|x| u64::from((x + 0.0).to_bits()))
                .collect();
            let next = self.table.len();
            ids[v] = *self.table.entry((features, children)).or_insert(next);
        }
        Ok(ids[t.root()?])
    }
}

/// Rooted-tree isomorphism respecting node features.
pub fn trees_isomorphic(a: &Dag, b: &Dag) -> Result<bool> {
    let mut c = TreeCanonicalizer::new();
    Ok(c.id(a)? == c.id(b)?)
}

/// True when the computation trees of `a` and `b` are isomorphic.
pub fn same_computation_tree(a: &Dag, b: &Dag) -> Result<bool> {
    trees_isomorphic(&computation_tree(a)?, &computation_tree(b)?)
}

/// Cheap certificate of non-isomorphism: node count, edge count, sorted
/// degree pairs or sorted feature rows differ. `false` means "not certified",
/// not "isomorphic".
pub fn certified_non_isomorphic(a: &Graph, b: &Graph) -> bool {
    let degrees = |g: &Graph| {
        let mut d: Vec<(usize, usize)> = (0..g.num_nodes()).map(|v| (g.in_degree(v), g.out_degree(v))).collect();
        d.sort_unstable();
        d
    };
    let rows = |g: &Graph| {
        let mut r: Vec<Vec<u64>> = g
            .features()
            .to_rows()
            .iter()
            .map(|row| row.iter().map(|x| u64::from((x + 0.0).to_bits())).collect())
            .collect();
        r.sort_unstable();
        r
    };
    a.num_nodes() != b.num_nodes() || a.num_edges() != b.num_edges() || degrees(a) != degrees(b) || rows(a) != rows(b)
}

/// How the two members of a pair relate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairRelation {
    SameComputationTree,
    SameDistributionMultiset,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphPair {
    pub d1: Dag,
    pub d2: Dag,
    pub relation: PairRelation,
    /// Name of the structural variant of each member.
    pub labels: [String; 2],
}

impl GraphPair {
    /// Checks the relation: for same-computation-tree pairs, the trees are
    /// isomorphic and the DAGs are certified non-isomorphic.
    pub fn verify(&self) -> Result<bool> {
        match self.relation {
            PairRelation::SameComputationTree => Ok(same_computation_tree(&self.d1, &self.d2)?
                && certified_non_isomorphic(self.d1.graph(), self.d2.graph())),
            PairRelation::SameDistributionMultiset => Ok(true),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.d1.graph().feature_dim()
    }
}

/// Feature vectors of the node roles in a circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub input: Vec<Real>,
    pub operation: Vec<Real>,
    pub output: Vec<Real>,
}

impl Default for FeatureMap {
    fn default() -> Self {
        Self {
            input: vec![1.0, 0.0, 0.0],
            operation: vec![0.0, 1.0, 0.0],
            output: vec![0.0, 0.0, 1.0],
        }
    }
}

impl FeatureMap {
    fn dim(&self) -> Result<usize> {
        let d = self.input.len();
        if d == 0 || self.operation.len() != d || self.output.len() != d {
            return Err(invalid("role features must be nonempty and of equal width"));
        }
        Ok(d)
    }
}

/// The shared-node circuit and the duplicated-branch circuit.
///
/// * A: `in → x → {y1, y2} → out`, the output of `x` is consumed twice.
/// * B: `in → {x1, x2}`, `x1 → y1 → out`, `x2 → y2 → out`.
///
/// Both unfold to the same computation tree.
pub fn gen_fig1_pair(features: &FeatureMap) -> Result<GraphPair> {
    let dim = features.dim()?;
    let (i, o, t) = (&features.input, &features.operation, &features.output);
    let build = |rows: Vec<&Vec<Real>>, edges: Vec<(usize, usize)>| -> Result<Dag> {
        let rows: Vec<Vec<Real>> = rows.into_iter().cloned().collect();
        let g = Graph::from_edges(rows.len(), edges, Tensor::from_rows(&rows, dim)?)?;
        topo_sort(&g)
    };
    let a = build(vec![i, o, o, o, t], vec![(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)])?;
    let b = build(
        vec![i, o, o, o, o, t],
        vec![(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)],
    )?;
    Ok(GraphPair {
        d1: a,
        d2: b,
        relation: PairRelation::SameComputationTree,
        labels: ["shared".into(), "duplicated".into()],
    })
}

/// `n` random rooted non-tree DAGs with 4 to `max_nodes` nodes, each paired
/// with its computation tree.
pub fn gen_pair_family(n: usize, max_nodes: usize, seed: u64) -> Result<Vec<GraphPair>> {
    if max_nodes < 4 {
        return Err(invalid("max_nodes must be at least 4"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    while pairs.len() < n {
        let size = rng.random_range(4..=max_nodes);
        let d = random_true_dag(&mut rng, size, 0.3, FAMILY_FEATURE_DIM)?;
        let t = match computation_tree(&d) {
            Ok(t) => t,
            Err(Error::TreeTooLarge { .. }) => continue,
            Err(e) => return Err(e),
        };
        pairs.push(GraphPair {
            d1: d,
            d2: t,
            relation: PairRelation::SameComputationTree,
            labels: ["dag".into(), "computation-tree".into()],
        });
    }
    Ok(pairs)
}

fn distance(a: &[Real], b: &[Real]) -> Real {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<Real>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDiscrimination {
    /// Embedding distance under each parameter seed.
    pub distances: Vec<Real>,
    pub mean_distance: Real,
    pub separated_fraction: Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub model: DagModelKind,
    pub seeds: Vec<u64>,
    pub pairs: Vec<PairDiscrimination>,
    /// Fraction of (pair, seed) combinations separated.
    pub separated_fraction: Real,
    /// Fraction of pairs separated under at least 95% of the seeds.
    pub pairs_separated_fraction: Real,
    pub max_distance: Real,
    /// Every distance is below [`EQUALITY_TOLERANCE`].
    pub all_equal: bool,
}

/// Encodes both members of every pair with shared random parameters, once
/// per seed. `config.input_dim` is taken from the pairs.
pub fn discrimination_report(
    config: &DagEncoderConfig,
    pairs: &[GraphPair],
    seeds: &[u64],
) -> Result<DiscriminationReport> {
    if pairs.is_empty() {
        return Err(invalid("discrimination report needs at least one pair"));
    }
    if seeds.is_empty() {
        return Err(invalid("discrimination report needs at least one seed"));
    }
    let dim = pairs[0].feature_dim();
    if pairs
        .iter()
        .any(|p| p.feature_dim() != dim || p.d2.graph().feature_dim() != dim)
    {
        return Err(invalid("all pairs must share one feature width"));
    }
    let config = DagEncoderConfig {
        input_dim: dim,
        ..config.clone()
    };
    let per_seed: Vec<Vec<Real>> = seeds
        .par_iter()
        .map(|&seed| {
            let (enc, store) = random_encoder(config.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?;
            pairs
                .iter()
                .map(|p| {
                    Ok(distance(
                        &enc.embed_graph(&store, &p.d1)?,
                        &enc.embed_graph(&store, &p.d2)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let k = seeds.len() as Real;
    let results: Vec<PairDiscrimination> = (0..pairs.len())
        .map(|p| {
            let distances: Vec<Real> = per_seed.iter().map(|row| row[p]).collect();
            let separated = distances.iter().filter(|&&d| d > SEPARATION_THRESHOLD).count();
            PairDiscrimination {
                mean_distance: distances.iter().sum::<Real>() / k,
                separated_fraction: separated as Real / k,
                distances,
            }
        })
        .collect();
    let all: Vec<Real> = results.iter().flat_map(|r| r.distances.iter().copied()).collect();
    let max_distance = all.iter().copied().fold(0.0, Real::max);
    Ok(DiscriminationReport {
        model: config.kind,
        seeds: seeds.to_vec(),
        separated_fraction: all.iter().filter(|&&d| d > SEPARATION_THRESHOLD).count() as Real / all.len() as Real,
        pairs_separated_fraction: results.iter().filter(|r| r.separated_fraction >= 0.95).count() as Real
            / results.len() as Real,
        max_distance,
        all_equal: max_distance < EQUALITY_TOLERANCE,
        pairs: results,
    })
}

/// A receiver (node 0) fed by every item of `x`, one sender node per item.
/// With `shared_sink`, every sender also feeds node 1, so all senders share
/// the outgoing neighborhood `{0, 1}`.
pub fn multiset_graph(x: &Multiset, receiver: &[Real], sink: &[Real], shared_sink: bool) -> Result<Graph> {
    let items = x.items();
    let dim = receiver.len();
    if items.iter().any(|v| v.len() != dim) || sink.len() != dim {
        return Err(invalid("multiset items, receiver and sink must share one width"));
    }
    let mut rows = vec![receiver.to_vec(), sink.to_vec()];
    let mut edges = Vec::new();
    for item in items {
        let v = rows.len();
        rows.push(item);
        edges.push((v, 0));
        if shared_sink {
            edges.push((v, 1));
        }
    }
    Graph::from_edges(rows.len(), edges, Tensor::from_rows(&rows, dim)?)
}

/// Outcome of feeding a multiset and its `k`-scaled copy to one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessOutcome {
    pub kind: ScoringKind,
    pub mode: NormMode,
    pub k: usize,
    /// Distance between the receiver's outputs.
    pub output_distance: Real,
    /// `‖m_k − k·m_1‖ / (k‖m_1‖)` for the receiver's pre-φ message.
    pub message_scale_error: Real,
}

/// Runs one layer on `x` and on `x` scaled by `k`, receiver-centric.
#[allow(clippy::too_many_arguments)]
pub fn multiset_witness(
    store: &ParamStore,
    p: &MpLayerParams,
    kind: ScoringKind,
    x: &Multiset,
    k: usize,
    mode: NormMode,
    receiver: &[Real],
    sink: &[Real],
) -> Result<WitnessOutcome> {
    let run = |m: &Multiset| -> Result<(Vec<Real>, Vec<Real>)> {
        let g = multiset_graph(m, receiver, sink, true)?;
        let mut t = Tape::new();
        let h = t.constant(g.features().clone());
        let out = mp_layer(&mut t, store, &g, h, p, mode)?;
        Ok((
            t.value(out.output).row_slice(0).to_vec(),
            t.value(out.message).row_slice(0).to_vec(),
        ))
    };
    let (out1, msg1) = run(x)?;
    let (outk, msgk) = run(&scale_multiset(x, k)?)?;
    let kf = k as Real;
    let scaled: Vec<Real> = msg1.iter().map(|v| kf * v).collect();
    let norm = msg1.iter().map(|v| v * v).sum::<Real>().sqrt();
    Ok(WitnessOutcome {
        kind,
        mode,
        k,
        output_distance: distance(&out1, &outk),
        message_scale_error: distance(&msgk, &scaled) / (kf * norm),
    })
}

/// Results of the multiset witness suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSuite {
    /// Standard attention on every draw, scoring kind and `k`.
    pub standard: Vec<WitnessOutcome>,
    /// Flow attention with a full-rank linear `φ`.
    pub flow: Vec<WitnessOutcome>,
}

impl WitnessSuite {
    /// Largest output change under standard attention.
    pub fn max_standard_distance(&self) -> Real {
        self.standard.iter().map(|w| w.output_distance).fold(0.0, Real::max)
    }

    /// Largest deviation of the flow message from exact `k`-scaling.
    pub fn max_flow_scale_error(&self) -> Real {
        self.flow.iter().map(|w| w.message_scale_error).fold(0.0, Real::max)
    }

    /// Smallest output change under flow attention.
    pub fn min_flow_distance(&self) -> Real {
        self.flow
            .iter()
            .map(|w| w.output_distance)
            .fold(Real::INFINITY, Real::min)
    }
}

pub const WITNESS_SCALES: [usize; 3] = [2, 3, 5];
pub const WITNESS_KINDS: [ScoringKind; 3] = [ScoringKind::Gat, ScoringKind::Gatv2, ScoringKind::Tc];

/// Draws `draws` random multisets of two to four distinct elements (width
/// `dim`) with random multiplicities, and random layers, then runs every
/// scoring kind and scale in both modes.
pub fn witness_suite(draws: usize, dim: usize, seed: u64) -> Result<WitnessSuite> {
    let per_draw: Vec<(Vec<WitnessOutcome>, Vec<WitnessOutcome>)> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let distinct = rng.random_range(2..=4);
            let elements = random_features(&mut rng, distinct, dim).to_rows();
            let multiplicities = (0..distinct).map(|_| rng.random_range(1..=3)).collect();
            let x = Multiset::new(elements, multiplicities)?;
            let ends = random_features(&mut rng, 2, dim).to_rows();
            let mut standard = Vec::new();
            let mut flow = Vec::new();
            for kind in WITNESS_KINDS {
                let mut store = ParamStore::new();
                let mut p = MpLayerParams::new(kind, &mut store, "layer", dim, dim, &mut rng)?;
                for k in WITNESS_SCALES {
                    standard.push(multiset_witness(
                        &store,
                        &p,
                        kind,
                        &x,
                        k,
                        NormMode::Standard,
                        &ends[0],
                        &ends[1],
                    )?);
                }
                p.phi = Update::Linear {
                    w: store.add("phi.w", init::glorot(&mut rng, dim, dim)),
                    b: store.add("phi.b", init::uniform(&mut rng, 1, dim, 0.5)),
                };
                for k in WITNESS_SCALES {
                    flow.push(multiset_witness(
                        &store,
                        &p,
                        kind,
                        &x,
                        k,
                        NormMode::Flow,
                        &ends[0],
                        &ends[1],
                    )?);
                }
            }
            Ok((standard, flow))
        })
        .collect::<Result<_>>()?;
    let (standard, flow): (Vec<_>, Vec<_>) = per_draw.into_iter().unzip();
    Ok(WitnessSuite {
        standard: standard.into_iter().flatten().collect(),
        flow: flow.into_iter().flatten().collect(),
    })
}
