//! Scoring functions and the two attention normalizations for general graphs.
//!
//! A score `e(h_i, h_j)` is computed for every edge `(j, i)`, with the
//! receiving node `i` always passed first. Standard attention normalizes the
//! scores over each receiver's incoming edges; flow attention normalizes over
//! each sender's outgoing edges.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::{init, ParamId, ParamStore, Real, Tape, Var};

/// Default negative slope of LeakyReLU.
pub const DEFAULT_LEAKY_SLOPE: Real = 0.2;

/// Which edges a node's attention is normalized over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// Over the receiver's incoming edges.
    Standard,
    /// Over the sender's outgoing edges.
    Flow,
}

impl NormMode {
    /// Segment id of every edge: its destination for standard attention, its
    /// source for flow attention.
    pub fn segments(self, g: &Graph) -> Vec<usize> {
        match self {
            NormMode::Standard => g.edge_dst(),
            NormMode::Flow => g.edge_src(),
        }
    }
}

/// The three scoring functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringKind {
    Gat,
    Gatv2,
    Tc,
}

impl std::str::FromStr for ScoringKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gat" => Ok(Self::Gat),
            "gatv2" => Ok(Self::Gatv2),
            "tc" | "transformerconv" => Ok(Self::Tc),
            other => Err(Error::InvalidArgument(format!("unknown scoring function '{other}'"))),
        }
    }
}

/// Parameters of one scoring function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScoringParams {
    /// `LeakyReLU(aᵀ[W h_i ‖ W h_j])`; `w` is `h_out x h_in`, `a` is `1 x 2·h_out`.
    Gat { w: ParamId, a: ParamId, slope: Real },
    /// `aᵀ LeakyReLU(W [h_i ‖ h_j])`; `w` is `h_out x 2·h_in`, `a` is `1 x h_out`.
    Gatv2 { w: ParamId, a: ParamId, slope: Real },
    /// `(Wq h_i + bq)ᵀ (Wk h_j + bk) / √d`; `wq`, `wk` are `d x h_in`.
    Tc {
        wq: ParamId,
        wk: ParamId,
        bq: ParamId,
        bk: ParamId,
    },
}

impl ScoringParams {
    /// Glorot-initialized parameters. `h_out` is the attention width (`d` for TC).
    pub fn new<R: Rng + ?Sized>(
        kind: ScoringKind,
        store: &mut ParamStore,
        prefix: &str,
        h_in: usize,
        h_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if h_in == 0 || h_out == 0 {
            return Err(Error::InvalidArgument("scoring dimensions must be positive".into()));
        }
        let name = |s: &str| format!("{prefix}.{s}");
        Ok(match kind {
            ScoringKind::Gat => Self::Gat {
                w: store.add(name("w"), init::glorot(rng, h_out, h_in)),
                a: store.add(name("a"), init::glorot(rng, 1, 2 * h_out)),
                slope: DEFAULT_LEAKY_SLOPE,
            },
            ScoringKind::Gatv2 => Self::Gatv2 {
                w: store.add(name("w"), init::glorot(rng, h_out, 2 * h_in)),
                a: store.add(name("a"), init::glorot(rng, 1, h_out)),
                slope: DEFAULT_LEAKY_SLOPE,
            },
            ScoringKind::Tc => Self::Tc {
                wq: store.add(name("wq"), init::glorot(rng, h_out, h_in)),
                wk: store.add(name("wk"), init::glorot(rng, h_out, h_in)),
                bq: store.add(name("bq"), init::uniform(rng, 1, h_out, 0.1)),
                bk: store.add(name("bk"), init::uniform(rng, 1, h_out, 0.1)),
            },
        })
    }

    pub fn kind(&self) -> ScoringKind {
        match self {
            Self::Gat { .. } => ScoringKind::Gat,
            Self::Gatv2 { .. } => ScoringKind::Gatv2,
            Self::Tc { .. } => ScoringKind::Tc,
        }
    }

    /// Expected width of node features.
    pub fn input_dim(&self, store: &ParamStore) -> usize {
        match self {
            Self::Gat { w, .. } => store.get(*w).cols(),
            Self::Gatv2 { w, .. } => store.get(*w).cols() / 2,
            Self::Tc { wq, .. } => store.get(*wq).cols(),
        }
    }
}

/// Per-edge attention weights aligned with the graph's edge order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeights {
    pub values: Vec<Real>,
    pub mode: NormMode,
}

impl EdgeWeights {
    /// Largest deviation of a segment sum from 1, or an error if a value lies
    /// outside `[0, 1]` or the length does not match the graph.
    pub fn normalization_error(&self, g: &Graph) -> Result<Real> {
        if self.values.len() != g.num_edges() {
            return Err(Error::Shape {
                op: "edge weights",
                detail: format!("{} weights for {} edges", self.values.len(), g.num_edges()),
            });
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("edge weight {v} outside [0, 1]")));
        }
        let mut sums = vec![0.0; g.num_nodes()];
        let mut used = vec![false; g.num_nodes()];
        for (&s, &v) in self.mode.segments(g).iter().zip(&self.values) {
            sums[s] += v;
            used[s] = true;
        }
        Ok(sums
            .iter()
            .zip(&used)
            .filter(|(_, &u)| u)
            .map(|(s, _)| (s - 1.0).abs())
            .fold(0.0, Real::max))
    }
}

fn check_rows(tape: &Tape, g: &Graph, h: Var) -> Result<()> {
    let s = tape.shape(h);
    if s[0] != g.num_nodes() {
        return Err(Error::Shape {
            op: "attention",
            detail: format!("{} feature rows for {} nodes", s[0], g.num_nodes()),
        });
    }
    Ok(())
}

/// Which additive score terms to keep. Terms that depend only on the
/// segment's own node are equal across the segment and cancel in the softmax.
#[derive(Clone, Copy)]
enum Terms {
    All,
    For(NormMode),
}

fn scores(tape: &mut Tape, store: &ParamStore, g: &Graph, h: Var, p: &ScoringParams, terms: Terms) -> Result<Var> {
    check_rows(tape, g, h)?;
    let dst = g.edge_dst();
    let src = g.edge_src();
    match *p {
        ScoringParams::Gat { w, a, slope } => {
            let w = tape.param(store, w);
            let a = tape.param(store, a);
            let wh = tape.matmul_t(h, w)?;
            let wi = tape.gather_rows(wh, &dst)?;
            let wj = tape.gather_rows(wh, &src)?;
            let cat = tape.concat_cols(&[wi, wj])?;
            let z = tape.matmul_t(cat, a)?;
            Ok(tape.leaky_relu(z, slope))
        }
        ScoringParams::Gatv2 { w, a, slope } => {
            let w = tape.param(store, w);
            let a = tape.param(store, a);
            let hi = tape.gather_rows(h, &dst)?;
            let hj = tape.gather_rows(h, &src)?;
            let cat = tape.concat_cols(&[hi, hj])?;
            let z = tape.matmul_t(cat, w)?;
            let z = tape.leaky_relu(z, slope);
            tape.matmul_t(z, a)
        }
        ScoringParams::Tc { wq, wk, bq, bk } => {
            let d = store.get(wq).rows();
            let wq = tape.param(store, wq);
            let wk = tape.param(store, wk);
            let mut q = tape.matmul_t(h, wq)?;
            let mut k = tape.matmul_t(h, wk)?;
            // q_iᵀ bk is constant over a receiver's edges, bqᵀ k_j over a sender's.
            if !matches!(terms, Terms::For(NormMode::Flow)) {
                let bq = tape.param(store, bq);
                q = tape.add_row(q, bq)?;
            }
            if !matches!(terms, Terms::For(NormMode::Standard)) {
                let bk = tape.param(store, bk);
                k = tape.add_row(k, bk)?;
            }
            let qi = tape.gather_rows(q, &dst)?;
            let kj = tape.gather_rows(k, &src)?;
            let prod = tape.mul(qi, kj)?;
            let s = tape.sum_cols(prod);
            Ok(tape.scale(s, 1.0 / (d as Real).sqrt()))
        }
    }
}

/// Raw scores `e_ij` for every edge as an `E x 1` column.
pub fn score_edges(tape: &mut Tape, store: &ParamStore, g: &Graph, h: Var, p: &ScoringParams) -> Result<Var> {
    scores(tape, store, g, h, p, Terms::All)
}

/// Attention weights of every edge as an `E x 1` column.
///
/// Equal to `segment_softmax(score_edges(..))` over the mode's segments.
pub fn attention_weights(
    tape: &mut Tape,
    store: &ParamStore,
    g: &Graph,
    h: Var,
    p: &ScoringParams,
    mode: NormMode,
) -> Result<Var> {
    let e = scores(tape, store, g, h, p, Terms::For(mode))?;
    tape.segment_softmax(e, &mode.segments(g), g.num_nodes())
}

fn normalize(g: &Graph, e: &[Real], mode: NormMode) -> Result<EdgeWeights> {
    if e.len() != g.num_edges() {
        return Err(Error::Shape {
            op: "normalize",
            detail: format!("{} scores for {} edges", e.len(), g.num_edges()),
        });
    }
    let values = crate::tensor::segment_softmax_values(e, &mode.segments(g), g.num_nodes());
    Ok(EdgeWeights { values, mode })
}

/// Softmax of the scores over each node's incoming edges.
pub fn normalize_standard(g: &Graph, e: &[Real]) -> Result<EdgeWeights> {
    normalize(g, e, NormMode::Standard)
}

/// Softmax of the scores over each node's outgoing edges.
pub fn normalize_flow(g: &Graph, e: &[Real]) -> Result<EdgeWeights> {
    normalize(g, e, NormMode::Flow)
}

/// The message function `f` applied to sender states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MessageMap {
    Identity,
    /// `f(h) = W h` without bias; `W` is `h_out x h_in`.
    Linear(ParamId),
}

/// The update function `φ` applied to aggregated messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Update {
    Identity,
    /// `φ(m) = W m + b`.
    Linear {
        w: ParamId,
        b: ParamId,
    },
    /// `φ(m) = LeakyReLU(W m + b)`.
    LinearLeaky {
        w: ParamId,
        b: ParamId,
        slope: Real,
    },
}

/// One message-passing layer: scoring, message map and update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpLayerParams {
    pub scoring: ScoringParams,
    pub f: MessageMap,
    pub phi: Update,
}

impl MpLayerParams {
    /// Layer with a linear `f` (`h_in -> h_out`), linear + LeakyReLU `φ`
    /// (`h_out -> h_out`) and a scoring function of width `h_out`.
    pub fn new<R: Rng + ?Sized>(
        kind: ScoringKind,
        store: &mut ParamStore,
        prefix: &str,
        h_in: usize,
        h_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let scoring = ScoringParams::new(kind, store, &format!("{prefix}.score"), h_in, h_out, rng)?;
        let f = MessageMap::Linear(store.add(format!("{prefix}.f"), init::glorot(rng, h_out, h_in)));
        let phi = Update::LinearLeaky {
            w: store.add(format!("{prefix}.phi.w"), init::glorot(rng, h_out, h_out)),
            b: store.add(format!("{prefix}.phi.b"), init::uniform(rng, 1, h_out, 0.1)),
            slope: DEFAULT_LEAKY_SLOPE,
        };
        Ok(Self { scoring, f, phi })
    }
}

/// Intermediate values of one [`mp_layer`] evaluation.
#[derive(Clone, Copy, Debug)]
pub struct MpOutput {
    /// `φ(m)`, one row per node.
    pub output: Var,
    /// Aggregated messages before `φ`; zero rows for nodes without incoming edges.
    pub message: Var,
    /// Attention weight of every edge, `E x 1`.
    pub weights: Var,
}

/// `h'_i = φ(Σ_{j ∈ N_in(i)} w_ij f(h_j))` with `w` normalized per `mode`.
pub fn mp_layer(
    tape: &mut Tape,
    store: &ParamStore,
    g: &Graph,
    h: Var,
    p: &MpLayerParams,
    mode: NormMode,
) -> Result<MpOutput> {
    let weights = attention_weights(tape, store, g, h, &p.scoring, mode)?;
    let fh = match p.f {
        MessageMap::Identity => h,
        MessageMap::Linear(w) => {
            let w = tape.param(store, w);
            tape.matmul_t(h, w)?
        }
    };
    let from = tape.gather_rows(fh, &g.edge_src())?;
    let weighted = tape.mul_col(from, weights)?;
    let message = tape.segment_sum(weighted, &g.edge_dst(), g.num_nodes())?;
    let output = match p.phi {
        Update::Identity => message,
        Update::Linear { w, b } => {
            let w = tape.param(store, w);
            let b = tape.param(store, b);
            tape.linear(message, w, Some(b))?
        }
        Update::LinearLeaky { w, b, slope } => {
            let w = tape.param(store, w);
            let b = tape.param(store, b);
            let z = tape.linear(message, w, Some(b))?;
            tape.leaky_relu(z, slope)
        }
    };
    Ok(MpOutput {
        output,
        message,
        weights,
    })
}
