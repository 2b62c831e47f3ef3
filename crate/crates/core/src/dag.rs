//! Sequential DAG encoders.
//!
//! Nodes are updated in topological order, each from the already-updated
//! states of its predecessors. Nodes of one topological level do not depend
//! on each other and are processed as a batch.
//!
//! * DAGNN: attention over predecessors, GRU update.
//! * D-VAE: gated sum over predecessors, GRU update.
//! * FlowDAGNN: a DAGNN pass over the reversed DAG followed by a forward pass
//!   whose weights are normalized over each sender's outgoing edges.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{EdgeWeights, NormMode};
use crate::error::{Error, Result};
use crate::graph::{reverse, Dag};
use crate::tensor::{gru_cell, init, GruParams, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Parameters of one DAGNN layer.
///
/// The score of predecessor `j` of node `i` is `w1ᵀ h_i + w2ᵀ h'_j`. The `w1`
/// term is shared by all predecessors of `i` and cancels in the softmax, so
/// it never affects the output and its gradient is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagnnLayerParams {
    pub w1: ParamId,
    pub w2: ParamId,
    pub gru: GruParams,
}

impl DagnnLayerParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, hidden: usize, rng: &mut R) -> Self {
        Self {
            w1: store.add(format!("{prefix}.w1"), init::glorot(rng, 1, hidden)),
            w2: store.add(format!("{prefix}.w2"), init::glorot(rng, 1, hidden)),
            gru: GruParams::new(store, &format!("{prefix}.gru"), hidden, hidden, rng),
        }
    }
}

/// Parameters of one D-VAE layer: gating network `g = σ(W_g h + b_g)`,
/// mapping network `m = W_m h + b_m`, and the GRU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvaeLayerParams {
    pub gate_w: ParamId,
    pub gate_b: ParamId,
    pub map_w: ParamId,
    pub map_b: ParamId,
    pub gru: GruParams,
}

impl DvaeLayerParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, hidden: usize, rng: &mut R) -> Self {
        Self {
            gate_w: store.add(format!("{prefix}.gate_w"), init::glorot(rng, hidden, hidden)),
            gate_b: store.add(format!("{prefix}.gate_b"), Tensor::zeros(1, hidden)),
            map_w: store.add(format!("{prefix}.map_w"), init::glorot(rng, hidden, hidden)),
            map_b: store.add(format!("{prefix}.map_b"), Tensor::zeros(1, hidden)),
            gru: GruParams::new(store, &format!("{prefix}.gru"), hidden, hidden, rng),
        }
    }
}

/// Parameters of one FlowDAGNN layer.
///
/// `rv` is a DAGNN layer applied to the reversed DAG. In `fw`, the flow score
/// of edge `(j, i)` is `w1ᵀ h_i^rv + w2ᵀ h_j^fw`, normalized over the
/// outgoing edges of `j`; the `w2` term is shared by that whole segment and
/// cancels, so `fw.w2` never affects the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowDagnnLayerParams {
    pub rv: DagnnLayerParams,
    pub fw: DagnnLayerParams,
}

impl FlowDagnnLayerParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, hidden: usize, rng: &mut R) -> Self {
        Self {
            rv: DagnnLayerParams::new(store, &format!("{prefix}.rv"), hidden, rng),
            fw: DagnnLayerParams::new(store, &format!("{prefix}.fw"), hidden, rng),
        }
    }
}

/// In-edges of one topological level, flattened.
struct LevelEdges {
    /// Position of each edge's receiver within the level.
    local: Vec<usize>,
    /// Index of each edge in the graph's edge list.
    edge: Vec<usize>,
    /// Predecessor of each edge.
    pred: Vec<usize>,
}

/// Runs `step` level by level. `step` receives the level's nodes, the states
/// of their predecessors (`E_l x H`, or `None` for a level without in-edges)
/// and the edge bookkeeping, and returns the level's new states.
fn sequential<F>(tape: &mut Tape, d: &Dag, hidden: usize, mut step: F) -> Result<Var>
where
    F: FnMut(&mut Tape, &[usize], Option<(Var, &LevelEdges)>) -> Result<Var>,
{
    let g = d.graph();
    let n = d.num_nodes();
    let mut at: Vec<Option<(Var, usize)>> = vec![None; n];
    for level in d.levels() {
        let mut le = LevelEdges {
            local: Vec::new(),
            edge: Vec::new(),
            pred: Vec::new(),
        };
        for (k, &v) in level.iter().enumerate() {
            for &(u, e) in g.in_edges(v) {
                le.local.push(k);
                le.edge.push(e);
                le.pred.push(u);
            }
        }
        let preds = if le.edge.is_empty() {
            None
        } else {
            let parts: Vec<(Var, usize)> = le
                .pred
                .iter()
                .map(|&u| at[u].expect("predecessor processed in an earlier level"))
                .collect();
            Some((tape.select_rows(&parts, hidden)?, &le))
        };
        let out = step(tape, &level, preds)?;
        for (k, &v) in level.iter().enumerate() {
            at[v] = Some((out, k));
        }
    }
    let all: Vec<(Var, usize)> = at.into_iter().map(|x| x.expect("every node is in a level")).collect();
    tape.select_rows(&all, hidden)
}

fn check_states(tape: &Tape, d: &Dag, h: Var, hidden: usize) -> Result<()> {
    let s = tape.shape(h);
    if s != [d.num_nodes(), hidden] {
        return Err(Error::Shape {
            op: "dag layer",
            detail: format!("states {s:?} for {} nodes of width {hidden}", d.num_nodes()),
        });
    }
    Ok(())
}

fn zero_messages(tape: &mut Tape, rows: usize, hidden: usize) -> Var {
    tape.constant(Tensor::zeros(rows, hidden))
}

/// DAGNN layer: `h'_i = GRU(h_i, Σ_j α_ij h'_j)` with `α` a softmax of
/// `w2ᵀ h'_j` over the predecessors of `i`. Initial nodes receive a zero message.
pub fn dagnn_layer(tape: &mut Tape, store: &ParamStore, d: &Dag, h: Var, p: &DagnnLayerParams) -> Result<Var> {
    let hidden = p.gru.hidden(store);
    check_states(tape, d, h, hidden)?;
    let w2 = tape.param(store, p.w2);
    sequential(tape, d, hidden, |tape, level, preds| {
        let m = match preds {
            None => zero_messages(tape, level.len(), hidden),
            Some((states, le)) => {
                let s = tape.matmul_t(states, w2)?;
                let alpha = tape.segment_softmax(s, &le.local, level.len())?;
                let weighted = tape.mul_col(states, alpha)?;
                tape.segment_sum(weighted, &le.local, level.len())?
            }
        };
        let hl = tape.gather_rows(h, level)?;
        gru_cell(tape, store, &p.gru, hl, m)
    })
}

/// D-VAE layer: `h'_i = GRU(h_i, Σ_j σ(g(h'_j)) ⊙ map(h'_j))`.
pub fn dvae_layer(tape: &mut Tape, store: &ParamStore, d: &Dag, h: Var, p: &DvaeLayerParams) -> Result<Var> {
    let hidden = p.gru.hidden(store);
    check_states(tape, d, h, hidden)?;
    let gw = tape.param(store, p.gate_w);
    let gb = tape.param(store, p.gate_b);
    let mw = tape.param(store, p.map_w);
    let mb = tape.param(store, p.map_b);
    sequential(tape, d, hidden, |tape, level, preds| {
        let m = match preds {
            None => zero_messages(tape, level.len(), hidden),
            Some((states, le)) => {
                let gate = tape.linear(states, gw, Some(gb))?;
                let gate = tape.sigmoid(gate);
                let mapped = tape.linear(states, mw, Some(mb))?;
                let gated = tape.mul(gate, mapped)?;
                tape.segment_sum(gated, &le.local, level.len())?
            }
        };
        let hl = tape.gather_rows(h, level)?;
        gru_cell(tape, store, &p.gru, hl, m)
    })
}

/// States produced by one FlowDAGNN layer.
#[derive(Clone, Copy, Debug)]
pub struct FlowLayerOutput {
    pub h_rv: Var,
    pub h_fw: Var,
    /// Flow weight of every edge of the input DAG, `E x 1`.
    pub beta: Var,
}

/// FlowDAGNN layer.
///
/// The reverse pass runs [`dagnn_layer`] with `p.rv` on the reversed DAG, so
/// each node attends over its successors. The forward pass then processes
/// nodes in topological order with `h_i^fw = GRU(h_i^rv, Σ_j β_ij h_j^fw)`,
/// where `β_ij` is a softmax of `w1ᵀ h_i^rv` over the outgoing edges of `j`.
pub fn flowdagnn_layer(
    tape: &mut Tape,
    store: &ParamStore,
    d: &Dag,
    h: Var,
    p: &FlowDagnnLayerParams,
) -> Result<FlowLayerOutput> {
    let hidden = p.fw.gru.hidden(store);
    let g = d.graph();
    let h_rv = dagnn_layer(tape, store, &reverse(d), h, &p.rv)?;

    let w1 = tape.param(store, p.fw.w1);
    let receivers = tape.gather_rows(h_rv, &g.edge_dst())?;
    let scores = tape.matmul_t(receivers, w1)?;
    let beta = tape.segment_softmax(scores, &g.edge_src(), g.num_nodes())?;

    let h_fw = sequential(tape, d, hidden, |tape, level, preds| {
        let m = match preds {
            None => zero_messages(tape, level.len(), hidden),
            Some((states, le)) => {
                let b = tape.gather_rows(beta, &le.edge)?;
                let weighted = tape.mul_col(states, b)?;
                tape.segment_sum(weighted, &le.local, level.len())?
            }
        };
        let hl = tape.gather_rows(h_rv, level)?;
        gru_cell(tape, store, &p.fw.gru, hl, m)
    })?;
    Ok(FlowLayerOutput { h_rv, h_fw, beta })
}

/// Reads flow weights off a tape.
pub fn edge_weights(tape: &Tape, beta: Var) -> EdgeWeights {
    EdgeWeights {
        values: tape.value(beta).data().to_vec(),
        mode: NormMode::Flow,
    }
}

/// `Max-Pool_{i ∈ I}(x ‖ h^rv,1 ‖ … ‖ h^rv,L) ‖ Max-Pool_{j ∈ F}(x ‖ h^fw,1 ‖ … ‖ h^fw,L)`.
pub fn readout_flowdagnn(tape: &mut Tape, x: Var, layers: &[FlowLayerOutput], d: &Dag) -> Result<Var> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("readout needs at least one layer".into()));
    }
    let mut rv = vec![x];
    rv.extend(layers.iter().map(|l| l.h_rv));
    let mut fw = vec![x];
    fw.extend(layers.iter().map(|l| l.h_fw));
    let rv = tape.concat_cols(&rv)?;
    let fw = tape.concat_cols(&fw)?;
    let a = pool(tape, rv, &d.initial_nodes(), "initial nodes")?;
    let b = pool(tape, fw, &d.final_nodes(), "final nodes")?;
    tape.concat_cols(&[a, b])
}

fn pool(tape: &mut Tape, states: Var, rows: &[usize], what: &'static str) -> Result<Var> {
    if rows.is_empty() {
        return Err(Error::EmptyPool(what));
    }
    tape.max_rows(states, rows)
}

/// Fully connected output layer of a bidirectional readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w: store.add(format!("{prefix}.w"), init::glorot(rng, output, input)),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, output)),
        }
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.linear(x, w, Some(b))
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        store.get(self.w).rows()
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.get(self.w).cols()
    }
}

/// DAGNN / D-VAE readout.
///
/// Unidirectional: `Max-Pool_{j ∈ F}(x ‖ h^1 ‖ … ‖ h^L)`. Bidirectional
/// (`reverse = Some((states, fc))`, states computed on the reversed DAG):
/// `FC(Max-Pool_{i ∈ I}(x ‖ h^rv,1 ‖ …) ‖ Max-Pool_{j ∈ F}(x ‖ h^1 ‖ …))`.
pub fn readout_dagnn(
    tape: &mut Tape,
    store: &ParamStore,
    x: Var,
    forward: &[Var],
    reverse: Option<(&[Var], &Linear)>,
    d: &Dag,
) -> Result<Var> {
    if forward.is_empty() {
        return Err(Error::InvalidArgument("readout needs at least one layer".into()));
    }
    let mut fw = vec![x];
    fw.extend_from_slice(forward);
    let fw = tape.concat_cols(&fw)?;
    let fw = pool(tape, fw, &d.final_nodes(), "final nodes")?;
    match reverse {
        None => Ok(fw),
        Some((rev, fc)) => {
            if rev.len() != forward.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} forward layers but {} reverse layers",
                    forward.len(),
                    rev.len()
                )));
            }
            let mut rv = vec![x];
            rv.extend_from_slice(rev);
            let rv = tape.concat_cols(&rv)?;
            let rv = pool(tape, rv, &d.initial_nodes(), "initial nodes")?;
            let both = tape.concat_cols(&[rv, fw])?;
            fc.apply(tape, store, both)
        }
    }
}

/// The DAG encoder families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DagModelKind {
    Dagnn,
    Dvae,
    Flowdagnn,
}

impl std::str::FromStr for DagModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "dagnn" => Ok(Self::Dagnn),
            "dvae" => Ok(Self::Dvae),
            "flowdagnn" => Ok(Self::Flowdagnn),
            other => Err(Error::InvalidArgument(format!("unknown DAG model '{other}'"))),
        }
    }
}

/// Shape of a DAG encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagEncoderConfig {
    pub kind: DagModelKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Adds a reverse stack and an FC readout. Ignored by FlowDAGNN, which
    /// always runs both directions.
    pub bidirectional: bool,
}

impl DagEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.input_dim == 0 {
            problems.push("input_dim must be positive");
        }
        if self.hidden == 0 {
            problems.push("hidden must be positive");
        }
        if self.layers == 0 {
            problems.push("layers must be at least 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    fn uses_reverse_stack(&self) -> bool {
        self.bidirectional && self.kind != DagModelKind::Flowdagnn
    }

    /// Width of one pooled stack: raw features plus one block per layer.
    fn stack_dim(&self) -> usize {
        self.input_dim + self.layers * self.hidden
    }

    /// Width of the graph embedding.
    pub fn output_dim(&self) -> usize {
        match self.kind {
            DagModelKind::Flowdagnn => 2 * self.stack_dim(),
            _ => self.stack_dim(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EncoderLayers {
    Dagnn {
        forward: Vec<DagnnLayerParams>,
        reverse: Vec<DagnnLayerParams>,
    },
    Dvae {
        forward: Vec<DvaeLayerParams>,
        reverse: Vec<DvaeLayerParams>,
    },
    Flow(Vec<FlowDagnnLayerParams>),
}

/// A complete DAG encoder: input embedding, stacked layers and readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagEncoder {
    pub config: DagEncoderConfig,
    /// Linear map from raw features to the hidden width.
    pub embed: Linear,
    pub layers: EncoderLayers,
    /// Present for bidirectional DAGNN / D-VAE.
    pub fc: Option<Linear>,
}

/// Intermediate values of one encoder evaluation.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    pub embedding: Var,
    /// Per-layer FlowDAGNN outputs; empty for other models.
    pub flow_layers: Vec<FlowLayerOutput>,
    /// Per-layer forward states of DAGNN / D-VAE.
    pub forward: Vec<Var>,
    /// Per-layer reverse states of bidirectional DAGNN / D-VAE.
    pub reverse: Vec<Var>,
}

impl DagEncoder {
    pub fn new<R: Rng + ?Sized>(
        config: DagEncoderConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let embed = Linear::new(store, &format!("{prefix}.embed"), config.input_dim, h, rng);
        let rev_layers = if config.uses_reverse_stack() { config.layers } else { 0 };
        let layers = match config.kind {
            DagModelKind::Dagnn => EncoderLayers::Dagnn {
                forward: (0..config.layers)
                    .map(|l| DagnnLayerParams::new(store, &format!("{prefix}.fwd{l}"), h, rng))
                    .collect(),
                reverse: (0..rev_layers)
                    .map(|l| DagnnLayerParams::new(store, &format!("{prefix}.rev{l}"), h, rng))
                    .collect(),
            },
            DagModelKind::Dvae => EncoderLayers::Dvae {
                forward: (0..config.layers)
                    .map(|l| DvaeLayerParams::new(store, &format!("{prefix}.fwd{l}"), h, rng))
                    .collect(),
                reverse: (0..rev_layers)
                    .map(|l| DvaeLayerParams::new(store, &format!("{prefix}.rev{l}"), h, rng))
                    .collect(),
            },
            DagModelKind::Flowdagnn => EncoderLayers::Flow(
                (0..config.layers)
                    .map(|l| FlowDagnnLayerParams::new(store, &format!("{prefix}.layer{l}"), h, rng))
                    .collect(),
            ),
        };
        let fc = config.uses_reverse_stack().then(|| {
            let d = config.stack_dim();
            Linear::new(store, &format!("{prefix}.fc"), 2 * d, d, rng)
        });
        Ok(Self {
            config,
            embed,
            layers,
            fc,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn check_input(&self, d: &Dag) -> Result<()> {
        let dim = d.graph().feature_dim();
        if dim != self.config.input_dim {
            return Err(Error::Shape {
                op: "encode",
                detail: format!("features of width {dim}, encoder expects {}", self.config.input_dim),
            });
        }
        Ok(())
    }

    /// Graph embedding as a `1 x output_dim` row, plus intermediate states.
    pub fn trace(&self, tape: &mut Tape, store: &ParamStore, d: &Dag) -> Result<EncoderTrace> {
        self.check_input(d)?;
        let x = tape.constant(d.graph().features().clone());
        let h0 = self.embed.apply(tape, store, x)?;
        let mut trace = EncoderTrace {
            embedding: x,
            flow_layers: Vec::new(),
            forward: Vec::new(),
            reverse: Vec::new(),
        };
        match &self.layers {
            EncoderLayers::Flow(layers) => {
                let mut h = h0;
                for p in layers {
                    let out = flowdagnn_layer(tape, store, d, h, p)?;
                    h = out.h_fw;
                    trace.flow_layers.push(out);
                }
                trace.embedding = readout_flowdagnn(tape, x, &trace.flow_layers, d)?;
            }
            EncoderLayers::Dagnn { forward, reverse: rev } => {
                trace.forward = stack(tape, d, h0, forward, |t, d, h, p| dagnn_layer(t, store, d, h, p))?;
                if !rev.is_empty() {
                    let r = reverse(d);
                    trace.reverse = stack(tape, &r, h0, rev, |t, d, h, p| dagnn_layer(t, store, d, h, p))?;
                }
                trace.embedding = self.dagnn_readout(tape, store, x, &trace, d)?;
            }
            EncoderLayers::Dvae { forward, reverse: rev } => {
                trace.forward = stack(tape, d, h0, forward, |t, d, h, p| dvae_layer(t, store, d, h, p))?;
                if !rev.is_empty() {
                    let r = reverse(d);
                    trace.reverse = stack(tape, &r, h0, rev, |t, d, h, p| dvae_layer(t, store, d, h, p))?;
                }
                trace.embedding = self.dagnn_readout(tape, store, x, &trace, d)?;
            }
        }
        Ok(trace)
    }

    fn dagnn_readout(&self, tape: &mut Tape, store: &ParamStore, x: Var, trace: &EncoderTrace, d: &Dag) -> Result<Var> {
        let rev = self.fc.as_ref().map(|fc| (trace.reverse.as_slice(), fc));
        readout_dagnn(tape, store, x, &trace.forward, rev, d)
    }

    /// Graph embedding as a `1 x output_dim` row.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, d: &Dag) -> Result<Var> {
        Ok(self.trace(tape, store, d)?.embedding)
    }

    /// Graph embedding evaluated on a private tape.
    pub fn embed_graph(&self, store: &ParamStore, d: &Dag) -> Result<Vec<Real>> {
        let mut tape = Tape::new();
        let e = self.encode(&mut tape, store, d)?;
        Ok(tape.value(e).data().to_vec())
    }
}

fn stack<P, F>(tape: &mut Tape, d: &Dag, h0: Var, layers: &[P], mut layer: F) -> Result<Vec<Var>>
where
    F: FnMut(&mut Tape, &Dag, Var, &P) -> Result<Var>,
{
    let mut out = Vec::with_capacity(layers.len());
    let mut h = h0;
    for p in layers {
        h = layer(tape, d, h, p)?;
        out.push(h);
    }
    Ok(out)
}

/// Builds an encoder in a fresh store.
pub fn random_encoder<R: Rng + ?Sized>(config: DagEncoderConfig, rng: &mut R) -> Result<(DagEncoder, ParamStore)> {
    let mut store = ParamStore::new();
    let enc = DagEncoder::new(config, &mut store, "enc", rng)?;
    Ok((enc, store))
}
