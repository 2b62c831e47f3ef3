use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{mp_layer, EdgeWeights, MpLayerParams, NormMode, ScoringKind};
use crate::dag::{DagEncoder, DagEncoderConfig, DagModelKind, Linear};
use crate::error::{invalid, Error, Result};
use crate::flow::encoder_flow_weights;
use crate::graph::{topo_sort, Dag, Graph};
use crate::tensor::{ParamStore, Real, Tape, Var};

/// What a model predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Task {
    Classification { num_classes: usize },
    Regression,
}

impl Task {
    pub fn output_dim(&self) -> usize {
        match self {
            Task::Classification { num_classes } => *num_classes,
            Task::Regression => 1,
        }
    }
}

/// Ground truth of one graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Class(usize),
    Value(Real),
}

/// A graph ready for training: the graph, its topological order when it is
/// acyclic, and its target.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub graph: Graph,
    pub dag: Option<Dag>,
    pub target: Target,
}

impl Sample {
    pub fn new(graph: Graph, target: Target) -> Self {
        let dag = topo_sort(&graph).ok();
        Self { graph, dag, target }
    }
}

/// The message-passing body of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Architecture {
    /// Stacked attention layers on general graphs, max-pooled over all nodes.
    /// With `mode = flow` and GAT scoring this is FlowGAT.
    Gnn {
        scoring: ScoringKind,
        mode: NormMode,
        hidden: usize,
        layers: usize,
    },
    /// A sequential DAG encoder.
    Dag {
        kind: DagModelKind,
        hidden: usize,
        layers: usize,
        bidirectional: bool,
    },
}

/// Prediction head on top of the graph embedding. The MLP uses LeakyReLU
/// after GNN bodies and ReLU after DAG encoders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Head {
    Linear,
    Mlp { hidden: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub task: Task,
    pub head: Head,
}

impl ModelSpec {
    /// Every violated constraint.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.input_dim == 0 {
            problems.push("input_dim must be positive".to_string());
        }
        let (hidden, layers) = match &self.architecture {
            Architecture::Gnn { hidden, layers, .. } | Architecture::Dag { hidden, layers, .. } => (*hidden, *layers),
        };
        if hidden == 0 {
            problems.push("hidden must be positive".into());
        }
        if layers == 0 {
            problems.push("layers must be at least 1".into());
        }
        match self.task {
            Task::Classification { num_classes } if num_classes < 2 => {
                problems.push("classification needs at least 2 classes".into())
            }
            _ => {}
        }
        if let Head::Mlp { hidden: 0 } = self.head {
            problems.push("head hidden width must be positive".into());
        }
        problems
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Body {
    Gnn(Vec<MpLayerParams>),
    Dag(DagEncoder),
}

/// A graph-level model: body, max-pool readout and head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    body: Body,
    head: Vec<Linear>,
}

impl Model {
    /// Adds the model's parameters to `store` in a fixed order.
    pub fn new<R: Rng + ?Sized>(spec: ModelSpec, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let (body, width) = match &spec.architecture {
            Architecture::Gnn {
                scoring,
                hidden,
                layers,
                ..
            } => {
                let mut ps = Vec::with_capacity(*layers);
                for l in 0..*layers {
                    let h_in = if l == 0 { spec.input_dim } else { *hidden };
                    ps.push(MpLayerParams::new(
                        *scoring,
                        store,
                        &format!("gnn{l}"),
                        h_in,
                        *hidden,
                        rng,
                    )?);
                }
                (Body::Gnn(ps), *hidden)
            }
            Architecture::Dag {
                kind,
                hidden,
                layers,
                bidirectional,
            } => {
                let config = DagEncoderConfig {
                    kind: *kind,
                    input_dim: spec.input_dim,
                    hidden: *hidden,
                    layers: *layers,
                    bidirectional: *bidirectional,
                };
                let enc = DagEncoder::new(config, store, "dag", rng)?;
                let w = enc.output_dim();
                (Body::Dag(enc), w)
            }
        };
        let out = spec.task.output_dim();
        let head = match spec.head {
            Head::Linear => vec![Linear::new(store, "head0", width, out, rng)],
            Head::Mlp { hidden } => vec![
                Linear::new(store, "head0", width, hidden, rng),
                Linear::new(store, "head1", hidden, out, rng),
            ],
        };
        Ok(Self { spec, body, head })
    }

    /// Width of the pooled graph embedding.
    pub fn embedding_dim(&self, store: &ParamStore) -> usize {
        self.head[0].input_dim(store)
    }

    /// Graph embedding, `1 x embedding_dim`.
    pub fn embed<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &Sample,
        dropout: Real,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        match &self.body {
            Body::Gnn(layers) => {
                let (h, _) = self.gnn_body(tape, store, layers, &sample.graph, dropout, train, rng)?;
                let all: Vec<usize> = (0..sample.graph.num_nodes()).collect();
                tape.max_rows(h, &all)
            }
            Body::Dag(enc) => {
                let d = sample
                    .dag
                    .as_ref()
                    .ok_or_else(|| invalid("DAG models need acyclic graphs"))?;
                let e = enc.encode(tape, store, d)?;
                tape.dropout(e, dropout, train, rng)
            }
        }
    }

    /// Node states after the last layer and the attention weights of every
    /// layer.
    #[allow(clippy::too_many_arguments)]
    fn gnn_body<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        layers: &[MpLayerParams],
        g: &Graph,
        dropout: Real,
        train: bool,
        rng: &mut R,
    ) -> Result<(Var, Vec<Var>)> {
        let Architecture::Gnn { mode, .. } = self.spec.architecture else {
            unreachable!("body matches architecture")
        };
        if g.num_nodes() == 0 {
            return Err(Error::EmptyPool("graph nodes"));
        }
        let mut h = tape.constant(g.features().clone());
        let mut weights = Vec::with_capacity(layers.len());
        for (l, p) in layers.iter().enumerate() {
            let out = mp_layer(tape, store, g, h, p, mode)?;
            weights.push(out.weights);
            h = out.output;
            if l + 1 < layers.len() {
                h = tape.relu(h);
                h = tape.dropout(h, dropout, train, rng)?;
            }
        }
        Ok((h, weights))
    }

    /// Flow-attention weights of every layer on one sample: the attention
    /// weights of a flow-mode GNN, or the forward-pass weights of FlowDAGNN.
    pub fn flow_weights(&self, store: &ParamStore, sample: &Sample) -> Result<Vec<EdgeWeights>> {
        match (&self.body, &self.spec.architecture) {
            (
                Body::Gnn(layers),
                Architecture::Gnn {
                    mode: NormMode::Flow, ..
                },
            ) => {
                let mut tape = Tape::new();
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let (_, weights) = self.gnn_body(&mut tape, store, layers, &sample.graph, 0.0, false, &mut rng)?;
                Ok(weights
                    .into_iter()
                    .map(|w| EdgeWeights {
                        values: tape.value(w).data().to_vec(),
                        mode: NormMode::Flow,
                    })
                    .collect())
            }
            (Body::Dag(enc), _) if enc.config.kind == DagModelKind::Flowdagnn => {
                let d = sample
                    .dag
                    .as_ref()
                    .ok_or_else(|| invalid("DAG models need acyclic graphs"))?;
                encoder_flow_weights(enc, store, d)
            }
            _ => Err(invalid("model has no flow-attention layers")),
        }
    }

    /// Raw outputs: logits for classification, the prediction for regression.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &Sample,
        dropout: Real,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let mut x = self.embed(tape, store, sample, dropout, train, rng)?;
        for (k, layer) in self.head.iter().enumerate() {
            if k > 0 {
                x = match self.body {
                    Body::Gnn(_) => tape.leaky_relu(x, crate::attention::DEFAULT_LEAKY_SLOPE),
                    Body::Dag(_) => tape.relu(x),
                };
            }
            x = layer.apply(tape, store, x)?;
        }
        Ok(x)
    }

    /// Per-sample loss: NLL of the log-softmax for classification, squared
    /// error for regression.
    pub fn loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &Sample,
        dropout: Real,
        train: bool,
        rng: &mut R,
    ) -> Result<(Var, Var)> {
        let out = self.forward(tape, store, sample, dropout, train, rng)?;
        let loss = match (self.spec.task, sample.target) {
            (Task::Classification { num_classes }, Target::Class(c)) => {
                if c >= num_classes {
                    return Err(Error::IndexOutOfRange {
                        what: "class label",
                        index: c,
                        len: num_classes,
                    });
                }
                let lp = tape.log_softmax_rows(out);
                tape.nll_loss(lp, &[c])?
            }
            (Task::Regression, Target::Value(y)) => {
                let t = tape.constant(crate::tensor::Tensor::scalar(y));
                tape.mse_loss(out, t)?
            }
            _ => return Err(invalid("target type does not match the task")),
        };
        Ok((out, loss))
    }

    /// Flow-attention or DAG encoder access for analysis tools.
    pub fn dag_encoder(&self) -> Option<&DagEncoder> {
        match &self.body {
            Body::Dag(e) => Some(e),
            Body::Gnn(_) => None,
        }
    }

    pub fn gnn_layers(&self) -> Option<&[MpLayerParams]> {
        match &self.body {
            Body::Gnn(l) => Some(l),
            Body::Dag(_) => None,
        }
    }
}
