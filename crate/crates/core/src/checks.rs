//! Finite-difference gradient checks on fixed instances of every layer and
//! model type.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{mp_layer, MpLayerParams, NormMode, ScoringKind};
use crate::dag::{random_encoder, DagEncoderConfig, DagModelKind};
use crate::error::Result;
use crate::graph::random::random_features;
use crate::graph::{topo_sort, Graph};
use crate::tensor::{grad_check_store, GradCheckReport, ParamStore, Real, Tensor};
use crate::training::{Architecture, Head, Model, ModelSpec, Sample, Target, Task};

/// Largest accepted relative error.
pub const GRADCHECK_TOLERANCE: Real = 1e-5;

pub const SCORING_KINDS: [ScoringKind; 3] = [ScoringKind::Gat, ScoringKind::Gatv2, ScoringKind::Tc];
pub const NORM_MODES: [NormMode; 2] = [NormMode::Standard, NormMode::Flow];
pub const DAG_KINDS: [DagModelKind; 3] = [DagModelKind::Dagnn, DagModelKind::Dvae, DagModelKind::Flowdagnn];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub report: GradCheckReport,
}

impl GradCheckEntry {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mode_name(mode: NormMode) -> &'static str {
    match mode {
        NormMode::Standard => "standard",
        NormMode::Flow => "flow",
    }
}

/// One attention layer with an MSE loss on a complete 6-node digraph, where
/// every softmax segment holds several edges.
pub fn layer_check(kind: ScoringKind, mode: NormMode, eps: Real) -> Result<GradCheckEntry> {
    let n = 6;
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut r = rng(0);
    let g = Graph::from_edges(n, edges, random_features(&mut r, n, 3))?;
    let mut store = ParamStore::new();
    let p = MpLayerParams::new(kind, &mut store, "l", 3, 3, &mut r)?;
    let target = random_features(&mut r, n, 3);
    let report = grad_check_store(
        |t, s| {
            let h = t.constant(g.features().clone());
            let out = mp_layer(t, s, &g, h, &p, mode)?;
            let tv = t.constant(target.clone());
            t.mse_loss(out.output, tv)
        },
        &store,
        eps,
    )?;
    Ok(GradCheckEntry {
        name: format!("layer {kind:?}/{}", mode_name(mode)).to_lowercase(),
        report,
    })
}

/// Two-layer GAT models with an MLP head and NLL loss on a 4-node DAG, in
/// both normalization modes. The flow variant is FlowGAT.
pub fn gat_model_checks(eps: Real) -> Result<Vec<GradCheckEntry>> {
    let mut r = rng(13);
    let x = random_features(&mut r, 4, 2);
    let g = Graph::from_edges(4, vec![(0, 1), (0, 2), (1, 3), (2, 3), (0, 3)], x)?;
    let sample = Sample::new(g, Target::Class(1));
    let mut out = Vec::new();
    for mode in NORM_MODES {
        let spec = ModelSpec {
            architecture: Architecture::Gnn {
                scoring: ScoringKind::Gat,
                mode,
                hidden: 4,
                layers: 2,
            },
            input_dim: 2,
            task: Task::Classification { num_classes: 2 },
            head: Head::Mlp { hidden: 8 },
        };
        let mut store = ParamStore::new();
        let model = Model::new(spec, &mut store, &mut r)?;
        let report = grad_check_store(
            |t, s| Ok(model.loss(t, s, &sample, 0.0, false, &mut rng(0))?.1),
            &store,
            eps,
        )?;
        let name = match mode {
            NormMode::Standard => "model gat",
            NormMode::Flow => "model flowgat",
        };
        out.push(GradCheckEntry {
            name: name.into(),
            report,
        });
    }
    Ok(out)
}

/// A two-layer DAG encoder including its readout, with an MSE loss against
/// a target near the embedding so that rounding in the loss value stays
/// below the size of small gradient coordinates.
pub fn encoder_check(kind: DagModelKind, bidirectional: bool, eps: Real) -> Result<GradCheckEntry> {
    let x = random_features(&mut rng(16), 6, 2);
    let g = Graph::from_edges(
        6,
        vec![(0, 2), (1, 2), (0, 3), (2, 4), (3, 4), (2, 5), (3, 5), (1, 5)],
        x,
    )?;
    let d = topo_sort(&g)?;
    let mut r = rng(0);
    let config = DagEncoderConfig {
        kind,
        input_dim: 2,
        hidden: 3,
        layers: 2,
        bidirectional,
    };
    let (enc, store) = random_encoder(config, &mut r)?;
    let base = enc.embed_graph(&store, &d)?;
    let noise = random_features(&mut r, 1, base.len());
    let target = Tensor::row(base.iter().zip(noise.data()).map(|(b, z)| b + 0.1 * z).collect());
    let report = grad_check_store(
        |t, s| {
            let e = enc.encode(t, s, &d)?;
            let tv = t.constant(target.clone());
            t.mse_loss(e, tv)
        },
        &store,
        eps,
    )?;
    let suffix = if bidirectional { "/bidirectional" } else { "" };
    Ok(GradCheckEntry {
        name: format!("encoder {kind:?}{suffix}").to_lowercase(),
        report,
    })
}

/// Every layer type in both modes, both GAT models, and every DAG encoder
/// with and without the bidirectional readout.
pub fn gradcheck_suite(eps: Real) -> Result<Vec<GradCheckEntry>> {
    let layers: Vec<(ScoringKind, NormMode)> = SCORING_KINDS
        .iter()
        .flat_map(|&k| NORM_MODES.iter().map(move |&m| (k, m)))
        .collect();
    let encoders: Vec<(DagModelKind, bool)> = DAG_KINDS.iter().flat_map(|&k| [(k, false), (k, true)]).collect();
    let mut out: Vec<GradCheckEntry> = layers
        .par_iter()
        .map(|&(k, m)| layer_check(k, m, eps))
        .collect::<Result<_>>()?;
    out.extend(gat_model_checks(eps)?);
    out.extend(
        encoders
            .par_iter()
            .map(|&(k, b)| encoder_check(k, b, eps))
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(out)
}
