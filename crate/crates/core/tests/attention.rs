//! Oracles and tolerances here assume double precision.
#![cfg(not(feature = "f32"))]

use flowgnn::attention::{
    attention_weights, mp_layer, normalize_flow, normalize_standard, score_edges, EdgeWeights, MessageMap,
    MpLayerParams, NormMode, ScoringKind, ScoringParams, Update,
};
use flowgnn::graph::random::{random_dag, random_features};
use flowgnn::graph::Graph;
use flowgnn::tensor::{grad_check_store, init, ParamStore, Real, Tape, Tensor, DEFAULT_EPS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KINDS: [ScoringKind; 3] = [ScoringKind::Gat, ScoringKind::Gatv2, ScoringKind::Tc];
const MODES: [NormMode; 2] = [NormMode::Standard, NormMode::Flow];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn graph(n: usize, edges: &[(usize, usize)], feats: Tensor) -> Graph {
    Graph::from_edges(n, edges.to_vec(), feats).unwrap()
}

fn eval_scores(store: &ParamStore, g: &Graph, p: &ScoringParams) -> Vec<Real> {
    let mut t = Tape::new();
    let h = t.constant(g.features().clone());
    let e = score_edges(&mut t, store, g, h, p).unwrap();
    t.value(e).data().to_vec()
}

fn leaky(x: f64, s: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        s * x
    }
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|r| (0..w.cols()).map(|c| w.get(r, c) * x[c]).sum())
        .collect()
}

#[test]
fn gat_with_zero_attention_vector() {
    let mut store = ParamStore::new();
    let p = ScoringParams::new(ScoringKind::Gat, &mut store, "s", 2, 3, &mut rng(1)).unwrap();
    let ScoringParams::Gat { a, .. } = p else {
        unreachable!()
    };
    *store.get_mut(a) = Tensor::zeros(1, 6);
    let g = graph(3, &[(0, 1), (1, 2), (0, 2)], random_features(&mut rng(2), 3, 2));
    assert_eq!(eval_scores(&store, &g, &p), vec![0.0; 3]);
}

#[test]
fn tc_unit_vectors() {
    let mut store = ParamStore::new();
    let p = ScoringParams::new(ScoringKind::Tc, &mut store, "s", 1, 1, &mut rng(1)).unwrap();
    let ScoringParams::Tc { wq, wk, bq, bk } = p else {
        unreachable!()
    };
    *store.get_mut(wq) = Tensor::identity(1);
    *store.get_mut(wk) = Tensor::identity(1);
    *store.get_mut(bq) = Tensor::zeros(1, 1);
    *store.get_mut(bk) = Tensor::zeros(1, 1);
    let g = graph(2, &[(0, 1)], Tensor::column(vec![1.0, 1.0]));
    assert_eq!(eval_scores(&store, &g, &p), vec![1.0]);
}

#[test]
fn gatv2_matches_oracle_on_chain() {
    let mut store = ParamStore::new();
    let p = ScoringParams::new(ScoringKind::Gatv2, &mut store, "s", 2, 3, &mut rng(4)).unwrap();
    let ScoringParams::Gatv2 { w, a, slope } = p else {
        unreachable!()
    };
    let x = random_features(&mut rng(5), 3, 2);
    let g = graph(3, &[(0, 1), (1, 2)], x.clone());
    let got = eval_scores(&store, &g, &p);
    for (e, &(j, i)) in g.edges().iter().enumerate() {
        let cat: Vec<f64> = x.row_slice(i).iter().chain(x.row_slice(j)).copied().collect();
        let z = matvec(store.get(w), &cat);
        let want: f64 = z
            .iter()
            .zip(store.get(a).data())
            .map(|(zk, ak)| ak * leaky(*zk, slope))
            .sum();
        assert!((got[e] - want).abs() < 1e-14);
    }
}

#[test]
fn gat_and_tc_match_oracles() {
    let x = random_features(&mut rng(8), 4, 3);
    let g = graph(4, &[(0, 1), (2, 1), (1, 3), (0, 3)], x.clone());
    let mut store = ParamStore::new();
    let gat = ScoringParams::new(ScoringKind::Gat, &mut store, "g", 3, 2, &mut rng(9)).unwrap();
    let tc = ScoringParams::new(ScoringKind::Tc, &mut store, "t", 3, 4, &mut rng(10)).unwrap();
    let (ScoringParams::Gat { w, a, slope }, ScoringParams::Tc { wq, wk, bq, bk }) = (&gat, &tc) else {
        unreachable!()
    };
    let sg = eval_scores(&store, &g, &gat);
    let st = eval_scores(&store, &g, &tc);
    for (e, &(j, i)) in g.edges().iter().enumerate() {
        let wi = matvec(store.get(*w), x.row_slice(i));
        let wj = matvec(store.get(*w), x.row_slice(j));
        let av = store.get(*a).data();
        let z: f64 = wi.iter().chain(&wj).zip(av).map(|(u, v)| u * v).sum();
        assert!((sg[e] - leaky(z, *slope)).abs() < 1e-14);

        let q: Vec<f64> = matvec(store.get(*wq), x.row_slice(i))
            .iter()
            .zip(store.get(*bq).data())
            .map(|(u, b)| u + b)
            .collect();
        let k: Vec<f64> = matvec(store.get(*wk), x.row_slice(j))
            .iter()
            .zip(store.get(*bk).data())
            .map(|(u, b)| u + b)
            .collect();
        let want = q.iter().zip(&k).map(|(u, v)| u * v).sum::<f64>() / 2.0;
        assert!((st[e] - want).abs() < 1e-14);
    }
}

#[test]
fn normalization_examples() {
    let x = Tensor::zeros(3, 1);
    let single = graph(2, &[(0, 1)], Tensor::zeros(2, 1));
    assert_eq!(normalize_standard(&single, &[3.0]).unwrap().values, vec![1.0]);
    assert_eq!(normalize_flow(&single, &[3.0]).unwrap().values, vec![1.0]);

    let into = graph(3, &[(0, 2), (1, 2)], x.clone());
    assert_eq!(normalize_standard(&into, &[0.4, 0.4]).unwrap().values, vec![0.5, 0.5]);
    let w = normalize_standard(&into, &[1.0, 2.0]).unwrap();
    let oracle = [1.0 / (1.0 + 1f64.exp()), 1f64.exp() / (1.0 + 1f64.exp())];
    assert!((w.values[0] - oracle[0]).abs() < 1e-15 && (w.values[1] - oracle[1]).abs() < 1e-15);
    assert!((w.values[0] - 0.268941).abs() < 1e-6 && (w.values[1] - 0.731059).abs() < 1e-6);
    // flow mode on the same graph: each sender has one outgoing edge
    assert_eq!(normalize_flow(&into, &[1.0, 2.0]).unwrap().values, vec![1.0, 1.0]);

    let out = graph(3, &[(0, 1), (0, 2)], x);
    assert_eq!(normalize_flow(&out, &[0.0, 0.0]).unwrap().values, vec![0.5, 0.5]);
    let w = normalize_flow(&out, &[1.0, 2.0]).unwrap();
    assert!((w.values[0] - oracle[0]).abs() < 1e-15 && (w.values[1] - oracle[1]).abs() < 1e-15);
    assert!(normalize_flow(&out, &[1.0]).is_err());
}

#[test]
fn two_node_identity_layer() {
    let mut s2 = ParamStore::new();
    let scoring = ScoringParams::new(ScoringKind::Gat, &mut s2, "s", 2, 2, &mut rng(0)).unwrap();
    let p = MpLayerParams {
        scoring,
        f: MessageMap::Identity,
        phi: Update::Identity,
    };
    let g = graph(
        2,
        &[(0, 1)],
        Tensor::from_rows(&[vec![0.3, -0.4], vec![2.0, 5.0]], 2).unwrap(),
    );
    let mut t = Tape::new();
    let h = t.constant(g.features().clone());
    let out = mp_layer(&mut t, &s2, &g, h, &p, NormMode::Standard).unwrap();
    assert_eq!(t.value(out.output).data(), &[0.0, 0.0, 0.3, -0.4]);
}

/// Receiver 0 fed by `k` copies of each sender feature. With `sink`, every
/// sender also feeds node 1, so senders have two outgoing edges.
fn multiset_graph(senders: &[Vec<Real>], k: usize, sink: bool) -> Graph {
    let dim = senders[0].len();
    let mut rows = vec![vec![0.5; dim], vec![-0.25; dim]];
    let mut edges = Vec::new();
    for s in senders {
        for _ in 0..k {
            let v = rows.len();
            rows.push(s.clone());
            edges.push((v, 0));
            if sink {
                edges.push((v, 1));
            }
        }
    }
    let n = rows.len();
    graph(n, &edges, Tensor::from_rows(&rows, dim).unwrap())
}

fn layer_row(store: &ParamStore, p: &MpLayerParams, g: &Graph, mode: NormMode, row: usize) -> (Vec<Real>, Vec<Real>) {
    let mut t = Tape::new();
    let h = t.constant(g.features().clone());
    let out = mp_layer(&mut t, store, g, h, p, mode).unwrap();
    (
        t.value(out.output).row_slice(row).to_vec(),
        t.value(out.message).row_slice(row).to_vec(),
    )
}

#[test]
fn standard_attention_cannot_count() {
    for kind in KINDS {
        let mut store = ParamStore::new();
        let p = MpLayerParams::new(kind, &mut store, "l", 3, 4, &mut rng(21)).unwrap();
        let senders = vec![vec![1.0, 0.0, 0.5], vec![-0.3, 0.8, 0.1]];
        let (base, _) = layer_row(&store, &p, &multiset_graph(&senders, 1, true), NormMode::Standard, 0);
        for k in [2, 3, 5] {
            let (scaled, _) = layer_row(&store, &p, &multiset_graph(&senders, k, true), NormMode::Standard, 0);
            let diff = base.iter().zip(&scaled).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-9, "{kind:?} k={k}: {diff}");
        }
    }
}

#[test]
fn flow_attention_counts() {
    for kind in KINDS {
        let mut store = ParamStore::new();
        let mut p = MpLayerParams::new(kind, &mut store, "l", 3, 3, &mut rng(22)).unwrap();
        let phi_w = store.add("phi", init::glorot(&mut rng(23), 3, 3));
        let phi_b = store.add("phi_b", init::uniform(&mut rng(24), 1, 3, 0.5));
        p.phi = Update::Linear { w: phi_w, b: phi_b };
        let senders = vec![vec![1.0, 0.0, 0.5], vec![-0.3, 0.8, 0.1]];
        let (out1, msg1) = layer_row(&store, &p, &multiset_graph(&senders, 1, true), NormMode::Flow, 0);
        for k in [2, 3, 5] {
            let (outk, msgk) = layer_row(&store, &p, &multiset_graph(&senders, k, true), NormMode::Flow, 0);
            for (a, b) in msg1.iter().zip(&msgk) {
                assert!(((b / a) - k as f64).abs() / (k as f64) < 1e-9);
            }
            let diff = out1.iter().zip(&outk).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff > 1e-6);
        }
    }
}

fn weights_of(store: &ParamStore, g: &Graph, p: &ScoringParams, mode: NormMode) -> EdgeWeights {
    let mut t = Tape::new();
    let h = t.constant(g.features().clone());
    let w = attention_weights(&mut t, store, g, h, p, mode).unwrap();
    EdgeWeights {
        values: t.value(w).data().to_vec(),
        mode,
    }
}

#[test]
fn layer_weights_equal_normalized_scores() {
    let mut r = rng(30);
    for kind in KINDS {
        let mut store = ParamStore::new();
        let p = ScoringParams::new(kind, &mut store, "s", 3, 4, &mut r).unwrap();
        let g = random_dag(&mut r, 12, 0.4, 3).unwrap().into_graph();
        let e = eval_scores(&store, &g, &p);
        for mode in MODES {
            let direct = match mode {
                NormMode::Standard => normalize_standard(&g, &e).unwrap(),
                NormMode::Flow => normalize_flow(&g, &e).unwrap(),
            };
            let layer = weights_of(&store, &g, &p, mode);
            for (a, b) in direct.values.iter().zip(&layer.values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn layer_gradients() {
    // Complete digraph: every segment holds several edges, so no parameter
    // has a vanishing gradient.
    let n = 6;
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    for kind in KINDS {
        for mode in MODES {
            let mut r = rng(0);
            let x = random_features(&mut r, n, 3);
            let g = graph(n, &edges, x);
            let mut store = ParamStore::new();
            let p = MpLayerParams::new(kind, &mut store, "l", 3, 3, &mut r).unwrap();
            let target = random_features(&mut r, n, 3);
            let rep = grad_check_store(
                |t, s| {
                    let h = t.constant(g.features().clone());
                    let out = mp_layer(t, s, &g, h, &p, mode)?;
                    let tv = t.constant(target.clone());
                    t.mse_loss(out.output, tv)
                },
                &store,
                DEFAULT_EPS,
            )
            .unwrap();
            assert!(rep.max_rel_error < 1e-5, "{kind:?} {mode:?}: {rep:?}");
        }
    }
}

#[test]
fn permutation_equivariance() {
    let mut r = rng(50);
    for kind in KINDS {
        for mode in MODES {
            let mut store = ParamStore::new();
            let p = MpLayerParams::new(kind, &mut store, "l", 2, 3, &mut r).unwrap();
            let g = random_dag(&mut r, 9, 0.4, 2)
                .unwrap()
                .into_graph()
                .symmetrized()
                .unwrap();
            let mut perm: Vec<usize> = (0..9).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
            let pg = g.permute(&perm).unwrap();
            let run = |g: &Graph| {
                let mut t = Tape::new();
                let h = t.constant(g.features().clone());
                let out = mp_layer(&mut t, &store, g, h, &p, mode).unwrap();
                t.value(out.output).clone()
            };
            let (a, b) = (run(&g), run(&pg));
            for (v, &pv) in perm.iter().enumerate() {
                for (x, y) in a.row_slice(v).iter().zip(b.row_slice(pv)) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn edge_weight_invariants(seed in any::<u64>(), n in 1usize..15, kind in 0usize..3) {
        let mut r = rng(seed);
        let g = random_dag(&mut r, n, 0.35, 2).unwrap().into_graph().symmetrized().unwrap();
        let mut store = ParamStore::new();
        let p = ScoringParams::new(KINDS[kind], &mut store, "s", 2, 3, &mut r).unwrap();
        for mode in MODES {
            let w = weights_of(&store, &g, &p, mode);
            prop_assert!(w.normalization_error(&g).unwrap() <= 1e-9);
        }
    }
}
