//! Oracles and tolerances here assume double precision.
#![cfg(not(feature = "f32"))]

use flowgnn::attention::{NormMode, ScoringKind};
use flowgnn::checks::gat_model_checks;
use flowgnn::dag::DagModelKind;
use flowgnn::flow::{default_injections, extract_flow, kirchhoff_residual};
use flowgnn::graph::random::{random_dag, random_features};
use flowgnn::graph::Graph;
use flowgnn::tensor::{ParamStore, Real, Tape, Tensor, DEFAULT_EPS};
use flowgnn::training::{
    balanced_accuracy, evaluate, macro_f1, pearson_r, rmse, train, Adam, Architecture, Checkpoint, Confusion,
    Direction, EarlyStopping, Head, LossKind, Model, ModelSpec, OptimizerKind, PlateauScheduler, Sample, Scheduler,
    StopDecision, Target, Task, TrainConfig, BETA1, BETA2, EPSILON,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- losses ----

#[test]
fn nll_uniform_is_ln4() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::new(2, 4, vec![0.0; 8]).unwrap());
    let lp = t.log_softmax_rows(x);
    let l = t.nll_loss(lp, &[0, 3]).unwrap();
    assert!((t.value(l).data()[0] - (4.0 as Real).ln()).abs() < 1e-15);
}

#[test]
fn nll_matches_hand_sum() {
    let lp = vec![(-0.5 as Real), -1.2, -2.0, -0.1, -3.0, -0.7];
    let mut t = Tape::new();
    let x = t.constant(Tensor::new(2, 3, lp.clone()).unwrap());
    let l = t.nll_loss(x, &[1, 2]).unwrap();
    assert!((t.value(l).data()[0] - (1.2 + 0.7) / 2.0).abs() < 1e-15);
    assert!(t.nll_loss(x, &[0, 3]).is_err());
}

#[test]
fn mse_cases() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::row(vec![1.0, 2.0, 3.0]));
    let b = t.constant(Tensor::row(vec![0.0, 1.0, 2.0]));
    let c = t.constant(Tensor::row(vec![0.5, 4.0, 3.0]));
    let short = t.constant(Tensor::row(vec![1.0, 2.0]));
    let same = t.mse_loss(a, a).unwrap();
    let ones = t.mse_loss(a, b).unwrap();
    let hand = t.mse_loss(a, c).unwrap();
    assert_eq!(t.value(same).data()[0], 0.0);
    assert_eq!(t.value(ones).data()[0], 1.0);
    assert!((t.value(hand).data()[0] - (0.25 + 4.0) / 3.0).abs() < 1e-15);
    assert!(t.mse_loss(a, short).is_err());
}

// ---- optimizer ----

fn single(value: Real) -> ParamStore {
    let mut s = ParamStore::new();
    s.add("p", Tensor::scalar(value));
    s
}

/// Straight-line scalar Adam.
fn adam_oracle(p0: f64, grads: &[f64], lr: f64, wd: f64, decoupled: bool) -> f64 {
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    for (t, &g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        if decoupled {
            p -= lr * wd * p;
        }
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t));
        let vh = v / (1.0 - 0.999f64.powi(t));
        p -= lr * mh / (vh.sqrt() + 1e-8);
    }
    p
}

#[test]
fn adam_constants() {
    assert_eq!((BETA1, BETA2, EPSILON), (0.9, 0.999, 1e-8));
}

#[test]
fn adam_first_step() {
    let mut s = single(0.0);
    let mut opt = Adam::new(OptimizerKind::Adam, 0.0, &s);
    opt.step(&mut s, &[Tensor::scalar(1.0)], 1e-3).unwrap();
    let expected = -1e-3 / (1.0 + 1e-8);
    assert!((s.flatten()[0] - expected).abs() < 1e-18);
    assert_eq!(opt.steps(), 1);
}

#[test]
fn adam_zero_grad_is_identity() {
    let mut s = single(0.7);
    let mut opt = Adam::new(OptimizerKind::Adam, 0.5, &s);
    for _ in 0..5 {
        opt.step(&mut s, &[Tensor::scalar(0.0)], 1e-2).unwrap();
    }
    assert_eq!(s.flatten()[0], 0.7);
}

#[test]
fn adamw_shrinks_without_gradient() {
    let mut s = single(2.0);
    let mut opt = Adam::new(OptimizerKind::Adamw, 0.01, &s);
    opt.step(&mut s, &[Tensor::scalar(0.0)], 1e-3).unwrap();
    assert_eq!(s.flatten()[0], 2.0 * (1.0 - 1e-3 * 0.01));
}

#[test]
fn adam_rejects_bad_gradients() {
    let mut s = single(1.0);
    let mut opt = Adam::new(OptimizerKind::Adam, 0.0, &s);
    assert!(opt.step(&mut s, &[Tensor::scalar(Real::NAN)], 1e-3).is_err());
    assert!(opt.step(&mut s, &[Tensor::row(vec![1.0, 2.0])], 1e-3).is_err());
    assert!(opt.step(&mut s, &[], 1e-3).is_err());
    assert_eq!(s.flatten()[0], 1.0);
    assert_eq!(opt.steps(), 0);
}

#[cfg(not(feature = "f32"))]
#[test]
fn adam_matches_oracle_over_100_steps() {
    let mut r = rng(3);
    for (kind, wd) in [(OptimizerKind::Adam, 0.0), (OptimizerKind::Adamw, 0.01)] {
        for _ in 0..10 {
            let p0: f64 = r.random_range(-2.0..2.0);
            let grads: Vec<f64> = (0..100).map(|_| r.random_range(-3.0..3.0)).collect();
            let mut s = single(p0);
            let mut opt = Adam::new(kind, wd, &s);
            for &g in &grads {
                opt.step(&mut s, &[Tensor::scalar(g)], 1e-2).unwrap();
            }
            let expected = adam_oracle(p0, &grads, 1e-2, wd, kind == OptimizerKind::Adamw);
            assert!((s.flatten()[0] - expected).abs() < 1e-12, "{kind:?}");
        }
    }
}

// ---- scheduler and early stopping ----

#[test]
fn plateau_examples() {
    let mut s = PlateauScheduler::new(1e-3, 5.0, 10, Direction::Maximize).unwrap();
    for i in 0..30 {
        assert_eq!(s.step(i as Real * 0.01), 1e-3);
    }

    let mut s = PlateauScheduler::new(1e-3, 5.0, 10, Direction::Maximize).unwrap();
    s.step(0.5);
    for _ in 0..9 {
        assert_eq!(s.step(0.5), 1e-3);
    }
    assert_eq!(s.step(0.5), 1e-3 / 5.0);

    let mut s = PlateauScheduler::new(1e-3, 5.0, 10, Direction::Maximize).unwrap();
    s.step(0.5);
    for _ in 0..9 {
        s.step(0.5);
    }
    assert_eq!(s.step(0.6), 1e-3);
    for _ in 0..9 {
        assert_eq!(s.step(0.6), 1e-3);
    }

    let mut s = PlateauScheduler::new(1.0, 2.0, 3, Direction::Minimize).unwrap();
    s.step(1.0);
    for _ in 0..3 {
        s.step(1.0 - 1e-9);
    }
    assert_eq!(s.lr(), 0.5, "sub-epsilon changes do not count");

    assert!(PlateauScheduler::new(1.0, 1.0, 3, Direction::Minimize).is_err());
    assert!(PlateauScheduler::new(1.0, 2.0, 0, Direction::Minimize).is_err());
}

#[test]
fn early_stopping_examples() {
    let mut e = EarlyStopping::new(20, Direction::Maximize).unwrap();
    for i in 0..100 {
        assert_eq!(e.update(i, i as Real), StopDecision::Improved);
    }

    let mut e = EarlyStopping::new(20, Direction::Maximize).unwrap();
    e.update(0, 1.0);
    for i in 1..20 {
        assert_eq!(e.update(i, 1.0), StopDecision::Continue);
    }
    assert_eq!(e.update(20, 1.0), StopDecision::Stop);
    assert_eq!(e.best_epoch(), Some(0));

    let mut e = EarlyStopping::new(20, Direction::Minimize).unwrap();
    e.update(0, 1.0);
    for i in 1..19 {
        e.update(i, 1.0);
    }
    assert_eq!(e.update(19, 0.5), StopDecision::Improved);
    for i in 20..39 {
        assert_eq!(e.update(i, 0.5), StopDecision::Continue);
    }
    assert_eq!(e.best(), Some(0.5));
    assert!(EarlyStopping::new(0, Direction::Minimize).is_err());
}

proptest! {
    #[test]
    fn scheduler_never_raises_lr(metrics in prop::collection::vec(-1.0f64..1.0, 1..80)) {
        let mut s = PlateauScheduler::new(0.1, 3.0, 2, Direction::Minimize).unwrap();
        let mut last = s.lr();
        for m in metrics {
            let lr = s.step(m as Real);
            prop_assert!(lr <= last);
            last = lr;
        }
    }
}

// ---- metrics ----

#[test]
fn binary_balanced_accuracy_example() {
    assert_eq!(balanced_accuracy(&Confusion::binary(1, 1, 1, 1)).unwrap(), 0.5);
}

#[test]
fn metric_edge_cases() {
    let perfect = Confusion::from_predictions(3, &[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap();
    assert_eq!(balanced_accuracy(&perfect).unwrap(), 1.0);
    assert_eq!(macro_f1(&perfect).unwrap(), 1.0);
    let majority = Confusion::from_predictions(2, &[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
    assert_eq!(balanced_accuracy(&majority).unwrap(), 0.5);
    assert!(balanced_accuracy(&Confusion::new(2)).is_err());

    let y = [1.0, -2.0, 0.5, 0.5];
    assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    assert!((pearson_r(&y, &y).unwrap() - 1.0).abs() < 1e-15);
    let z = [1.0, -1.0, 2.0, -2.0];
    let nz: Vec<Real> = z.iter().map(|v| -v).collect();
    assert!((pearson_r(&nz, &z).unwrap() + 1.0).abs() < 1e-15);
    assert!(pearson_r(&[1.0, 1.0], &[0.0, 2.0]).is_err());
    assert!(rmse(&[], &[]).is_err());
    assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn four_point_regression_case() {
    let p = [1.0, 2.0, 3.0, 4.0];
    let t = [1.5, 1.5, 3.5, 3.5];
    assert!((rmse(&p, &t).unwrap() - 0.5).abs() < 1e-15);
    // deviations (-1.5, -0.5, 0.5, 1.5) and (-1, -1, 1, 1): sxy = 4, sxx = 5, syy = 4
    assert!((pearson_r(&p, &t).unwrap() - 4.0 / (5.0 as Real * 4.0).sqrt()).abs() < 1e-15);
}

/// Oracles computed from raw label lists, not from the confusion matrix.
fn oracle_balanced(c: usize, truth: &[usize], pred: &[usize]) -> f64 {
    let mut recalls = Vec::new();
    for k in 0..c {
        let support = truth.iter().filter(|&&t| t == k).count();
        if support > 0 {
            let hit = truth.iter().zip(pred).filter(|(&t, &p)| t == k && p == k).count();
            recalls.push(hit as f64 / support as f64);
        }
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

fn oracle_f1(c: usize, truth: &[usize], pred: &[usize]) -> f64 {
    let mut total = 0.0;
    for k in 0..c {
        let tp = truth.iter().zip(pred).filter(|(&t, &p)| t == k && p == k).count() as f64;
        let fp = truth.iter().zip(pred).filter(|(&t, &p)| t != k && p == k).count() as f64;
        let fn_ = truth.iter().zip(pred).filter(|(&t, &p)| t == k && p != k).count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        total += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    total / c as f64
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[cfg(not(feature = "f32"))]
#[test]
fn metrics_match_oracles_on_random_sets() {
    let mut r = rng(9);
    for _ in 0..100 {
        let c = r.random_range(2..6);
        let n = r.random_range(1..60);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let conf = Confusion::from_predictions(c, &truth, &pred).unwrap();
        assert!((balanced_accuracy(&conf).unwrap() - oracle_balanced(c, &truth, &pred)).abs() < 1e-12);
        assert!((macro_f1(&conf).unwrap() - oracle_f1(c, &truth, &pred)).abs() < 1e-12);

        let m = r.random_range(2..60);
        let x: Vec<f64> = (0..m).map(|_| r.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + r.random_range(-2.0..2.0)).collect();
        let mse: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m as f64;
        assert!((rmse(&x, &y).unwrap() - mse.sqrt()).abs() < 1e-12);
        assert!((pearson_r(&x, &y).unwrap() - oracle_pearson(&x, &y)).abs() < 1e-12);
    }
}

// ---- models and training ----

/// Directed 5-node chains whose label is the sign of the first feature of the
/// head node.
fn toy_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let mut x = random_features(&mut r, 5, 2);
            let label = i % 2;
            let v = 1.0 + r.random::<f64>() as Real;
            x.set(0, 0, if label == 1 { v } else { -v });
            let g = Graph::from_edges(5, vec![(0, 1), (1, 2), (2, 3), (3, 4)], x).unwrap();
            Sample::new(g, Target::Class(label))
        })
        .collect()
}

fn flowgat_spec(input_dim: usize, task: Task) -> ModelSpec {
    ModelSpec {
        architecture: Architecture::Gnn {
            scoring: ScoringKind::Gat,
            mode: NormMode::Flow,
            hidden: 8,
            layers: 2,
        },
        input_dim,
        task,
        head: Head::Mlp { hidden: 8 },
    }
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        batch_size: 8,
        max_epochs: 40,
        early_stop_patience: 40,
        dropout: 0.0,
        ..TrainConfig::default()
    }
}

#[test]
fn flowgat_learns_toy_task() {
    let data = toy_samples(64, 1);
    let (train_set, val_set) = data.split_at(48);
    let mut store = ParamStore::new();
    let model = Model::new(
        flowgat_spec(2, Task::Classification { num_classes: 2 }),
        &mut store,
        &mut rng(0),
    )
    .unwrap();
    let out = train(&model, store, train_set, val_set, &quick_config()).unwrap();
    let first = out.history[0].train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < first / 2.0, "{first} -> {last}");
    assert!(out.report.balanced_accuracy.unwrap() >= 0.75);
    assert_eq!(out.history[0].epoch, 0);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = toy_samples(20, 2);
    let mut store = ParamStore::new();
    let model = Model::new(
        flowgat_spec(2, Task::Classification { num_classes: 2 }),
        &mut store,
        &mut rng(1),
    )
    .unwrap();
    let config = TrainConfig {
        lr: 0.0,
        max_epochs: 3,
        ..quick_config()
    };
    let out = train(&model, store.clone(), &data[..16], &data[16..], &config).unwrap();
    assert_eq!(out.store, store);
}

#[test]
fn training_is_deterministic() {
    let data = toy_samples(40, 3);
    let run = || {
        let mut store = ParamStore::new();
        let model = Model::new(
            flowgat_spec(2, Task::Classification { num_classes: 2 }),
            &mut store,
            &mut rng(5),
        )
        .unwrap();
        let config = TrainConfig {
            dropout: 0.3,
            max_epochs: 6,
            ..quick_config()
        };
        train(&model, store, &data[..32], &data[32..], &config).unwrap()
    };
    let (a, b) = (run(), run());
    let bits = |h: &[flowgnn::training::EpochRecord]| -> Vec<u64> {
        h.iter()
            .flat_map(|r| [r.train_loss, r.val_loss, r.val_metric, r.lr])
            .map(|v| (v as f64).to_bits())
            .collect()
    };
    assert_eq!(bits(&a.history), bits(&b.history));
    assert_eq!(a.store, b.store);
}

#[test]
fn best_epoch_parameters_are_returned() {
    let data = toy_samples(40, 4);
    let mut store = ParamStore::new();
    let model = Model::new(
        flowgat_spec(2, Task::Classification { num_classes: 2 }),
        &mut store,
        &mut rng(2),
    )
    .unwrap();
    let config = TrainConfig {
        max_epochs: 15,
        early_stop_patience: 3,
        ..quick_config()
    };
    let out = train(&model, store, &data[..30], &data[30..], &config).unwrap();
    let best = out.history[out.best_epoch].val_metric;
    assert!(out.history.iter().all(|r| r.val_metric <= best + 1e-8));
    let again = evaluate(&model, &out.store, &data[30..]).unwrap();
    assert_eq!(again, out.report);
    assert!(again.all_finite());
}

#[test]
fn train_config_validation_lists_every_problem() {
    let bad = TrainConfig {
        lr: -1.0,
        batch_size: 0,
        early_stop_patience: 0,
        scheduler: Scheduler::Plateau {
            factor: 0.5,
            patience: 0,
        },
        dropout: 1.0,
        ..TrainConfig::default()
    };
    let msg = bad.validate().unwrap_err().to_string();
    for needle in [
        "lr",
        "batch_size",
        "early_stop_patience",
        "factor",
        "scheduler patience",
        "dropout",
    ] {
        assert!(msg.contains(needle), "{msg}");
    }
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn loss_must_match_task() {
    let data = toy_samples(8, 5);
    let mut store = ParamStore::new();
    let model = Model::new(
        flowgat_spec(2, Task::Classification { num_classes: 2 }),
        &mut store,
        &mut rng(2),
    )
    .unwrap();
    let config = TrainConfig {
        loss: LossKind::Mse,
        ..quick_config()
    };
    assert!(train(&model, store, &data[..6], &data[6..], &config).is_err());
}

#[test]
fn regression_with_dag_model() {
    let mut r = rng(6);
    let samples: Vec<Sample> = (0..30)
        .map(|_| {
            let d = random_dag(&mut r, 6, 0.4, 3).unwrap();
            let y = d.graph().features().data().iter().sum::<Real>() / 6.0;
            Sample::new(d.into_graph(), Target::Value(y))
        })
        .collect();
    let spec = ModelSpec {
        architecture: Architecture::Dag {
            kind: DagModelKind::Flowdagnn,
            hidden: 6,
            layers: 1,
            bidirectional: false,
        },
        input_dim: 3,
        task: Task::Regression,
        head: Head::Linear,
    };
    let mut store = ParamStore::new();
    let model = Model::new(spec, &mut store, &mut rng(0)).unwrap();
    let config = TrainConfig {
        loss: LossKind::Mse,
        max_epochs: 30,
        ..quick_config()
    };
    let out = train(&model, store, &samples[..24], &samples[24..], &config).unwrap();
    assert!(out.report.rmse.is_some());
    assert!(out.history.last().unwrap().train_loss < out.history[0].train_loss);
}

#[test]
fn dag_model_rejects_cyclic_graph() {
    let g = Graph::from_edges(2, vec![(0, 1), (1, 0)], Tensor::zeros(2, 2)).unwrap();
    let s = Sample::new(g, Target::Class(0));
    assert!(s.dag.is_none());
    let spec = ModelSpec {
        architecture: Architecture::Dag {
            kind: DagModelKind::Dagnn,
            hidden: 4,
            layers: 1,
            bidirectional: false,
        },
        input_dim: 2,
        task: Task::Classification { num_classes: 2 },
        head: Head::Linear,
    };
    let mut store = ParamStore::new();
    let model = Model::new(spec, &mut store, &mut rng(0)).unwrap();
    assert!(evaluate(&model, &store, &[s]).is_err());
}

#[test]
fn model_spec_validation() {
    let mut spec = flowgat_spec(0, Task::Classification { num_classes: 1 });
    spec.head = Head::Mlp { hidden: 0 };
    let msg = spec.validate().unwrap_err().to_string();
    for needle in ["input_dim", "classes", "head"] {
        assert!(msg.contains(needle), "{msg}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let spec = flowgat_spec(2, Task::Classification { num_classes: 2 });
    let mut store = ParamStore::new();
    Model::new(spec.clone(), &mut store, &mut rng(11)).unwrap();
    let ck = Checkpoint::new(&spec, &store);
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ck);
    let (model, restored) = loaded.restore().unwrap();
    assert_eq!(restored, store);
    assert_eq!(model.spec, spec);

    let mut broken = ck.clone();
    broken.params[0].name = "other".into();
    assert!(broken.restore().is_err());
    let mut short = ck;
    short.params.pop();
    assert!(short.restore().is_err());
}

#[cfg(not(feature = "f32"))]
#[test]
fn gat_model_gradients() {
    for entry in gat_model_checks(DEFAULT_EPS).unwrap() {
        assert!(entry.passed(), "{entry:?}");
    }
}

#[test]
fn flow_weights_of_trained_models() {
    let mut r = rng(21);
    let d = random_dag(&mut r, 9, 0.4, 2).unwrap();
    let sample = Sample::new(d.graph().clone(), Target::Class(0));
    let mut store = ParamStore::new();
    let model = Model::new(
        flowgat_spec(2, Task::Classification { num_classes: 2 }),
        &mut store,
        &mut r,
    )
    .unwrap();
    let weights = model.flow_weights(&store, &sample).unwrap();
    assert_eq!(weights.len(), 2);
    for beta in &weights {
        assert!(beta.normalization_error(d.graph()).unwrap() < 1e-12);
        let psi0 = default_injections(d.graph(), beta).unwrap();
        let flow = extract_flow(&d, beta, &psi0).unwrap();
        assert!(kirchhoff_residual(d.graph(), &flow).unwrap().max_abs < 1e-12);
    }

    let mut spec = flowgat_spec(2, Task::Classification { num_classes: 2 });
    spec.architecture = Architecture::Gnn {
        scoring: ScoringKind::Gat,
        mode: NormMode::Standard,
        hidden: 4,
        layers: 1,
    };
    let mut store = ParamStore::new();
    let standard = Model::new(spec, &mut store, &mut r).unwrap();
    assert!(standard.flow_weights(&store, &sample).is_err());

    let spec = ModelSpec {
        architecture: Architecture::Dag {
            kind: DagModelKind::Flowdagnn,
            hidden: 4,
            layers: 3,
            bidirectional: false,
        },
        input_dim: 2,
        task: Task::Classification { num_classes: 2 },
        head: Head::Linear,
    };
    let mut store = ParamStore::new();
    let flowdagnn = Model::new(spec, &mut store, &mut r).unwrap();
    assert_eq!(flowdagnn.flow_weights(&store, &sample).unwrap().len(), 3);
}
