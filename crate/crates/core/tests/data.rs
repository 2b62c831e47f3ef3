//! Oracles and tolerances here assume double precision.
#![cfg(not(feature = "f32"))]

use flowgnn::attention::{EdgeWeights, NormMode};
use flowgnn::data::{
    cut_sizes, flow_oracle, gen_flow_classification, gen_pair_discrimination, load_records, manifest_path,
    save_records, split, Dataset, DatasetManifest, GraphRecord, Ratios, SplitStrategy, FLOW_FEATURE_DIM,
    PAIR_FEATURE_DIM, RESISTANCES,
};
use flowgnn::error::Error;
use flowgnn::expressivity::{certified_non_isomorphic, same_computation_tree};
use flowgnn::flow::{default_injections, extract_flow};
use flowgnn::graph::{topo_sort, Graph};
use flowgnn::tensor::{Real, Tensor};
use flowgnn::training::{Target, Task};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_record(r: &mut ChaCha8Rng, i: usize) -> GraphRecord {
    let n = r.random_range(1..8);
    let dim = 3;
    let nodes = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| r.random_range(-1e3..1e3) as Real * r.random::<f64>() as Real)
                .collect()
        })
        .collect();
    let edges = (0..r.random_range(0..2 * n))
        .map(|_| (r.random_range(0..n), r.random_range(0..n)))
        .collect();
    let label = if r.random_bool(0.5) {
        Target::Class(r.random_range(0..3))
    } else {
        Target::Value(r.random_range(-5.0..5.0) as Real / 3.0)
    };
    GraphRecord {
        id: format!("g{i}"),
        nodes,
        edges,
        directed: r.random_bool(0.5),
        sources: vec![0],
        targets: vec![n - 1],
        label,
        group: r.random_bool(0.3).then(|| format!("grp{}", i % 7)),
    }
}

fn class_record(i: usize, label: usize) -> GraphRecord {
    GraphRecord {
        id: format!("r{i}"),
        nodes: vec![vec![i as Real]],
        edges: vec![],
        directed: true,
        sources: vec![],
        targets: vec![],
        label: Target::Class(label),
        group: None,
    }
}

// ---- load / save ----

#[test]
fn empty_file_is_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.jsonl");
    std::fs::write(&p, "").unwrap();
    assert!(load_records(&p).unwrap().is_empty());
}

#[test]
fn single_record_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("one.jsonl");
    let rec = GraphRecord {
        id: "a".into(),
        nodes: vec![vec![1.0, 0.5], vec![-2.0, 0.1]],
        edges: vec![(0, 1)],
        directed: true,
        sources: vec![0],
        targets: vec![1],
        label: Target::Class(1),
        group: None,
    };
    save_records(&p, std::slice::from_ref(&rec)).unwrap();
    assert_eq!(load_records(&p).unwrap(), vec![rec]);
}

#[test]
fn thousand_records_round_trip_byte_equal() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let records: Vec<GraphRecord> = (0..1000).map(|i| random_record(&mut r, i)).collect();
    save_records(&a, &records).unwrap();
    let loaded = load_records(&a).unwrap();
    assert_eq!(loaded, records);
    save_records(&b, &loaded).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn parse_errors_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    let good = serde_json::to_string(&class_record(0, 0)).unwrap();
    std::fs::write(&p, format!("{good}\n\n{good}\n{{\"id\": 3}}\n")).unwrap();
    match load_records(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(matches!(
        load_records(&dir.path().join("missing.jsonl")),
        Err(Error::Io(_))
    ));
}

#[test]
fn dataset_validation() {
    let manifest = DatasetManifest {
        task: Task::Classification { num_classes: 2 },
        feature_dim: 1,
        ratios: Ratios::default(),
        seed: 0,
    };
    assert!(Dataset::new(manifest.clone(), vec![class_record(0, 1)]).is_ok());

    let mut wide = class_record(1, 0);
    wide.nodes.push(vec![1.0, 2.0]);
    assert!(Dataset::new(manifest.clone(), vec![wide]).is_err());

    let mut bad_edge = class_record(2, 0);
    bad_edge.edges.push((0, 5));
    assert!(Dataset::new(manifest.clone(), vec![bad_edge]).is_err());

    assert!(Dataset::new(manifest.clone(), vec![class_record(3, 2)]).is_err());

    let mut real = class_record(4, 0);
    real.label = Target::Value(0.5);
    assert!(Dataset::new(manifest.clone(), vec![real]).is_err());

    let bad_ratios = DatasetManifest {
        ratios: Ratios {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        },
        ..manifest
    };
    assert!(Dataset::new(bad_ratios, vec![]).is_err());
    assert!(Ratios::new(0.8, 0.1, 0.1).is_ok());
    assert!(Ratios::new(1.1, -0.1, 0.0).is_err());
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("flow.jsonl");
    let ds = gen_flow_classification(30, 12, 3).unwrap();
    ds.save(&p).unwrap();
    assert!(manifest_path(&p).ends_with("flow.manifest.json"));
    assert_eq!(Dataset::load(&p).unwrap(), ds);
}

#[test]
fn regression_labels_accept_integers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("reg.jsonl");
    let manifest = DatasetManifest {
        task: Task::Regression,
        feature_dim: 1,
        ratios: Ratios::default(),
        seed: 0,
    };
    save_records(&p, &[class_record(0, 3)]).unwrap();
    std::fs::write(manifest_path(&p), serde_json::to_string(&manifest).unwrap()).unwrap();
    let ds = Dataset::load(&p).unwrap();
    assert_eq!(ds.records[0].label, Target::Value(3.0));
}

#[test]
fn undirected_records_are_symmetrized() {
    let mut rec = class_record(0, 0);
    rec.nodes = vec![vec![0.0], vec![1.0], vec![2.0]];
    rec.edges = vec![(0, 1), (1, 2)];
    rec.directed = false;
    assert_eq!(rec.to_graph().unwrap().num_edges(), 4);
    rec.directed = true;
    assert_eq!(rec.to_graph().unwrap().num_edges(), 2);
}

proptest! {
    #[test]
    fn records_survive_json(seed in 0u64..10_000) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let rec = random_record(&mut r, seed as usize);
        let text = serde_json::to_string(&rec).unwrap();
        let back: GraphRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &rec);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}

// ---- split ----

#[test]
fn split_all_train() {
    let records: Vec<GraphRecord> = (0..10).map(|i| class_record(i, i % 2)).collect();
    let s = split(&records, &Ratios::new(1.0, 0.0, 0.0).unwrap(), 1, SplitStrategy::Random).unwrap();
    assert_eq!(s.train.len(), 10);
    assert!(s.val.is_empty() && s.test.is_empty());
}

#[test]
fn split_is_seeded() {
    let records: Vec<GraphRecord> = (0..50).map(|i| class_record(i, i % 3)).collect();
    let ratios = Ratios::default();
    for strategy in [SplitStrategy::Random, SplitStrategy::Stratified, SplitStrategy::Grouped] {
        let a = split(&records, &ratios, 7, strategy).unwrap();
        let b = split(&records, &ratios, 7, strategy).unwrap();
        let c = split(&records, &ratios, 8, strategy).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, c.train);
        let mut ids: Vec<String> = a
            .train
            .iter()
            .chain(&a.val)
            .chain(&a.test)
            .map(|r| r.id.clone())
            .collect();
        ids.sort();
        let mut all: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        all.sort();
        assert_eq!(ids, all, "{strategy:?} must partition the records");
    }
}

#[test]
fn split_sizes() {
    let records: Vec<GraphRecord> = (0..100).map(|i| class_record(i, 0)).collect();
    let s = split(&records, &Ratios::default(), 0, SplitStrategy::Random).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (85, 5, 10));
    assert!(split(&records[..2], &Ratios::default(), 0, SplitStrategy::Random).is_err());
    for n in 0..200 {
        let sizes = cut_sizes(n, &Ratios::default());
        assert_eq!(sizes.iter().sum::<usize>(), n);
    }
}

#[test]
fn stratified_split_matches_counting_oracle() {
    let counts = [100, 37, 12, 5];
    let mut records = Vec::new();
    for (c, &k) in counts.iter().enumerate() {
        for _ in 0..k {
            records.push(class_record(records.len(), c));
        }
    }
    let ratios = Ratios::new(0.7, 0.1, 0.2).unwrap();
    let s = split(&records, &ratios, 3, SplitStrategy::Stratified).unwrap();
    for (part, share) in [(&s.train, 0.7), (&s.val, 0.1), (&s.test, 0.2)] {
        for (c, &k) in counts.iter().enumerate() {
            let got = part.iter().filter(|r| r.label == Target::Class(c)).count() as f64;
            assert!(
                (got - k as f64 * share).abs() <= 1.0,
                "class {c}: {got} vs {}",
                k as f64 * share
            );
        }
    }
    let mut reg = class_record(0, 0);
    reg.label = Target::Value(1.0);
    assert!(split(&[reg.clone(), reg.clone(), reg], &ratios, 0, SplitStrategy::Stratified).is_err());
}

#[test]
fn grouped_split_keeps_groups_together() {
    let ds = gen_pair_discrimination(40, 2).unwrap();
    let s = split(&ds.records, &ds.manifest.ratios, 5, SplitStrategy::Grouped).unwrap();
    for part in [&s.train, &s.val, &s.test] {
        for r in part.iter() {
            let partner = part.iter().filter(|o| o.group == r.group).count();
            assert_eq!(partner, 2, "{} lost its partner", r.id);
        }
    }
    assert_eq!(s.test.len(), 8);
}

// ---- generators ----

fn conductances(rec: &GraphRecord) -> Vec<Real> {
    rec.nodes
        .iter()
        .map(|x| match x[2..].iter().position(|&v| v == 1.0) {
            Some(r) => 1.0 / RESISTANCES[r],
            None => 1.0,
        })
        .collect()
}

#[test]
fn flow_classification_properties() {
    let ds = gen_flow_classification(500, 12, 11).unwrap();
    assert_eq!(ds.len(), 500);
    assert_eq!(ds.manifest.feature_dim, FLOW_FEATURE_DIM);
    let ones = ds.records.iter().filter(|r| r.label == Target::Class(1)).count();
    assert!((ones as f64 / 500.0 - 0.5).abs() <= 0.02, "{ones} positives");
    assert_eq!(gen_flow_classification(500, 12, 11).unwrap(), ds);
    assert_ne!(gen_flow_classification(500, 12, 12).unwrap(), ds);
    assert!(gen_flow_classification(5, 3, 0).is_err());
    assert!(gen_flow_classification(0, 8, 0).unwrap().is_empty());

    // Labels agree with flows recomputed by the flow-extraction module.
    let mut maxima = Vec::new();
    for rec in &ds.records {
        let g = rec.to_graph().unwrap();
        let d = topo_sort(&g).unwrap();
        assert!(!g.sources().is_empty() && !g.targets().is_empty());
        let c = conductances(rec);
        let beta = EdgeWeights {
            values: g
                .edges()
                .iter()
                .map(|&(j, i)| c[i] / g.out_edges(j).iter().map(|&(k, _)| c[k]).sum::<Real>())
                .collect(),
            mode: NormMode::Flow,
        };
        let psi0 = default_injections(&g, &beta).unwrap();
        let flow = extract_flow(&d, &beta, &psi0).unwrap();
        let oracle = flow_oracle(&g, &c).unwrap();
        for (a, b) in flow.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        let max = oracle.iter().copied().fold(0.0, Real::max);
        maxima.push((max, rec.label));
    }
    let lowest_positive = maxima
        .iter()
        .filter(|m| m.1 == Target::Class(1))
        .map(|m| m.0)
        .fold(Real::MAX, Real::min);
    let highest_negative = maxima
        .iter()
        .filter(|m| m.1 == Target::Class(0))
        .map(|m| m.0)
        .fold(0.0, Real::max);
    assert!(lowest_positive >= highest_negative);
}

#[test]
fn flow_oracle_by_hand() {
    // 0 -> {1, 2} -> 3 with resistances 1 and 2 on the branches.
    let g = Graph::new(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)], Tensor::zeros(4, 1), [0], [3]).unwrap();
    let f = flow_oracle(&g, &[1.0, 1.0, 0.5, 1.0]).unwrap();
    let expected = [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0];
    for (a, b) in f.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(flow_oracle(&g, &[1.0, 1.0, 0.0, 1.0]).is_err());
    assert!(flow_oracle(&g, &[1.0]).is_err());
}

#[test]
fn pair_discrimination_properties() {
    let small = gen_pair_discrimination(2, 0).unwrap();
    assert_eq!(small.len(), 4);
    assert!(gen_pair_discrimination(1, 0).is_err());

    let ds = gen_pair_discrimination(30, 9).unwrap();
    assert_eq!(ds.manifest.feature_dim, PAIR_FEATURE_DIM);
    let ones = ds.records.iter().filter(|r| r.label == Target::Class(1)).count();
    assert_eq!(ones * 2, ds.len());
    assert_eq!(gen_pair_discrimination(30, 9).unwrap(), ds);
    for pair in ds.records.chunks(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert_eq!(a.group, b.group);
        assert_eq!((a.label, b.label), (Target::Class(0), Target::Class(1)));
        let da = topo_sort(&a.to_graph().unwrap()).unwrap();
        let db = topo_sort(&b.to_graph().unwrap()).unwrap();
        assert!(!da.is_tree() && db.is_tree());
        assert!(same_computation_tree(&da, &db).unwrap());
        assert!(certified_non_isomorphic(da.graph(), db.graph()));
    }
}
