//! Oracles and tolerances here assume double precision.
#![cfg(not(feature = "f32"))]

use flowgnn::graph::random::{random_dag, random_rooted_dag, random_tree};
use flowgnn::graph::{computation_tree, merge_final_nodes, reverse, topo_sort, Dag, Graph};
use flowgnn::tensor::Tensor;
use flowgnn::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
    let feats = Tensor::from_rows(&(0..n).map(|i| vec![i as f64]).collect::<Vec<_>>(), 1).unwrap();
    Graph::from_edges(n, edges.to_vec(), feats).unwrap()
}

fn diamond() -> Graph {
    graph(4, &[(0, 1), (0, 2), (1, 3), (2, 3)])
}

fn edge_set(g: &Graph) -> BTreeSet<(usize, usize)> {
    g.edges().iter().copied().collect()
}

fn valid_order(d: &Dag) -> bool {
    d.graph().edges().iter().all(|&(u, v)| d.position(u) < d.position(v))
}

#[test]
fn neighborhoods() {
    let chain = graph(3, &[(0, 1), (1, 2)]);
    assert_eq!(chain.in_neighbors(1).unwrap(), vec![0]);
    assert_eq!(chain.out_neighbors(1).unwrap(), vec![2]);
    assert_eq!(chain.out_neighbors(2).unwrap(), Vec::<usize>::new());
    let iso = graph(2, &[]);
    assert!(iso.in_neighbors(0).unwrap().is_empty());
    let d = graph(4, &[(2, 3), (0, 2), (1, 3), (0, 1)]);
    assert_eq!(d.in_neighbors(3).unwrap(), vec![1, 2]);
    assert_eq!(d.out_neighbors(0).unwrap(), vec![1, 2]);
    assert!(matches!(d.in_neighbors(4), Err(Error::IndexOutOfRange { .. })));
}

#[test]
fn construction_rejects_invalid_graphs() {
    let f = Tensor::zeros(3, 1);
    assert!(matches!(
        Graph::from_edges(3, vec![(0, 1), (0, 1)], f.clone()),
        Err(Error::DuplicateEdge(0, 1))
    ));
    assert!(matches!(
        Graph::from_edges(3, vec![(1, 1)], f.clone()),
        Err(Error::SelfLoop(1))
    ));
    assert!(matches!(
        Graph::from_edges(3, vec![(0, 3)], f.clone()),
        Err(Error::IndexOutOfRange { .. })
    ));
    assert!(Graph::new(3, vec![], f.clone(), [5], []).is_err());
    assert!(Graph::from_edges(2, vec![], f).is_err());
}

#[test]
fn topo_sort_examples() {
    assert_eq!(
        topo_sort(&graph(3, &[(0, 1), (1, 2)])).unwrap().topo_order(),
        &[0, 1, 2]
    );
    assert_eq!(topo_sort(&graph(2, &[(1, 0)])).unwrap().topo_order(), &[1, 0]);
    assert!(matches!(topo_sort(&graph(2, &[(0, 1), (1, 0)])), Err(Error::Cycle)));
    let d = topo_sort(&diamond()).unwrap();
    assert_eq!(d.initial_nodes(), vec![0]);
    assert_eq!(d.final_nodes(), vec![3]);
    assert!(d.graph().sources().contains(&0));
    assert!(d.graph().targets().contains(&3));
}

#[test]
fn reverse_examples() {
    let chain = topo_sort(&graph(3, &[(0, 1), (1, 2)])).unwrap();
    let r = reverse(&chain);
    assert_eq!(edge_set(r.graph()), BTreeSet::from([(1, 0), (2, 1)]));
    assert_eq!(r.topo_order(), &[2, 1, 0]);
    assert_eq!(r.graph().features(), chain.graph().features());

    let d = topo_sort(&diamond()).unwrap();
    let r = reverse(&d);
    assert_eq!(r.initial_nodes(), d.final_nodes());
    assert_eq!(r.final_nodes(), d.initial_nodes());
    assert_eq!(r.graph().sources(), d.graph().targets());
    assert_eq!(edge_set(reverse(&r).graph()), edge_set(d.graph()));
    assert!(valid_order(&r));
}

#[test]
fn computation_tree_examples() {
    let chain = topo_sort(&graph(3, &[(0, 1), (1, 2)])).unwrap();
    assert_eq!(computation_tree(&chain).unwrap(), chain);

    let d = topo_sort(&diamond()).unwrap();
    let t = computation_tree(&d).unwrap();
    assert_eq!(t.num_nodes(), 5);
    assert!(t.is_tree());
    assert_eq!(t.root().unwrap(), 3);
    // the copy of node 0 is appended and carries its feature
    assert_eq!(t.graph().features().row_slice(4), &[0.0]);
    assert_eq!(edge_set(t.graph()), BTreeSet::from([(0, 1), (4, 2), (1, 3), (2, 3)]));

    let two_roots = topo_sort(&graph(3, &[(0, 1), (0, 2)])).unwrap();
    assert!(matches!(computation_tree(&two_roots), Err(Error::MultipleRoots(2))));
}

#[test]
fn computation_tree_expands_recursively() {
    // 0 -> {1, 2}, 1 -> {2, 3}, 2 -> 3. Node 1 is copied twice, and both
    // copies need their own copy of 0.
    let d = topo_sort(&graph(4, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)])).unwrap();
    let t = computation_tree(&d).unwrap();
    assert!(t.is_tree());
    // 3 <- {2, 1'}; 2 <- {1, 0'}; 1 <- 0; 1' <- 0''
    assert_eq!(t.num_nodes(), 7);
    let rows = t.graph().features().to_rows();
    let count = |f: f64| rows.iter().filter(|r| r[0] == f).count();
    assert_eq!((count(0.0), count(1.0), count(2.0), count(3.0)), (3, 2, 1, 1));
}

#[test]
fn merge_final_nodes_examples() {
    let chain = topo_sort(&graph(2, &[(0, 1)])).unwrap();
    let m = merge_final_nodes(&chain, &[0.0]).unwrap();
    assert_eq!((m.num_nodes(), m.graph().num_edges()), (3, 2));
    assert_eq!(m.root().unwrap(), 2);

    let fork = topo_sort(&graph(3, &[(0, 1), (0, 2)])).unwrap();
    let m = merge_final_nodes(&fork, &[7.0]).unwrap();
    assert_eq!(m.graph().in_degree(3), 2);
    assert_eq!(m.graph().features().row_slice(3), &[7.0]);
    let m2 = merge_final_nodes(&m, &[0.0]).unwrap();
    assert_eq!(m2.graph().in_degree(4), 1);
    assert!(merge_final_nodes(&fork, &[0.0, 1.0]).is_err());
}

#[test]
fn levels_respect_dependencies() {
    let d = topo_sort(&graph(5, &[(0, 2), (1, 2), (2, 4), (3, 4), (0, 3)])).unwrap();
    let levels = d.levels();
    assert_eq!(levels, vec![vec![0, 1], vec![2, 3], vec![4]]);
}

#[test]
fn permute_and_union() {
    let d = diamond();
    let p = d.permute(&[3, 2, 1, 0]).unwrap();
    assert_eq!(edge_set(&p), BTreeSet::from([(3, 2), (3, 1), (2, 0), (1, 0)]));
    assert_eq!(p.features().row_slice(0), &[3.0]);
    let u = d.disjoint_union(&d).unwrap();
    assert_eq!((u.num_nodes(), u.num_edges()), (8, 8));
    let s = graph(2, &[(0, 1)]).symmetrized().unwrap();
    assert_eq!(edge_set(&s), BTreeSet::from([(0, 1), (1, 0)]));
}

#[test]
fn topo_order_valid_on_random_dags() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..1000 {
        let n = 1 + i % 25;
        let d = random_dag(&mut rng, n, 0.3, 2).unwrap();
        assert!(valid_order(&d));
        let mut order = d.topo_order().to_vec();
        order.sort_unstable();
        assert_eq!(order, (0..n).collect::<Vec<_>>());
        let initial: BTreeSet<usize> = d.initial_nodes().into_iter().collect();
        assert!(initial.is_subset(d.graph().sources()));
        let fin: BTreeSet<usize> = d.final_nodes().into_iter().collect();
        assert!(fin.is_subset(d.graph().targets()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn computation_tree_properties(seed in any::<u64>(), n in 1usize..10, p in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_rooted_dag(&mut rng, n, p, 2).unwrap();
        let t = computation_tree(&d).unwrap();
        prop_assert!(t.is_tree());
        prop_assert_eq!(t.root().unwrap(), d.root().unwrap());
        prop_assert!(t.num_nodes() >= d.num_nodes());
        prop_assert_eq!(t.num_nodes() == d.num_nodes(), d.is_tree());
        if d.is_tree() {
            prop_assert_eq!(&t, &d);
        }
    }

    #[test]
    fn trees_are_fixed_points(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_tree(&mut rng, n, 1).unwrap();
        prop_assert!(d.is_tree());
        prop_assert_eq!(computation_tree(&d).unwrap(), d);
    }

    #[test]
    fn reverse_is_an_involution(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dag(&mut rng, n, 0.3, 1).unwrap();
        let r = reverse(&d);
        prop_assert!(valid_order(&r));
        prop_assert_eq!(edge_set(reverse(&r).graph()), edge_set(d.graph()));
    }
}
