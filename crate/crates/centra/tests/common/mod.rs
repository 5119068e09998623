//! Shared fixtures for the integration and acceptance suites.

use centra::graph::Graph;
use centra::rng::SplitMix64;
use ndarray::Array2;

/// Random simple graph conditioned on having no isolated node.
pub fn random_graph_no_isolated(n: usize, p: f64, seed: u64) -> Graph {
    let mut s = seed;
    loop {
        let g = centra::graph::random_graph(n, p, s);
        if g.degrees().iter().all(|&d| d > 0) {
            return g;
        }
        s = s.wrapping_add(0x9E37_79B9);
    }
}

/// Two disjoint cliques with noisy class-signal features: nodes 0..size are
/// class 0, the rest class 1. Features hold a one-hot class signal plus
/// Gaussian noise in `dims` dimensions.
pub struct TwoClique {
    pub graph: Graph,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn two_clique_fixture(size: usize, dims: usize, signal: f64, noise: f64, seed: u64) -> TwoClique {
    let n = 2 * size;
    let mut edges = Vec::new();
    for i in 0..size {
        for j in (i + 1)..size {
            edges.push((i, j));
            edges.push((size + i, size + j));
        }
    }
    let graph = Graph::new(n, edges, None, None).expect("two-clique graph");
    let mut rng = SplitMix64::new(seed);
    let mut features = Array2::<f64>::zeros((n, dims));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = if i < size { 0 } else { 1 };
        labels.push(class);
        features[[i, class]] += signal;
        for d in 0..dims {
            features[[i, d]] += noise * rng.next_normal();
        }
    }
    // deterministic split: 60% train per clique, rest test
    let mut train = Vec::new();
    let mut test = Vec::new();
    let per = (size * 6) / 10;
    let order0 = rng.sample_distinct(size, size);
    let order1: Vec<usize> = rng.sample_distinct(size, size).iter().map(|&i| i + size).collect();
    for (k, &v) in order0.iter().enumerate() {
        if k < per {
            train.push(v);
        } else {
            test.push(v);
        }
    }
    for (k, &v) in order1.iter().enumerate() {
        if k < per {
            train.push(v);
        } else {
            test.push(v);
        }
    }
    TwoClique {
        graph,
        features,
        labels,
        train,
        test,
    }
}

/// The sparse-versus-dense two-block node-classification fixture: block A is
/// homophilic and sparse with noisy features (message passing helps), block B
/// is dense with class-mixing edges and clean features (depth hurts).
pub struct TwoBlock {
    pub graph: Graph,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub sparse_test: Vec<usize>,
    pub dense_test: Vec<usize>,
}

pub fn sparse_dense_fixture(per_class: usize, seed: u64) -> TwoBlock {
    let block = 2 * per_class;
    let n = 2 * block;
    let mut rng = SplitMix64::new(seed);
    let mut edges = Vec::new();
    let class_of = |v: usize| -> usize {
        let local = v % block;
        usize::from(local >= per_class)
    };
    // block A (nodes 0..block): homophilic sparse
    for i in 0..block {
        for j in (i + 1)..block {
            if class_of(i) == class_of(j) && rng.next_f64() < 0.25 {
                edges.push((i, j));
            }
        }
    }
    // block B (nodes block..2*block): dense, class-agnostic
    for i in block..n {
        for j in (i + 1)..n {
            if rng.next_f64() < 0.6 {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::new(n, edges, None, None).expect("two-block graph");
    let dims = 2;
    let mut features = Array2::<f64>::zeros((n, dims));
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let class = class_of(v);
        labels.push(class);
        features[[v, class]] += 1.0;
        let noise = if v < block { 2.0 } else { 0.1 };
        for d in 0..dims {
            features[[v, d]] += noise * rng.next_normal();
        }
    }
    // split each block: 50% train, 25% val, 25% test
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut sparse_test = Vec::new();
    let mut dense_test = Vec::new();
    for b in 0..2 {
        let base = b * block;
        let order = rng.sample_distinct(block, block);
        for (k, &local) in order.iter().enumerate() {
            let v = base + local;
            if k < block / 2 {
                train.push(v);
            } else if k < (3 * block) / 4 {
                val.push(v);
            } else if b == 0 {
                sparse_test.push(v);
            } else {
                dense_test.push(v);
            }
        }
    }
    TwoBlock {
        graph,
        features,
        labels,
        train,
        val,
        sparse_test,
        dense_test,
    }
}
