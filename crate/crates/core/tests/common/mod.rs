#![allow(dead_code)]

use mlap::graph::{Dataset, GraphInstance};
use mlap::model::{Aggregator, Architecture, HeadKind, Model, ModelConfig};
use mlap::rng::RngStream;

pub const ALL_READOUTS: [(Architecture, Option<Aggregator>); 6] = [
    (Architecture::Naive, None),
    (Architecture::Jk, Some(Aggregator::Sum)),
    (Architecture::Jk, Some(Aggregator::Concat)),
    (Architecture::Jk, Some(Aggregator::MaxPool)),
    (Architecture::Mlap, Some(Aggregator::Sum)),
    (Architecture::Mlap, Some(Aggregator::Weighted)),
];

/// Connected random graph on 2..=max_nodes nodes: a random spanning tree
/// plus a few extra edges. Optional categorical features (node vocab 3,
/// edge vocab 2).
pub fn random_graph(rng: &mut RngStream, max_nodes: usize, feats: bool, classes: usize) -> GraphInstance {
    let n = 2 + rng.below(max_nodes - 1);
    let mut pairs = Vec::new();
    for v in 1..n {
        pairs.push((rng.below(v), v));
    }
    for _ in 0..rng.below(n) {
        let (a, b) = (rng.below(n), rng.below(n));
        let (a, b) = (a.min(b), a.max(b));
        if a != b && !pairs.contains(&(a, b)) {
            pairs.push((a, b));
        }
    }
    let mut g = GraphInstance::from_undirected(n, &pairs, rng.below(classes));
    if feats {
        g.node_feats = (0..n).map(|_| vec![rng.below(3)]).collect();
        let per_pair: Vec<usize> = (0..pairs.len()).map(|_| rng.below(2)).collect();
        g.edge_feats = (0..g.edges.len()).map(|e| vec![per_pair[e / 2]]).collect();
    }
    g
}

pub fn random_dataset(seed: u64, count: usize, max_nodes: usize, feats: bool, classes: usize) -> Dataset {
    let mut rng = RngStream::new(seed);
    Dataset::new((0..count).map(|_| random_graph(&mut rng, max_nodes, feats, classes)).collect())
}

pub fn small_config(
    arch: Architecture,
    agg: Option<Aggregator>,
    layers: usize,
    dim: usize,
    graphnorm: bool,
    head: HeadKind,
    feats: bool,
) -> ModelConfig {
    let mut c = ModelConfig::synthetic(arch, agg, layers);
    c.dim = dim;
    c.graphnorm = graphnorm;
    c.head = head;
    c.dropout = 0.0;
    if feats {
        c.node_vocab = vec![3];
        c.edge_vocab = vec![2];
    }
    c
}

/// Adds uniform noise in `[-scale, scale]` to every parameter so that
/// constant initialisations (GraphNorm, eps, MLAP weights) are exercised
/// away from their starting values.
pub fn jitter(model: &mut Model, seed: u64, scale: f64) {
    let mut rng = RngStream::new(seed);
    for p in model.params.iter_mut() {
        for x in p.value.data_mut() {
            *x += rng.uniform(-scale, scale);
        }
    }
}
