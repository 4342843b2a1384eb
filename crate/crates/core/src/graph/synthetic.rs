//! Compositional synthetic graphs: one center component plus five
//! peripheral components of a shared kind, each a 5-node path with one extra
//! edge, plus five random extra edges. The class is
//! `3 * center + peripheral`.

use std::collections::HashSet;

use super::instance::{Dataset, GraphInstance};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng::RngStream;

pub const COMPONENT_SIZE: usize = 5;
pub const NUM_PERIPHERALS: usize = 5;
pub const NUM_RANDOM_EDGES: usize = 5;
pub const NUM_CLASSES: usize = 9;
/// 5 center nodes + 4 private nodes per peripheral.
pub const NODES_PER_GRAPH: usize = COMPONENT_SIZE + NUM_PERIPHERALS * (COMPONENT_SIZE - 1);
/// Bumped whenever generated bytes change for a given seed.
pub const GENERATOR_VERSION: u32 = 1;

const MAX_REJECTIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComponentKind {
    /// Extra edge (0,2): contains a triangle.
    A,
    /// Extra edge (0,3): contains a 4-cycle.
    B,
    /// Extra edge (0,4): a 5-cycle.
    C,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 3] = [ComponentKind::A, ComponentKind::B, ComponentKind::C];

    pub fn code(self) -> usize {
        match self {
            ComponentKind::A => 0,
            ComponentKind::B => 1,
            ComponentKind::C => 2,
        }
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    fn extra_edge_end(self) -> usize {
        match self {
            ComponentKind::A => 2,
            ComponentKind::B => 3,
            ComponentKind::C => 4,
        }
    }
}

/// Class label for a (center, peripheral) combination.
pub fn class_label(center: ComponentKind, peripheral: ComponentKind) -> usize {
    3 * center.code() + peripheral.code()
}

/// The five undirected edges of a component on nodes `base..base+5`.
pub fn gen_component(kind: ComponentKind, base: usize) -> Vec<(usize, usize)> {
    component_on(kind, &[base, base + 1, base + 2, base + 3, base + 4])
}

/// Component edges with role `i` played by node `nodes[i]`.
fn component_on(kind: ComponentKind, nodes: &[usize; COMPONENT_SIZE]) -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = (0..COMPONENT_SIZE - 1)
        .map(|i| (nodes[i], nodes[i + 1]))
        .collect();
    e.push((nodes[0], nodes[kind.extra_edge_end()]));
    e
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub per_class_count: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(per_class_count: usize, seed: u64) -> Self {
        SyntheticSpec {
            per_class_count,
            seed,
        }
    }
}

/// Center plus peripherals, without random edges. Peripheral `i` uses center
/// node `i` as its role-0 node and private nodes `5+4i .. 5+4i+3`.
fn base_edges(center: ComponentKind, peripheral: ComponentKind) -> Vec<(usize, usize)> {
    let mut edges = gen_component(center, 0);
    for i in 0..NUM_PERIPHERALS {
        let first = COMPONENT_SIZE + (COMPONENT_SIZE - 1) * i;
        let nodes = [i, first, first + 1, first + 2, first + 3];
        edges.extend(component_on(peripheral, &nodes));
    }
    edges
}

fn norm(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Samples the random extra edges: distinct node pairs that are not
/// self-loops and not already connected. Returned sorted.
fn sample_random_edges(
    existing: &[(usize, usize)],
    rng: &mut RngStream,
) -> Result<Vec<(usize, usize)>> {
    let mut taken: HashSet<(usize, usize)> = existing.iter().map(|&(u, v)| norm(u, v)).collect();
    let mut out = Vec::with_capacity(NUM_RANDOM_EDGES);
    let mut rejections = 0;
    while out.len() < NUM_RANDOM_EDGES {
        let u = rng.below(NODES_PER_GRAPH);
        let v = rng.below(NODES_PER_GRAPH);
        let e = norm(u, v);
        if u == v || !taken.insert(e) {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::Generator(format!(
                    "no admissible random edge after {MAX_REJECTIONS} draws"
                )));
            }
            continue;
        }
        out.push(e);
    }
    out.sort_unstable();
    Ok(out)
}

fn assemble(
    center: ComponentKind,
    peripheral: ComponentKind,
    base: &[(usize, usize)],
    random: &[(usize, usize)],
) -> GraphInstance {
    let pairs: Vec<_> = base.iter().chain(random).copied().collect();
    GraphInstance::from_undirected(NODES_PER_GRAPH, &pairs, class_label(center, peripheral))
}

/// One synthetic graph: 25 nodes, 35 undirected edges stored as 70 directed
/// edges. The random edges are the last ten directed entries.
pub fn gen_synthetic_graph(
    center: ComponentKind,
    peripheral: ComponentKind,
    rng: &mut RngStream,
) -> Result<GraphInstance> {
    let base = base_edges(center, peripheral);
    let random = sample_random_edges(&base, rng)?;
    Ok(assemble(center, peripheral, &base, &random))
}

/// The sorted random extra edges of a generated graph.
pub fn random_edge_set(g: &GraphInstance) -> Vec<(usize, usize)> {
    let n = g.edges.len();
    let mut v: Vec<_> = g.edges[n - 2 * NUM_RANDOM_EDGES..]
        .iter()
        .step_by(2)
        .map(|&(u, w)| norm(u, w))
        .collect();
    v.sort_unstable();
    v
}

/// Number of distinct random-edge sets available per class:
/// C(non-edges, 5), saturating.
pub fn max_unique_per_class() -> u128 {
    let pairs = (NODES_PER_GRAPH * (NODES_PER_GRAPH - 1) / 2) as u128;
    let free = pairs - ((1 + NUM_PERIPHERALS) * COMPONENT_SIZE) as u128;
    let k = NUM_RANDOM_EDGES as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul(free - i) / (i + 1);
    }
    c
}

/// `per_class_count` graphs for each of the nine classes, class-major, with
/// pairwise-distinct random-edge sets inside each class.
pub fn gen_synthetic_dataset(spec: &SyntheticSpec, exec: Execution) -> Result<Dataset> {
    if spec.per_class_count == 0 {
        return Err(Error::Generator("per_class_count must be positive".into()));
    }
    if spec.per_class_count as u128 > max_unique_per_class() {
        return Err(Error::Generator(format!(
            "{} unique graphs per class requested, only {} exist",
            spec.per_class_count,
            max_unique_per_class()
        )));
    }
    let classes = par::map_range(exec, NUM_CLASSES, |label| gen_class(spec, label));
    let mut graphs = Vec::with_capacity(NUM_CLASSES * spec.per_class_count);
    for c in classes {
        graphs.extend(c?);
    }
    Ok(Dataset::new(graphs))
}

fn gen_class(spec: &SyntheticSpec, label: usize) -> Result<Vec<GraphInstance>> {
    let center = ComponentKind::from_code(label / 3).expect("label < 9");
    let peripheral = ComponentKind::from_code(label % 3).expect("label < 9");
    let mut rng = RngStream::derive_indexed(spec.seed, "synthetic/class", label as u64);
    let base = base_edges(center, peripheral);
    let mut seen = HashSet::with_capacity(spec.per_class_count);
    let mut out = Vec::with_capacity(spec.per_class_count);
    let mut duplicates = 0usize;
    while out.len() < spec.per_class_count {
        let random = sample_random_edges(&base, &mut rng)?;
        if !seen.insert(random.clone()) {
            duplicates += 1;
            if duplicates > MAX_REJECTIONS + spec.per_class_count {
                return Err(Error::Generator(format!(
                    "class {label}: too many duplicate graphs"
                )));
            }
            continue;
        }
        out.push(assemble(center, peripheral, &base, &random));
    }
    Ok(out)
}
