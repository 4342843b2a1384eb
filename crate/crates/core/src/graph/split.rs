use super::instance::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [8.0, 1.0, 1.0],
            stratified: true,
            seed: 0,
        }
    }
}

/// Sorted index lists of a train/validation/test partition.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder allocation of `n` items to the ratios; ties go to the
/// earlier part.
fn allocate(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    let quotas: Vec<f64> = ratios.iter().map(|r| n as f64 * r / total).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Deterministic random partition, stratified by label when requested.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if spec.ratios.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) || spec.ratios.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config(format!("invalid split ratios {:?}", spec.ratios)));
    }
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); dataset.num_classes()];
        for (i, graph) in dataset.graphs.iter().enumerate() {
            g[graph.label].push(i);
        }
        g
    } else {
        vec![(0..dataset.len()).collect()]
    };
    let mut out = Split::default();
    for (gi, mut idx) in groups.into_iter().enumerate() {
        let mut rng = RngStream::derive_indexed(spec.seed, "split", gi as u64);
        rng.shuffle(&mut idx);
        let [a, b, _] = allocate(idx.len(), &spec.ratios);
        out.train.extend_from_slice(&idx[..a]);
        out.val.extend_from_slice(&idx[a..a + b]);
        out.test.extend_from_slice(&idx[a + b..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphInstance;

    fn labelled(counts: &[usize]) -> Dataset {
        let mut graphs = Vec::new();
        for (label, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                graphs.push(GraphInstance::from_undirected(1, &[], label));
            }
        }
        Dataset::new(graphs)
    }

    #[test]
    fn allocation_rounding() {
        assert_eq!(allocate(1000, &[8.0, 1.0, 1.0]), [800, 100, 100]);
        assert_eq!(allocate(7, &[1.0, 0.0, 0.0]), [7, 0, 0]);
        assert_eq!(allocate(3, &[8.0, 1.0, 1.0]).iter().sum::<usize>(), 3);
    }

    #[test]
    fn stratified_exact_counts() {
        let d = labelled(&[1000; 9]);
        let s = split(&d, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7200, 900, 900));
        let per = |ix: &[usize]| {
            let mut c = [0usize; 9];
            ix.iter().for_each(|&i| c[d.graphs[i].label] += 1);
            c
        };
        assert_eq!(per(&s.train), [800; 9]);
        assert_eq!(per(&s.val), [100; 9]);
        assert_eq!(per(&s.test), [100; 9]);
    }

    #[test]
    fn all_train() {
        let d = labelled(&[5, 3]);
        let spec = SplitSpec {
            ratios: [1.0, 0.0, 0.0],
            ..SplitSpec::default()
        };
        let s = split(&d, &spec).unwrap();
        assert_eq!(s.train, (0..8).collect::<Vec<_>>());
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn deterministic_and_disjoint() {
        let d = labelled(&[37, 41, 12]);
        for stratified in [true, false] {
            let spec = SplitSpec {
                stratified,
                seed: 9,
                ..SplitSpec::default()
            };
            let a = split(&d, &spec).unwrap();
            assert_eq!(a, split(&d, &spec).unwrap());
            let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bad_ratios() {
        let d = labelled(&[3]);
        let spec = SplitSpec {
            ratios: [0.0, 0.0, 0.0],
            ..SplitSpec::default()
        };
        assert!(split(&d, &spec).is_err());
    }
}
