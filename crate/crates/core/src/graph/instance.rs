use crate::error::{Error, Result};

/// One graph with categorical node/edge features and an integer label.
///
/// Edges are directed; undirected data stores both orientations. A feature
/// matrix with zero columns is represented by an empty `Vec`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphInstance {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub node_feats: Vec<Vec<usize>>,
    pub edge_feats: Vec<Vec<usize>>,
    pub label: usize,
}

impl GraphInstance {
    /// Featureless graph from undirected pairs, each stored as `(u,v),(v,u)`.
    pub fn from_undirected(num_nodes: usize, pairs: &[(usize, usize)], label: usize) -> Self {
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        for &(u, v) in pairs {
            edges.push((u, v));
            edges.push((v, u));
        }
        GraphInstance {
            num_nodes,
            edges,
            node_feats: Vec::new(),
            edge_feats: Vec::new(),
            label,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_feat_cols(&self) -> usize {
        self.node_feats.first().map_or(0, Vec::len)
    }

    pub fn edge_feat_cols(&self) -> usize {
        self.edge_feats.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(Error::Dataset("graph has no nodes".into()));
        }
        if let Some(&(s, d)) = self
            .edges
            .iter()
            .find(|&&(s, d)| s >= self.num_nodes || d >= self.num_nodes)
        {
            return Err(Error::Dataset(format!(
                "edge [{s},{d}] out of range for {} nodes",
                self.num_nodes
            )));
        }
        check_matrix("nf", &self.node_feats, self.num_nodes)?;
        check_matrix("ef", &self.edge_feats, self.edges.len())?;
        Ok(())
    }

    /// True when every directed edge has its reverse.
    pub fn is_symmetric(&self) -> bool {
        let set: std::collections::HashSet<_> = self.edges.iter().copied().collect();
        self.edges.iter().all(|&(u, v)| set.contains(&(v, u)))
    }

    /// Copy with nodes relabelled: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> GraphInstance {
        assert_eq!(perm.len(), self.num_nodes);
        let mut node_feats = self.node_feats.clone();
        for (i, f) in self.node_feats.iter().enumerate() {
            node_feats[perm[i]] = f.clone();
        }
        GraphInstance {
            num_nodes: self.num_nodes,
            edges: self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect(),
            node_feats,
            edge_feats: self.edge_feats.clone(),
            label: self.label,
        }
    }
}

fn check_matrix(name: &str, m: &[Vec<usize>], rows: usize) -> Result<()> {
    if m.is_empty() {
        return Ok(());
    }
    if m.len() != rows {
        return Err(Error::Dataset(format!(
            "{name} has {} rows, expected {rows}",
            m.len()
        )));
    }
    let cols = m[0].len();
    if cols == 0 || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Dataset(format!("{name} rows have inconsistent widths")));
    }
    Ok(())
}

/// An ordered collection of graphs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub graphs: Vec<GraphInstance>,
}

impl Dataset {
    pub fn new(graphs: Vec<GraphInstance>) -> Self {
        Dataset { graphs }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.graphs.iter().map(|g| g.label + 1).max().unwrap_or(0)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset::new(idx.iter().map(|&i| self.graphs[i].clone()).collect())
    }

    /// Per categorical column, one more than the largest code seen.
    pub fn node_vocab(&self) -> Vec<usize> {
        vocab(self.graphs.iter().flat_map(|g| g.node_feats.iter()))
    }

    pub fn edge_vocab(&self) -> Vec<usize> {
        vocab(self.graphs.iter().flat_map(|g| g.edge_feats.iter()))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for g in &self.graphs {
            counts[g.label] += 1;
        }
        counts
    }
}

fn vocab<'a>(rows: impl Iterator<Item = &'a Vec<usize>>) -> Vec<usize> {
    let mut v: Vec<usize> = Vec::new();
    for r in rows {
        if v.len() < r.len() {
            v.resize(r.len(), 0);
        }
        for (m, &x) in v.iter_mut().zip(r) {
            *m = (*m).max(x + 1);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undirected_pairs_are_expanded() {
        let g = GraphInstance::from_undirected(3, &[(0, 1), (1, 2)], 4);
        assert_eq!(g.edges, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert!(g.is_symmetric());
        g.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_edges_and_features() {
        let mut g = GraphInstance::from_undirected(3, &[(0, 1)], 0);
        g.edges.push((0, 9));
        assert!(g.validate().is_err());
        let mut g = GraphInstance::from_undirected(2, &[(0, 1)], 0);
        g.node_feats = vec![vec![1]];
        assert!(g.validate().is_err());
        let empty = GraphInstance::from_undirected(0, &[], 0);
        assert!(empty.validate().is_err());
    }

    #[test]
    fn vocab_is_max_plus_one() {
        let mut g = GraphInstance::from_undirected(2, &[(0, 1)], 0);
        g.node_feats = vec![vec![3, 0], vec![1, 5]];
        let d = Dataset::new(vec![g]);
        assert_eq!(d.node_vocab(), vec![4, 6]);
        assert!(d.edge_vocab().is_empty());
    }
}
