use std::sync::Arc;

use super::instance::GraphInstance;
use crate::autodiff::Segments;
use crate::error::{Error, Result};

/// Disjoint union of graphs over one flat node index space.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub node_offsets: Vec<usize>,
    pub nodes_per_graph: Vec<usize>,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// One code vector (length `num_nodes`) per categorical node column.
    pub node_feat_cols: Vec<Arc<[usize]>>,
    /// One code vector (length `num_edges`) per categorical edge column.
    pub edge_feat_cols: Vec<Arc<[usize]>>,
    pub segments: Arc<Segments>,
    pub labels: Vec<usize>,
}

impl GraphBatch {
    pub fn num_graphs(&self) -> usize {
        self.node_offsets.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.segments.num_rows()
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// Concatenates graphs, shifting node indices by cumulative offsets.
pub fn batch<'a, I>(graphs: I) -> Result<GraphBatch>
where
    I: IntoIterator<Item = &'a GraphInstance>,
{
    let graphs: Vec<&GraphInstance> = graphs.into_iter().collect();
    if graphs.is_empty() {
        return Err(Error::Dataset("cannot batch zero graphs".into()));
    }
    let nf = graphs[0].node_feat_cols();
    let ef = graphs[0].edge_feat_cols();
    let mut node_offsets = Vec::with_capacity(graphs.len());
    let mut nodes_per_graph = Vec::with_capacity(graphs.len());
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut seg = Vec::new();
    let mut ncols = vec![Vec::new(); nf];
    let mut ecols = vec![Vec::new(); ef];
    let mut offset = 0;
    for (gi, g) in graphs.iter().enumerate() {
        g.validate()?;
        if g.node_feat_cols() != nf || g.edge_feat_cols() != ef {
            return Err(Error::Dataset(format!(
                "graph {gi} has {}/{} feature columns, expected {nf}/{ef}",
                g.node_feat_cols(),
                g.edge_feat_cols()
            )));
        }
        node_offsets.push(offset);
        nodes_per_graph.push(g.num_nodes);
        for &(s, d) in &g.edges {
            src.push(s + offset);
            dst.push(d + offset);
        }
        seg.extend(std::iter::repeat_n(gi, g.num_nodes));
        for row in &g.node_feats {
            for (c, &x) in row.iter().enumerate() {
                ncols[c].push(x);
            }
        }
        for row in &g.edge_feats {
            for (c, &x) in row.iter().enumerate() {
                ecols[c].push(x);
            }
        }
        offset += g.num_nodes;
    }
    Ok(GraphBatch {
        node_offsets,
        nodes_per_graph,
        src: src.into(),
        dst: dst.into(),
        node_feat_cols: ncols.into_iter().map(Into::into).collect(),
        edge_feat_cols: ecols.into_iter().map(Into::into).collect(),
        segments: Arc::new(Segments::new(seg, graphs.len())?),
        labels: graphs.iter().map(|g| g.label).collect(),
    })
}
