//! JSON-lines dataset files, one graph per line:
//!
//! ```text
//! {"n": 3, "edges": [[0,1],[1,0]], "nf": [], "ef": [], "y": 0}
//! ```
//!
//! Writing is hand-rolled so the byte layout (field order, spacing) is fixed.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use super::instance::{Dataset, GraphInstance};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    n: usize,
    edges: Vec<[usize; 2]>,
    nf: Vec<Vec<usize>>,
    ef: Vec<Vec<usize>>,
    y: usize,
}

fn write_matrix(out: &mut String, rows: impl Iterator<Item = impl AsRef<[usize]>>) {
    out.push('[');
    for (i, r) in rows.enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        for (j, x) in r.as_ref().iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x}");
        }
        out.push(']');
    }
    out.push(']');
}

/// The exact line (without newline) for one graph.
pub fn encode_line(g: &GraphInstance) -> String {
    let mut s = String::with_capacity(16 + g.edges.len() * 8);
    let _ = write!(s, "{{\"n\": {}, \"edges\": ", g.num_nodes);
    write_matrix(&mut s, g.edges.iter().map(|&(u, v)| [u, v]));
    s.push_str(", \"nf\": ");
    write_matrix(&mut s, g.node_feats.iter());
    s.push_str(", \"ef\": ");
    write_matrix(&mut s, g.edge_feats.iter());
    let _ = write!(s, ", \"y\": {}}}", g.label);
    s
}

pub fn decode_line(line: &str) -> Result<GraphInstance> {
    let r: Record =
        serde_json::from_str(line).map_err(|e| Error::Dataset(format!("malformed record: {e}")))?;
    let g = GraphInstance {
        num_nodes: r.n,
        edges: r.edges.into_iter().map(|[u, v]| (u, v)).collect(),
        node_feats: r.nf,
        edge_feats: r.ef,
        label: r.y,
    };
    g.validate()?;
    Ok(g)
}

pub fn save_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for g in &dataset.graphs {
        buf.push_str(&encode_line(g));
        buf.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Blank lines are skipped; errors carry the 1-based line number.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut graphs = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let g = decode_line(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: match e {
                Error::Dataset(m) => m,
                other => other.to_string(),
            },
        })?;
        graphs.push(g);
    }
    Ok(Dataset::new(graphs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_layout() {
        let mut g = GraphInstance::from_undirected(2, &[(0, 1)], 3);
        assert_eq!(
            encode_line(&g),
            r#"{"n": 2, "edges": [[0,1],[1,0]], "nf": [], "ef": [], "y": 3}"#
        );
        g.node_feats = vec![vec![1, 2], vec![0, 4]];
        g.edge_feats = vec![vec![5], vec![5]];
        assert_eq!(
            encode_line(&g),
            r#"{"n": 2, "edges": [[0,1],[1,0]], "nf": [[1,2],[0,4]], "ef": [[5],[5]], "y": 3}"#
        );
        assert_eq!(decode_line(&encode_line(&g)).unwrap(), g);
    }

    #[test]
    fn out_of_range_edge_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        let good = encode_line(&GraphInstance::from_undirected(25, &[(0, 1)], 0));
        let bad = r#"{"n": 25, "edges": [[0,99]], "nf": [], "ef": [], "y": 0}"#;
        fs::write(&p, format!("{good}\n{bad}\n")).unwrap();
        match load_jsonl(&p) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("out of range"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_unknown_fields() {
        assert!(decode_line("{not json").is_err());
        assert!(decode_line(r#"{"n": 1, "edges": [], "nf": [], "ef": [], "y": 0, "z": 1}"#).is_err());
        assert!(decode_line(r#"{"n": 0, "edges": [], "nf": [], "ef": [], "y": 0}"#).is_err());
        assert!(decode_line(r#"{"n": 2, "edges": [[0,-1]], "nf": [], "ef": [], "y": 0}"#).is_err());
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        fs::write(&p, "").unwrap();
        assert!(load_jsonl(&p).unwrap().is_empty());
    }
}
