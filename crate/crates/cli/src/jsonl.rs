//! Line-delimited JSON graph format: one object per line with node type
//! indices and an `(i, j, type)` edge list over `i < j`; absent pairs are
//! no-edge. Type counts `(a, d)` are dataset-level context supplied by the
//! reader.

use dgdm_core::graph::{Graph, GraphError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: edge [{i}, {j}, {t}] violates 0 <= i < j < {n}")]
    BadEdge { line: usize, i: usize, j: usize, t: usize, n: usize },
    #[error("line {line}: node count {stated} does not match {actual} node types")]
    BadNodeCount { line: usize, stated: usize, actual: usize },
    #[error("line {line}: {source}")]
    Graph {
        line: usize,
        #[source]
        source: GraphError,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub n: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

pub fn graph_to_record(g: &Graph) -> GraphRecord {
    GraphRecord {
        n: g.n(),
        nodes: g.node_types().to_vec(),
        edges: g.edge_list().into_iter().map(|(i, j, t)| [i, j, t]).collect(),
        meta: None,
    }
}

pub fn record_to_graph(rec: &GraphRecord, a: usize, d: usize, line: usize) -> Result<Graph, JsonlError> {
    if rec.n != rec.nodes.len() {
        return Err(JsonlError::BadNodeCount { line, stated: rec.n, actual: rec.nodes.len() });
    }
    let mut edges = Vec::with_capacity(rec.edges.len());
    for &[i, j, t] in &rec.edges {
        if i >= j || j >= rec.n {
            return Err(JsonlError::BadEdge { line, i, j, t, n: rec.n });
        }
        edges.push((i, j, t));
    }
    Graph::from_edges(a, d, rec.nodes.clone(), &edges).map_err(|source| JsonlError::Graph { line, source })
}

pub fn write_jsonl(graphs: &[Graph]) -> String {
    let mut out = String::new();
    for g in graphs {
        out.push_str(&serde_json::to_string(&graph_to_record(g)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(text: &str, a: usize, d: usize) -> Result<Vec<Graph>, JsonlError> {
    let mut graphs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord =
            serde_json::from_str(line).map_err(|source| JsonlError::Parse { line: line_no, source })?;
        graphs.push(record_to_graph(&rec, a, d, line_no)?);
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_a_simple_graph() {
        let g = Graph::from_edges(4, 4, vec![0, 2, 1], &[(0, 1, 1), (1, 2, 3)]).unwrap();
        let text = write_jsonl(&[g.clone()]);
        let back = read_jsonl(&text, 4, 4).unwrap();
        assert_eq!(back, vec![g]);
    }

    #[test]
    fn rejects_unordered_edges_with_line_number() {
        let text = r#"{"n":3,"nodes":[0,0,0],"edges":[[2,1,1]]}"#;
        match read_jsonl(text, 4, 4) {
            Err(JsonlError::BadEdge { line: 1, i: 2, j: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_type_out_of_range() {
        let text = r#"{"n":2,"nodes":[0,9],"edges":[]}"#;
        assert!(matches!(read_jsonl(text, 4, 4), Err(JsonlError::Graph { line: 1, .. })));
    }

    #[test]
    fn skips_blank_lines_and_reports_parse_lines() {
        let text = "\n{\"n\":1,\"nodes\":[0],\"edges\":[]}\n\nnot json\n";
        match read_jsonl(text, 4, 4) {
            Err(JsonlError::Parse { line: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
