//! Edge lists, node tables and the node-index sidecar.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use netsmooth_core::linalg::{Matrix, Vector};

use crate::error::DataError;
use crate::multiverse::MultiverseInput;

/// Edges keyed by string node IDs, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub edges: Vec<(String, String, f64)>,
}

impl EdgeList {
    /// Node IDs in order of first appearance.
    pub fn nodes(&self) -> Vec<String> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for (s, t, _) in &self.edges {
            for id in [s, t] {
                if !seen.contains_key(id) {
                    seen.insert(id.clone(), out.len());
                    out.push(id.clone());
                }
            }
        }
        out
    }
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn format_error(path: &Path, message: String) -> DataError {
    DataError::Format {
        path: path.display().to_string(),
        message,
    }
}

/// Reads `src,dst[,weight]` rows after a header line. A missing weight
/// counts as 1.
pub fn read_edge_list(path: &Path) -> Result<EdgeList, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error(path))?;
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error(path))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 2 {
            return Err(format_error(
                path,
                format!("line {line}: expected src,dst[,weight]"),
            ));
        }
        let weight = match record.get(2) {
            None | Some("") => 1.0,
            Some(w) => w
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite())
                .ok_or_else(|| format_error(path, format!("line {line}: bad weight {w:?}")))?,
        };
        edges.push((record[0].to_string(), record[1].to_string(), weight));
    }
    Ok(EdgeList { edges })
}

/// Per-node outcome and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub covariate_names: Vec<String>,
    pub rows: HashMap<String, (f64, Vec<f64>)>,
    /// Rows skipped for missing or non-numeric values.
    pub incomplete: usize,
}

/// Reads a CSV whose first column is the node ID. `outcome` names the
/// outcome column; every other column is a covariate.
pub fn read_node_table(path: &Path, outcome: &str) -> Result<NodeTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error(path))?;
    let headers = reader.headers().map_err(csv_error(path))?.clone();
    let outcome_col = headers
        .iter()
        .position(|h| h == outcome)
        .filter(|&i| i > 0)
        .ok_or_else(|| format_error(path, format!("no outcome column {outcome:?}")))?;
    let covariate_cols: Vec<usize> = (1..headers.len()).filter(|&i| i != outcome_col).collect();
    let covariate_names = covariate_cols
        .iter()
        .map(|&i| headers[i].to_string())
        .collect();
    let mut rows = HashMap::new();
    let mut incomplete = 0;
    for record in reader.records() {
        let record = record.map_err(csv_error(path))?;
        let parse = |i: usize| {
            record
                .get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        let y = parse(outcome_col);
        let w: Option<Vec<f64>> = covariate_cols.iter().map(|&i| parse(i)).collect();
        match (y, w) {
            (Some(y), Some(w)) => {
                rows.insert(record[0].to_string(), (y, w));
            }
            _ => incomplete += 1,
        }
    }
    Ok(NodeTable {
        covariate_names,
        rows,
        incomplete,
    })
}

/// Network and node data restricted to nodes present in both.
#[derive(Debug, Clone)]
pub struct AlignedData {
    pub input: MultiverseInput,
    /// Node ID of each dense index.
    pub ids: Vec<String>,
    /// Edge-list nodes dropped for lack of complete node data.
    pub dropped_nodes: usize,
}

/// Maps node IDs to dense indices and builds the adjacency. Undirected
/// input adds each row's weight to both directions; self-loops are
/// ignored.
pub fn align(
    edges: &EdgeList,
    table: &NodeTable,
    directed: bool,
) -> Result<AlignedData, DataError> {
    let all = edges.nodes();
    let ids: Vec<String> = all
        .iter()
        .filter(|id| table.rows.contains_key(*id))
        .cloned()
        .collect();
    let dropped_nodes = all.len() - ids.len();
    if ids.is_empty() {
        return Err(DataError::Empty(
            "no node appears in both the edge list and the node table".into(),
        ));
    }
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let n = ids.len();
    let mut adjacency = Matrix::zeros(n, n);
    for (s, t, w) in &edges.edges {
        if let (Some(&i), Some(&j)) = (index.get(s.as_str()), index.get(t.as_str())) {
            if i == j {
                continue;
            }
            adjacency[(i, j)] += w;
            if !directed {
                adjacency[(j, i)] += w;
            }
        }
    }
    let p = table.covariate_names.len();
    let mut covariates = Matrix::zeros(n, p);
    let mut outcome = Vector::zeros(n);
    for (i, id) in ids.iter().enumerate() {
        let (y, w) = &table.rows[id];
        outcome[i] = *y;
        for (j, v) in w.iter().enumerate() {
            covariates[(i, j)] = *v;
        }
    }
    Ok(AlignedData {
        input: MultiverseInput {
            adjacency,
            covariates,
            outcome,
            directed,
        },
        ids,
        dropped_nodes,
    })
}

/// Writes the `index,node` sidecar.
pub fn write_nodes<W: Write>(ids: &[String], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["index", "node"])?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record([i.to_string(), id.clone()])?;
    }
    w.flush()?;
    Ok(())
}
