//! The `.tfg` graph document.
//!
//! A TOML document with top-level keys `inputs`, `outputs`, `metadata`, `edges` and `nodes`:
//!
//! ```toml
//! format_version = 1
//! inputs = ["x"]
//! outputs = ["y"]
//!
//! [metadata]
//! name = "one-conv"
//!
//! [edges]
//! x = { dims = [1, 3, 32, 32], dtype = "float32" }
//! y = {}
//!
//! [[nodes]]
//! id = "conv"
//! op = "conv2d"
//! inputs = ["x"]
//! outputs = ["y"]
//! attrs = { kernel = 3, stride = 1, padding = 1, out_channels = 8 }
//! ```
//!
//! An edge declared as `{}` carries no shape. `format_version` is optional on input and always
//! written on export.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AttrValue, ComputationGraph, DType, GraphError, GraphNode, OpKind, TensorShape};

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    format_version: Option<u32>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    #[serde(default)]
    edges: BTreeMap<String, EdgeDoc>,
    #[serde(default)]
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dtype: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    op: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(default)]
    attrs: BTreeMap<String, AttrValue>,
}

/// Parses and validates a `.tfg` document.
pub fn load_graph(serialized: &[u8]) -> Result<ComputationGraph, GraphError> {
    let text = std::str::from_utf8(serialized)
        .map_err(|e| GraphError::Parse(format!("document is not UTF-8: {e}")))?;
    let doc: GraphDoc = toml::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    if let Some(v) = doc.format_version {
        if v != GRAPH_FORMAT_VERSION {
            return Err(GraphError::Parse(format!(
                "unsupported graph format version {v} (expected {GRAPH_FORMAT_VERSION})"
            )));
        }
    }
    let mut edges = BTreeMap::new();
    for (id, e) in doc.edges {
        let shape = match (e.dims, e.dtype) {
            (None, None) => None,
            (None, Some(_)) => {
                return Err(GraphError::invalid(&id, "edge declares a dtype without dims"))
            }
            (Some(dims), dtype) => {
                let dtype = match dtype {
                    None => DType::Float32,
                    Some(t) => DType::parse(&t)
                        .ok_or_else(|| GraphError::invalid(&id, format!("unknown dtype `{t}`")))?,
                };
                let dims = dims
                    .into_iter()
                    .map(|d| {
                        u64::try_from(d)
                            .map_err(|_| GraphError::invalid(&id, "tensor extents must be >= 1"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(TensorShape::new(dims, dtype).map_err(|e| match e {
                    GraphError::Validation { reason, .. } => GraphError::invalid(&id, reason),
                    other => other,
                })?)
            }
        };
        edges.insert(id, shape);
    }
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| GraphNode {
            id: n.id,
            op: OpKind::parse(&n.op),
            attrs: n.attrs,
            inputs: n.inputs,
            outputs: n.outputs,
        })
        .collect();
    ComputationGraph::new(nodes, edges, doc.inputs, doc.outputs, doc.metadata)
}

/// Serializes a graph. Nodes are written in topological order and edges sorted by id, so equal
/// graphs always produce identical bytes.
pub fn export_graph(g: &ComputationGraph) -> Vec<u8> {
    let doc = GraphDoc {
        format_version: Some(GRAPH_FORMAT_VERSION),
        inputs: g.inputs().to_vec(),
        outputs: g.outputs().to_vec(),
        metadata: g.metadata().clone(),
        edges: g
            .edges()
            .iter()
            .map(|(id, s)| {
                let doc = match s {
                    None => EdgeDoc::default(),
                    Some(s) => EdgeDoc {
                        dims: Some(s.dims().iter().map(|&d| d as i64).collect()),
                        dtype: Some(s.dtype().name().to_string()),
                    },
                };
                (id.clone(), doc)
            })
            .collect(),
        nodes: g
            .topo_order()
            .iter()
            .map(|&i| {
                let n = &g.nodes()[i];
                NodeDoc {
                    id: n.id.clone(),
                    op: n.op.name().into_owned(),
                    inputs: n.inputs.clone(),
                    outputs: n.outputs.clone(),
                    attrs: n.attrs.clone(),
                }
            })
            .collect(),
    };
    toml::to_string(&doc).expect("graph documents always serialize").into_bytes()
}
