//! Framework-neutral computation graphs: the input and output artifact of compilation.
//!
//! A [`ComputationGraph`] is an immutable, validated DAG of [`GraphNode`]s connected by named
//! tensor edges. Graphs are read from and written to the `.tfg` text format (see [`format`]) and
//! compared structurally with [`graph_isomorphic`].

mod format;
mod iso;
mod op;
mod shape;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

pub use format::{export_graph, load_graph, GRAPH_FORMAT_VERSION};
pub use iso::{canonical_form, graph_isomorphic};
pub use op::{attr_int, AttrKind, AttrSchema, AttrValue, Attrs, OpKind};
pub(crate) use op::is_plain_token;
pub use shape::{DType, TensorShape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error at `{location}`: {reason}")]
    Validation { location: String, reason: String },
}

impl GraphError {
    pub(crate) fn invalid(location: impl Into<String>, reason: impl Into<String>) -> Self {
        GraphError::Validation { location: location.into(), reason: reason.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphNode {
    pub id: String,
    pub op: OpKind,
    pub attrs: Attrs,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl GraphNode {
    pub fn new(
        id: impl Into<String>,
        op: OpKind,
        attrs: Attrs,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Self {
        GraphNode { id: id.into(), op, attrs, inputs, outputs }
    }
}

/// A validated DAG of operator nodes with named tensor edges.
///
/// Every edge has exactly one producer or is a graph input; every graph output is reachable from
/// the graph inputs. Instances can only be obtained through [`ComputationGraph::new`] or
/// [`load_graph`], both of which enforce these invariants.
#[derive(Clone, Debug)]
pub struct ComputationGraph {
    nodes: Vec<GraphNode>,
    edges: BTreeMap<String, Option<TensorShape>>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    metadata: BTreeMap<String, String>,
    producer: HashMap<String, usize>,
    consumers: HashMap<String, Vec<usize>>,
    topo: Vec<usize>,
}

impl ComputationGraph {
    pub fn new(
        nodes: Vec<GraphNode>,
        edges: BTreeMap<String, Option<TensorShape>>,
        inputs: Vec<String>,
        outputs: Vec<String>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, GraphError> {
        let mut g = ComputationGraph {
            nodes,
            edges,
            inputs,
            outputs,
            metadata,
            producer: HashMap::new(),
            consumers: HashMap::new(),
            topo: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<String, Option<TensorShape>> {
        &self.edges
    }

    pub fn edge_shape(&self, edge: &str) -> Option<&TensorShape> {
        self.edges.get(edge).and_then(Option::as_ref)
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Index of the node producing `edge`, if it is not a graph input.
    pub fn producer(&self, edge: &str) -> Option<usize> {
        self.producer.get(edge).copied()
    }

    /// Indices of nodes consuming `edge`, in node-list order.
    pub fn consumers(&self, edge: &str) -> &[usize] {
        self.consumers.get(edge).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Node indices in a deterministic topological order (ties broken by node-list position).
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    fn validate(&mut self) -> Result<(), GraphError> {
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return Err(GraphError::invalid("<node>", "empty node id"));
            }
            if !seen.insert(n.id.as_str()) {
                return Err(GraphError::invalid(&n.id, "duplicate node id"));
            }
            validate_attrs(n)?;
            validate_arity(n)?;
        }

        let check_edge = |e: &String, who: &str| -> Result<(), GraphError> {
            if self.edges.contains_key(e) {
                Ok(())
            } else {
                Err(GraphError::invalid(e, format!("edge referenced by {who} is not declared")))
            }
        };
        for e in &self.inputs {
            check_edge(e, "graph inputs")?;
        }
        for e in &self.outputs {
            check_edge(e, "graph outputs")?;
        }
        for n in &self.nodes {
            for e in n.inputs.iter().chain(&n.outputs) {
                check_edge(e, &format!("node `{}`", n.id))?;
            }
        }

        let input_set: HashSet<&str> = self.inputs.iter().map(String::as_str).collect();
        if input_set.len() != self.inputs.len() {
            return Err(GraphError::invalid("inputs", "duplicate graph input"));
        }
        let mut producer = HashMap::new();
        let mut consumers: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for e in &n.outputs {
                if input_set.contains(e.as_str()) {
                    return Err(GraphError::invalid(e, "graph input edge has a producer"));
                }
                if producer.insert(e.clone(), i).is_some() {
                    return Err(GraphError::invalid(e, "edge has more than one producer"));
                }
            }
            for e in &n.inputs {
                let list = consumers.entry(e.clone()).or_default();
                if list.last() != Some(&i) {
                    list.push(i);
                }
            }
        }
        for e in self.edges.keys() {
            if !producer.contains_key(e) && !input_set.contains(e.as_str()) {
                return Err(GraphError::invalid(e, "edge has no producer and is not a graph input"));
            }
        }
        self.producer = producer;
        self.consumers = consumers;

        // Kahn's algorithm; ready nodes are released in node-list order.
        let mut indegree: Vec<usize> = self
            .nodes
            .iter()
            .map(|n| n.inputs.iter().filter(|e| self.producer.contains_key(*e)).count())
            .collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut topo = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_first() {
            topo.push(i);
            for e in &self.nodes[i].outputs {
                for &c in self.consumers(e) {
                    let uses = self.nodes[c].inputs.iter().filter(|x| *x == e).count();
                    indegree[c] -= uses;
                    if indegree[c] == 0 {
                        ready.insert(c);
                    }
                }
            }
        }
        if topo.len() != self.nodes.len() {
            let stuck = (0..self.nodes.len()).find(|i| !topo.contains(i)).unwrap();
            return Err(GraphError::invalid(&self.nodes[stuck].id, "graph contains a cycle"));
        }
        self.topo = topo;

        // Reachability of outputs from inputs.
        let mut reached: HashSet<&str> = input_set.clone();
        let mut queue: VecDeque<&str> = self.inputs.iter().map(String::as_str).collect();
        let mut fired = vec![false; self.nodes.len()];
        while let Some(e) = queue.pop_front() {
            for &c in self.consumers(e) {
                if !fired[c] {
                    fired[c] = true;
                    for o in &self.nodes[c].outputs {
                        if reached.insert(o) {
                            queue.push_back(o);
                        }
                    }
                }
            }
        }
        for o in &self.outputs {
            if !reached.contains(o.as_str()) {
                return Err(GraphError::invalid(o, "graph output is not reachable from the inputs"));
            }
        }
        Ok(())
    }
}

fn validate_attrs(n: &GraphNode) -> Result<(), GraphError> {
    for (k, v) in &n.attrs {
        if let AttrValue::Str(s) = v {
            if !is_plain_token(s) {
                return Err(GraphError::invalid(
                    &n.id,
                    format!("attribute `{k}` has unsupported string value `{s}`"),
                ));
            }
        }
    }
    let Some(schema) = n.op.schema() else {
        return Ok(());
    };
    for (name, kind) in schema.required {
        match n.attrs.get(*name) {
            None => {
                return Err(GraphError::invalid(
                    &n.id,
                    format!("missing required attribute `{name}` for {}", n.op),
                ))
            }
            Some(v) if v.kind() != *kind => {
                return Err(GraphError::invalid(&n.id, format!("attribute `{name}` has wrong type")))
            }
            _ => {}
        }
    }
    for (k, v) in &n.attrs {
        match schema.kind_of(k) {
            None => {
                return Err(GraphError::invalid(
                    &n.id,
                    format!("unknown attribute `{k}` for {}", n.op),
                ))
            }
            Some(kind) if kind != v.kind() => {
                return Err(GraphError::invalid(&n.id, format!("attribute `{k}` has wrong type")))
            }
            _ => {}
        }
    }
    let positive = |name: &str, min: i64| -> Result<(), GraphError> {
        match n.attrs.get(name).and_then(AttrValue::as_int) {
            Some(v) if v < min => Err(GraphError::invalid(
                &n.id,
                format!("attribute `{name}` must be >= {min}, got {v}"),
            )),
            _ => Ok(()),
        }
    };
    positive("kernel", 1)?;
    positive("stride", 1)?;
    positive("padding", 0)?;
    positive("out_channels", 1)?;
    positive("out_features", 1)?;
    if let Some(b) = n.attrs.get("bias").and_then(AttrValue::as_int) {
        if b != 0 && b != 1 {
            return Err(GraphError::invalid(&n.id, "attribute `bias` must be 0 or 1"));
        }
    }
    Ok(())
}

fn validate_arity(n: &GraphNode) -> Result<(), GraphError> {
    let (ins, outs) = (n.inputs.len(), n.outputs.len());
    let bad = |msg: String| Err(GraphError::invalid(&n.id, msg));
    if outs == 0 {
        return bad("node has no outputs".into());
    }
    let mut dedup = HashSet::new();
    if !n.outputs.iter().all(|o| dedup.insert(o)) {
        return bad("node lists the same output edge twice".into());
    }
    match &n.op {
        OpKind::Add | OpKind::Mul => {
            if !(1..=2).contains(&ins) || outs != 1 {
                return bad(format!("{} takes 1 or 2 inputs and 1 output", n.op));
            }
        }
        OpKind::MatMul => {
            if !(1..=2).contains(&ins) || outs != 1 {
                return bad("matmul takes 1 or 2 inputs and 1 output".into());
            }
            if ins == 1 && !n.attrs.contains_key("out_features") {
                return bad("single-input matmul requires `out_features`".into());
            }
            if ins == 2 && n.attrs.contains_key("out_features") {
                return bad("two-input matmul must not carry `out_features`".into());
            }
        }
        OpKind::Concat => {
            if ins == 0 || outs != 1 {
                return bad("concat takes at least one input and 1 output".into());
            }
        }
        OpKind::Split => {
            let sizes = n.attrs.get("sizes").and_then(AttrValue::as_ints).unwrap_or(&[]);
            if ins != 1 || outs != sizes.len() {
                return bad("split takes 1 input and one output per entry of `sizes`".into());
            }
        }
        OpKind::Custom(_) => {
            if ins == 0 {
                return bad("custom op needs at least one input".into());
            }
        }
        _ => {
            if ins != 1 || outs != 1 {
                return bad(format!("{} takes 1 input and 1 output", n.op));
            }
        }
    }
    Ok(())
}
