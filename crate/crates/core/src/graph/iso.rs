use std::collections::hash_map::DefaultHasher;
use std::fmt::Write;
use std::hash::{Hash, Hasher};

use super::ComputationGraph;

fn h<T: Hash>(v: &T) -> u64 {
    let mut s = DefaultHasher::new();
    v.hash(&mut s);
    s.finish()
}

fn shape_text(g: &ComputationGraph, edge: &str) -> String {
    g.edge_shape(edge).map(|s| s.to_string()).unwrap_or_else(|| "?".into())
}

/// Operator kind with attributes, plus the declared shapes of every incident edge.
fn node_label(g: &ComputationGraph, i: usize) -> String {
    let n = &g.nodes()[i];
    let mut s = n.op.name().into_owned();
    s.push('{');
    for (k, v) in &n.attrs {
        let _ = write!(s, "{k}={v};");
    }
    s.push('}');
    for e in &n.inputs {
        let _ = write!(s, "<{}", shape_text(g, e));
    }
    for e in &n.outputs {
        let _ = write!(s, ">{}", shape_text(g, e));
    }
    s
}

/// Id-free canonical text of a graph.
///
/// Nodes are ordered by topological layer and then by a structural signature that combines each
/// node's label with the signatures of its ancestry (ordered inputs) and of its descendants
/// (consumer slots, graph-output positions). Edges are renamed after their producer's canonical
/// position, so two graphs that differ only in node or edge ids yield the same text.
pub fn canonical_form(g: &ComputationGraph) -> String {
    let n = g.nodes().len();
    let labels: Vec<String> = (0..n).map(|i| node_label(g, i)).collect();
    let input_pos = |e: &str| g.inputs().iter().position(|x| x == e);
    let output_slot = |p: usize, e: &str| g.nodes()[p].outputs.iter().position(|x| x == e).unwrap();

    let mut layer = vec![0usize; n];
    let mut fwd = vec![0u64; n];
    for &i in g.topo_order() {
        let mut parts: Vec<(u64, usize)> = Vec::new();
        for e in &g.nodes()[i].inputs {
            match g.producer(e) {
                Some(p) => {
                    layer[i] = layer[i].max(layer[p] + 1);
                    parts.push((fwd[p], output_slot(p, e)));
                }
                None => parts.push((h(&("input", input_pos(e), shape_text(g, e))), 0)),
            }
        }
        fwd[i] = h(&(&labels[i], parts));
    }

    let mut bwd = vec![0u64; n];
    for &i in g.topo_order().iter().rev() {
        let mut per_output = Vec::new();
        for e in &g.nodes()[i].outputs {
            let mut uses: Vec<(u64, usize)> = Vec::new();
            for &c in g.consumers(e) {
                for (slot, x) in g.nodes()[c].inputs.iter().enumerate() {
                    if x == e {
                        uses.push((bwd[c], slot));
                    }
                }
            }
            uses.sort_unstable();
            let outs: Vec<usize> =
                g.outputs().iter().enumerate().filter(|(_, o)| *o == e).map(|(k, _)| k).collect();
            per_output.push((uses, outs));
        }
        bwd[i] = h(&(&labels[i], per_output));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (layer[i], fwd[i], bwd[i], i));
    let mut canon_pos = vec![0usize; n];
    for (k, &i) in order.iter().enumerate() {
        canon_pos[i] = k;
    }
    let edge_name = |e: &str| -> String {
        match g.producer(e) {
            Some(p) => format!("n{}.{}", canon_pos[p], output_slot(p, e)),
            None => format!("I{}", input_pos(e).unwrap()),
        }
    };

    let mut out = String::new();
    for (k, e) in g.inputs().iter().enumerate() {
        let _ = writeln!(out, "input I{k} {}", shape_text(g, e));
    }
    for (k, &i) in order.iter().enumerate() {
        let ins: Vec<String> = g.nodes()[i].inputs.iter().map(|e| edge_name(e)).collect();
        let _ = writeln!(out, "node n{k} {} ({})", labels[i], ins.join(","));
    }
    let outs: Vec<String> = g.outputs().iter().map(|e| edge_name(e)).collect();
    let _ = writeln!(out, "outputs {}", outs.join(","));
    out
}

/// True iff the graphs are equal up to renaming of node and edge ids.
pub fn graph_isomorphic(a: &ComputationGraph, b: &ComputationGraph) -> bool {
    a.nodes().len() == b.nodes().len()
        && a.edges().len() == b.edges().len()
        && a.inputs().len() == b.inputs().len()
        && a.outputs().len() == b.outputs().len()
        && canonical_form(a) == canonical_form(b)
}
