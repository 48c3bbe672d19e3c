use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::sync::Arc;

use petgraph::algo::dominators::{simple_fast, Dominators};
use petgraph::graph::{DiGraph, NodeIndex};

use crate::graph::{ComputationGraph, TensorShape};
use crate::ir::deduce::deduce;
use crate::ir::{ModuleKind, TailorModule, DEFAULT_BLOCK};

use super::CompileError;

/// Meta shape of every edge, deduced node by node and checked against declared shapes.
pub(crate) fn propagate(g: &ComputationGraph) -> Result<HashMap<String, TensorShape>, CompileError> {
    let mut shapes = HashMap::new();
    for e in g.inputs() {
        let s = g
            .edge_shape(e)
            .ok_or_else(|| CompileError::Shape { node: e.clone(), reason: "graph inputs need a declared shape".into() })?;
        shapes.insert(e.clone(), s.clone());
    }
    for &i in g.topo_order() {
        let n = &g.nodes()[i];
        let ins: Vec<&TensorShape> = n.inputs.iter().map(|e| &shapes[e]).collect();
        let outs = deduce(&n.op, &n.attrs, &ins, n.outputs.len())
            .map_err(|reason| CompileError::Shape { node: n.id.clone(), reason })?;
        for (e, s) in n.outputs.iter().zip(outs) {
            if let Some(declared) = g.edge_shape(e) {
                if declared != &s {
                    return Err(CompileError::DeclaredMismatch {
                        edge: e.clone(),
                        declared: declared.clone(),
                        inferred: s,
                    });
                }
            }
            shapes.insert(e.clone(), s);
        }
    }
    Ok(shapes)
}

/// Post-dominator tree of the graph, rooted at a virtual sink fed by every graph output and every
/// node whose outputs are unused.
struct PostDom {
    sink: usize,
    dom: Dominators<NodeIndex>,
}

impl PostDom {
    fn new(g: &ComputationGraph) -> Self {
        let n = g.nodes().len();
        let mut rev: DiGraph<(), ()> = DiGraph::with_capacity(n + 1, n * 2);
        for _ in 0..=n {
            rev.add_node(());
        }
        for (u, node) in g.nodes().iter().enumerate() {
            let mut used = false;
            for e in &node.outputs {
                for &v in g.consumers(e) {
                    rev.update_edge(NodeIndex::new(v), NodeIndex::new(u), ());
                    used = true;
                }
                if g.outputs().contains(e) {
                    rev.update_edge(NodeIndex::new(n), NodeIndex::new(u), ());
                    used = true;
                }
            }
            if !used {
                rev.update_edge(NodeIndex::new(n), NodeIndex::new(u), ());
            }
        }
        PostDom { sink: n, dom: simple_fast(&rev, NodeIndex::new(n)) }
    }

    /// `u` followed by its post-dominators, ending at the sink.
    fn chain(&self, u: usize) -> Vec<usize> {
        self.dom
            .dominators(NodeIndex::new(u))
            .map(|it| it.map(|x| x.index()).collect())
            .unwrap_or_else(|| vec![u, self.sink])
    }

    fn nearest_common(&self, nodes: &BTreeSet<usize>) -> usize {
        let mut iter = nodes.iter();
        let first = self.chain(*iter.next().unwrap());
        let others: Vec<BTreeSet<usize>> = iter.map(|&c| self.chain(c).into_iter().collect()).collect();
        *first.iter().find(|x| others.iter().all(|o| o.contains(x))).unwrap_or(&self.sink)
    }
}

fn forward_reach(g: &ComputationGraph, from: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut seen = from.clone();
    let mut stack: Vec<usize> = from.iter().copied().collect();
    while let Some(u) = stack.pop() {
        for e in &g.nodes()[u].outputs {
            for &v in g.consumers(e) {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
    }
    seen
}

fn backward_reach(g: &ComputationGraph, to: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([to]);
    let mut stack = vec![to];
    while let Some(u) = stack.pop() {
        for e in &g.nodes()[u].inputs {
            if let Some(p) = g.producer(e) {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
    }
    seen
}

#[derive(Clone, Debug)]
pub(crate) struct Region {
    pub nodes: BTreeSet<usize>,
    pub entry: String,
    pub exit: String,
}

/// Fork-join regions: each fan-out (an edge with several consumers, or a node with several
/// outputs) traced to its nearest common post-dominator. Nested regions are absorbed by their
/// enclosing region; partially overlapping ones keep the larger.
pub(crate) fn fork_join_regions(g: &ComputationGraph) -> Vec<Region> {
    let pd = PostDom::new(g);
    let mut found: Vec<Region> = Vec::new();
    let close = |consumers: BTreeSet<usize>, seed: Option<usize>, entry: &str, found: &mut Vec<Region>| {
        if consumers.is_empty() {
            return;
        }
        let join = pd.nearest_common(&consumers);
        if join == pd.sink || g.nodes()[join].outputs.len() != 1 {
            return;
        }
        let mut nodes: BTreeSet<usize> =
            forward_reach(g, &consumers).intersection(&backward_reach(g, join)).copied().collect();
        nodes.extend(seed);
        let single_entry = nodes.iter().all(|&u| {
            g.nodes()[u].inputs.iter().all(|e| e == entry || g.producer(e).is_some_and(|p| nodes.contains(&p)))
        });
        if single_entry {
            found.push(Region { nodes, entry: entry.to_string(), exit: g.nodes()[join].outputs[0].clone() });
        }
    };
    let edges = g.inputs().iter().chain(g.nodes().iter().flat_map(|n| n.outputs.iter()));
    for e in edges {
        let consumers: BTreeSet<usize> = g.consumers(e).iter().copied().collect();
        if consumers.len() >= 2 {
            close(consumers, None, e, &mut found);
        }
    }
    for (u, n) in g.nodes().iter().enumerate() {
        let distinct: BTreeSet<&String> = n.inputs.iter().collect();
        if n.outputs.len() < 2 || distinct.len() != 1 || n.outputs.iter().any(|e| g.outputs().contains(e)) {
            continue;
        }
        let consumers: BTreeSet<usize> = n.outputs.iter().flat_map(|e| g.consumers(e).iter().copied()).collect();
        close(consumers, Some(u), &n.inputs[0], &mut found);
    }
    found.sort_by(|a, b| b.nodes.len().cmp(&a.nodes.len()).then_with(|| a.nodes.cmp(&b.nodes)));
    let mut accepted: Vec<Region> = Vec::new();
    for r in found {
        if accepted.iter().all(|a| a.nodes.is_disjoint(&r.nodes)) {
            accepted.push(r);
        }
    }
    accepted
}

/// Orders items (sets of node indices) topologically over the quotient graph, breaking ties by
/// the earliest member in the graph's topological order.
pub(crate) fn order_items(g: &ComputationGraph, items: &[Vec<usize>]) -> Vec<usize> {
    let mut pos = vec![0; g.nodes().len()];
    for (k, &i) in g.topo_order().iter().enumerate() {
        pos[i] = k;
    }
    let mut owner = vec![0; g.nodes().len()];
    for (k, it) in items.iter().enumerate() {
        for &u in it {
            owner[u] = k;
        }
    }
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); items.len()];
    let mut indeg = vec![0usize; items.len()];
    for (u, n) in g.nodes().iter().enumerate() {
        for e in &n.outputs {
            for &v in g.consumers(e) {
                let (a, b) = (owner[u], owner[v]);
                if a != b && succ[a].insert(b) {
                    indeg[b] += 1;
                }
            }
        }
    }
    let key = |k: usize| items[k].iter().map(|&u| pos[u]).min().unwrap_or(usize::MAX);
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> =
        (0..items.len()).filter(|&k| indeg[k] == 0).map(|k| Reverse((key(k), k))).collect();
    let mut out = Vec::with_capacity(items.len());
    while let Some(Reverse((_, k))) = ready.pop() {
        out.push(k);
        for &b in &succ[k] {
            indeg[b] -= 1;
            if indeg[b] == 0 {
                ready.push(Reverse((key(b), b)));
            }
        }
    }
    debug_assert_eq!(out.len(), items.len(), "regions are convex, so the quotient is acyclic");
    out
}

pub(crate) fn leaf_of(g: &ComputationGraph, u: usize) -> TailorModule {
    TailorModule::leaf(Arc::new(g.nodes()[u].clone()))
}

pub(crate) fn default_block(g: &ComputationGraph, r: &Region) -> TailorModule {
    let mut pos = vec![0; g.nodes().len()];
    for (k, &i) in g.topo_order().iter().enumerate() {
        pos[i] = k;
    }
    let mut members: Vec<usize> = r.nodes.iter().copied().collect();
    members.sort_by_key(|&u| pos[u]);
    let mut b = TailorModule::group(
        ModuleKind::Block,
        members.iter().map(|&u| leaf_of(g, u)).collect(),
        (r.entry.clone(), r.exit.clone()),
    );
    b.template = Some(DEFAULT_BLOCK.to_string());
    b
}

/// Step 1: maps every node to an operator or static-bypass module and groups fork-join regions
/// into `DefaultBlock`s. The result is in topological order.
pub fn parse_operators(g: &ComputationGraph) -> Vec<TailorModule> {
    let regions = fork_join_regions(g);
    let mut grouped = vec![None; g.nodes().len()];
    for (k, r) in regions.iter().enumerate() {
        for &u in &r.nodes {
            grouped[u] = Some(k);
        }
    }
    let mut items: Vec<Vec<usize>> = regions.iter().map(|r| r.nodes.iter().copied().collect()).collect();
    let loose: Vec<usize> = (0..g.nodes().len()).filter(|&u| grouped[u].is_none()).collect();
    items.extend(loose.iter().map(|&u| vec![u]));
    order_items(g, &items)
        .into_iter()
        .map(|k| if k < regions.len() { default_block(g, &regions[k]) } else { leaf_of(g, loose[k - regions.len()]) })
        .collect()
}
